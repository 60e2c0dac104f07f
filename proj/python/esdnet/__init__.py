"""Python surface of the demoireing engine.

Everything heavy lives in the compiled _core module; this package just
re-exports it under stable names.
"""

from ._core import (
    ContractError,
    DataError,
    Model,
    ModelConfig,
    NumericError,
    TrainConfig,
    cosine_lr,
    gen_clean,
    gen_pair,
    load_png,
    psnr,
    run_cli,
    save_png,
    ssim,
    train_on_pairs,
)

__all__ = [
    "ContractError",
    "DataError",
    "Model",
    "ModelConfig",
    "NumericError",
    "TrainConfig",
    "cosine_lr",
    "gen_clean",
    "gen_pair",
    "load_png",
    "psnr",
    "run_cli",
    "save_png",
    "ssim",
    "train_on_pairs",
]
