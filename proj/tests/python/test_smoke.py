"""Smoke checks for the compiled module. Runs standalone or under pytest."""

import math
import os
import tempfile

import numpy as np

import esdnet


def test_model_builds_and_counts():
    cfg = esdnet.ModelConfig()
    cfg.width_div = 4
    model = esdnet.Model.build(cfg, seed=3)
    assert model.param_count() > 100_000
    assert len(model.names) > 50

    full = esdnet.Model.build(esdnet.ModelConfig(), seed=3)
    assert full.param_count() == 5_934_156


def test_infer_shapes_and_determinism():
    cfg = esdnet.ModelConfig()
    cfg.width_div = 4
    model = esdnet.Model.build(cfg, seed=3)
    x = np.random.default_rng(0).random((1, 3, 32, 48), dtype=np.float32)
    y1 = model.infer(x)
    y2 = model.infer(x)
    assert y1.shape == (1, 3, 32, 48)
    assert np.array_equal(y1, y2)
    assert np.isfinite(y1).all()


def test_metrics():
    x = np.random.default_rng(1).random((1, 3, 24, 24), dtype=np.float32)
    assert esdnet.psnr(x, x) == 100.0
    assert esdnet.ssim(x, x) == 1.0
    noisy = np.clip(x + 0.1, 0.0, 1.0).astype(np.float32)
    assert esdnet.psnr(x, noisy) < 100.0


def test_synthesis_pair():
    clean, moire = esdnet.gen_pair(32, 32, seed=7)
    assert clean.shape == (1, 3, 32, 32)
    assert moire.shape == (1, 3, 32, 32)
    assert clean.min() >= 0.0 and clean.max() <= 1.0
    assert moire.min() >= 0.0 and moire.max() <= 1.0
    clean2, moire2 = esdnet.gen_pair(32, 32, seed=7)
    assert np.array_equal(clean, clean2)
    assert np.array_equal(moire, moire2)


def test_cosine_schedule():
    assert esdnet.cosine_lr(0.0) == 2e-4
    assert esdnet.cosine_lr(50.0) == 2e-4
    mid = esdnet.cosine_lr(25.0)
    assert math.isclose(mid, 0.5 * (2e-4 + 1e-6), rel_tol=1e-9)


def test_short_training_reduces_loss():
    cfg = esdnet.ModelConfig()
    cfg.width_div = 4
    model = esdnet.Model.build(cfg, seed=11)
    clean, moire = esdnet.gen_pair(32, 32, seed=5)
    tc = esdnet.TrainConfig()
    tc.total_epochs = 20
    tc.batch = 1
    tc.patch = 32
    tc.seed = 2
    losses = esdnet.train_on_pairs(model, [clean], [moire], tc)
    assert len(losses) == 20
    assert losses[-1] < losses[0]
    assert all(math.isfinite(v) for v in losses)


def test_weights_roundtrip():
    cfg = esdnet.ModelConfig()
    cfg.width_div = 4
    model = esdnet.Model.build(cfg, seed=9)
    x = np.random.default_rng(2).random((1, 3, 32, 32), dtype=np.float32)
    before = model.infer(x)
    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "m.esdw")
        model.save(path)
        other = esdnet.Model.build(cfg, seed=1)
        other.load(path)
        after = other.infer(x)
    assert np.array_equal(before, after)


def test_png_roundtrip():
    img = np.random.default_rng(3).random((1, 3, 8, 10), dtype=np.float32)
    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "img.png")
        esdnet.save_png(path, img)
        back = esdnet.load_png(path)
    assert back.shape == (1, 3, 8, 10)
    assert np.abs(back - img).max() <= 0.5 / 255.0 + 1e-7


def test_contract_error_is_typed():
    cfg = esdnet.ModelConfig()
    cfg.width_div = 3
    try:
        esdnet.Model.build(cfg, seed=1)
    except esdnet.ContractError:
        pass
    else:
        raise AssertionError("width_div 3 should be rejected")


def main():
    checks = [v for k, v in sorted(globals().items()) if k.startswith("test_")]
    for fn in checks:
        fn()
        print(f"ok {fn.__name__}")
    print(f"{len(checks)} python smoke checks passed")


if __name__ == "__main__":
    main()
