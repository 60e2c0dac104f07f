#pragma once

#include "esdnet/tensor.hpp"

// Image quality metrics over N,C,H,W tensors in [0,1]. Both are computed in
// double precision and averaged over batch and channels.

namespace esdnet {

// 10*log10(peak^2 / MSE), capped at 100 dB; identical inputs report the cap.
double psnr(const Tensor& a, const Tensor& b, double peak = 1.0);

// Mean structural similarity over valid 11x11 Gaussian windows (sigma 1.5,
// K1 = 0.01, K2 = 0.03, dynamic range 1).
double ssim(const Tensor& a, const Tensor& b);

}  // namespace esdnet
