#include "esdnet/metrics.hpp"

#include <array>
#include <cmath>
#include <vector>

#include "esdnet/common.hpp"

namespace esdnet {

double psnr(const Tensor& a, const Tensor& b, double peak) {
  if (!a.same_shape(b))
    throw ContractError("psnr: shape mismatch " + shape_str(a) + " vs " + shape_str(b));
  if (peak <= 0) throw ContractError("psnr: peak must be positive");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = double(a.data[i]) - double(b.data[i]);
    acc += d * d;
  }
  const double mse = acc / double(a.numel());
  if (mse == 0.0) return 100.0;
  return std::min(100.0, 10.0 * std::log10(peak * peak / mse));
}

namespace {

constexpr int kWin = 11;

std::array<double, kWin> gaussian_taps() {
  std::array<double, kWin> w{};
  const double sigma = 1.5;
  double sum = 0.0;
  for (int i = 0; i < kWin; ++i) {
    const double d = i - (kWin - 1) / 2.0;
    w[std::size_t(i)] = std::exp(-d * d / (2.0 * sigma * sigma));
    sum += w[std::size_t(i)];
  }
  for (double& v : w) v /= sum;
  return w;
}

// Horizontal then vertical pass of the window filter over one plane,
// keeping only fully covered positions.
std::vector<double> window_filter(const std::vector<double>& img, int h, int w,
                                  const std::array<double, kWin>& taps) {
  const int wo = w - kWin + 1, ho = h - kWin + 1;
  std::vector<double> mid(std::size_t(h) * wo);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < wo; ++x) {
      double acc = 0.0;
      for (int k = 0; k < kWin; ++k)
        acc += taps[std::size_t(k)] * img[std::size_t(y) * w + x + k];
      mid[std::size_t(y) * wo + x] = acc;
    }
  std::vector<double> out(std::size_t(ho) * wo);
  for (int y = 0; y < ho; ++y)
    for (int x = 0; x < wo; ++x) {
      double acc = 0.0;
      for (int k = 0; k < kWin; ++k)
        acc += taps[std::size_t(k)] * mid[std::size_t(y + k) * wo + x];
      out[std::size_t(y) * wo + x] = acc;
    }
  return out;
}

}  // namespace

double ssim(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b))
    throw ContractError("ssim: shape mismatch " + shape_str(a) + " vs " + shape_str(b));
  if (a.rank() != 4) throw ContractError("ssim: rank-4 input required");
  const int N = a.n(), C = a.c(), H = a.h(), W = a.w();
  if (H < kWin || W < kWin)
    throw ContractError("ssim: image smaller than the 11x11 window");

  static const std::array<double, kWin> taps = gaussian_taps();
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const std::int64_t plane = std::int64_t(H) * W;

  double total = 0.0;
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const std::size_t np = static_cast<std::size_t>(plane);
      std::vector<double> x(np), y(np);
      std::vector<double> xx(np), yy(np), xy(np);
      const float* pa = &a.at(n, c, 0, 0);
      const float* pb = &b.at(n, c, 0, 0);
      for (std::int64_t i = 0; i < plane; ++i) {
        x[std::size_t(i)] = double(pa[i]);
        y[std::size_t(i)] = double(pb[i]);
        xx[std::size_t(i)] = x[std::size_t(i)] * x[std::size_t(i)];
        yy[std::size_t(i)] = y[std::size_t(i)] * y[std::size_t(i)];
        xy[std::size_t(i)] = x[std::size_t(i)] * y[std::size_t(i)];
      }
      const std::vector<double> mx = window_filter(x, H, W, taps);
      const std::vector<double> my = window_filter(y, H, W, taps);
      const std::vector<double> mxx = window_filter(xx, H, W, taps);
      const std::vector<double> myy = window_filter(yy, H, W, taps);
      const std::vector<double> mxy = window_filter(xy, H, W, taps);
      double acc = 0.0;
      for (std::size_t i = 0; i < mx.size(); ++i) {
        const double sx = mxx[i] - mx[i] * mx[i];
        const double sy = myy[i] - my[i] * my[i];
        const double sxy = mxy[i] - mx[i] * my[i];
        const double num = (2.0 * mx[i] * my[i] + c1) * (2.0 * sxy + c2);
        const double den = (mx[i] * mx[i] + my[i] * my[i] + c1) * (sx + sy + c2);
        acc += num / den;
      }
      total += acc / double(mx.size());
    }
  return total / double(N * C);
}

}  // namespace esdnet
