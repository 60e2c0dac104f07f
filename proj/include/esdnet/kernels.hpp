#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "esdnet/tensor.hpp"

// Forward and backward kernels for the operation set the network needs.
// Every kernel accumulates each output element in a fixed sequential order,
// so results are bit-identical across runs.

namespace esdnet {

struct ConvSpec {
  int stride = 1;
  int dilation = 1;
  int padding = 0;
};

inline int conv_out_extent(int in, int k, const ConvSpec& sp) {
  return (in + 2 * sp.padding - sp.dilation * (k - 1) - 1) / sp.stride + 1;
}

namespace detail {

// Valid output range [o0, o1] (inclusive) such that
// 0 <= o*stride + base < in for all o in range. Empty if o0 > o1.
inline void valid_out_range(int in, int out, int stride, int base, int& o0, int& o1) {
  o0 = base >= 0 ? 0 : (-base + stride - 1) / stride;
  int hi = in - 1 - base;
  o1 = hi < 0 ? -1 : std::min(out - 1, hi / stride);
}

}  // namespace detail

// ---------------------------------------------------------------- conv2d

template <class T>
TensorT<T> conv2d_fwd(const TensorT<T>& x, const TensorT<T>& k,
                      const TensorT<T>* bias, const ConvSpec& sp) {
  if (x.rank() != 4 || k.rank() != 4)
    throw ContractError("conv2d: input and kernel must be rank-4");
  if (sp.stride < 1 || sp.dilation < 1 || sp.padding < 0)
    throw ContractError("conv2d: stride/dilation must be >= 1, padding >= 0");
  const int N = x.n(), Ci = x.c(), H = x.h(), W = x.w();
  const int Co = k.dim(0), Kh = k.dim(2), Kw = k.dim(3);
  if (k.dim(1) != Ci)
    throw ContractError("conv2d: kernel expects " + std::to_string(k.dim(1)) +
                        " input channels, got " + std::to_string(Ci));
  if (bias && (bias->rank() != 1 || bias->dim(0) != Co))
    throw ContractError("conv2d: bias shape mismatch");
  const int Ho = conv_out_extent(H, Kh, sp);
  const int Wo = conv_out_extent(W, Kw, sp);
  if (Ho < 1 || Wo < 1) throw ContractError("conv2d: output extent < 1");

  TensorT<T> out({N, Co, Ho, Wo});
  const int s = sp.stride, d = sp.dilation, p = sp.padding;
  for (int n = 0; n < N; ++n) {
    for (int o = 0; o < Co; ++o) {
      T* outp = &out.at(n, o, 0, 0);
      if (bias) {
        const T b = bias->data[std::size_t(o)];
        std::fill(outp, outp + std::int64_t(Ho) * Wo, b);
      }
      for (int i = 0; i < Ci; ++i) {
        const T* inp = &x.at(n, i, 0, 0);
        for (int ky = 0; ky < Kh; ++ky) {
          const int ybase = ky * d - p;
          int y0, y1;
          detail::valid_out_range(H, Ho, s, ybase, y0, y1);
          for (int kx = 0; kx < Kw; ++kx) {
            const T wv = k.at(o, i, ky, kx);
            const int xbase = kx * d - p;
            int x0, x1;
            detail::valid_out_range(W, Wo, s, xbase, x0, x1);
            if (x0 > x1) continue;
            for (int y = y0; y <= y1; ++y) {
              const T* src = inp + std::int64_t(y * s + ybase) * W + (x0 * s + xbase);
              T* dst = outp + std::int64_t(y) * Wo + x0;
              const int len = x1 - x0 + 1;
              if (s == 1) {
                for (int t = 0; t < len; ++t) dst[t] += wv * src[t];
              } else {
                for (int t = 0; t < len; ++t) dst[t] += wv * src[std::int64_t(t) * s];
              }
            }
          }
        }
      }
    }
  }
  return out;
}

template <class T>
TensorT<T> conv2d_bwd_input(const TensorT<T>& gy, const TensorT<T>& k,
                            const ConvSpec& sp, const std::vector<int>& xshape) {
  const int N = gy.n(), Co = gy.c(), Ho = gy.h(), Wo = gy.w();
  const int Ci = k.dim(1), Kh = k.dim(2), Kw = k.dim(3);
  const int H = xshape[2], W = xshape[3];
  TensorT<T> gx(xshape);
  const int s = sp.stride, d = sp.dilation, p = sp.padding;
  for (int n = 0; n < N; ++n) {
    for (int i = 0; i < Ci; ++i) {
      T* gxp = &gx.at(n, i, 0, 0);
      for (int o = 0; o < Co; ++o) {
        const T* gyp = &gy.at(n, o, 0, 0);
        for (int ky = 0; ky < Kh; ++ky) {
          const int ybase = ky * d - p;
          int y0, y1;
          detail::valid_out_range(H, Ho, s, ybase, y0, y1);
          for (int kx = 0; kx < Kw; ++kx) {
            const T wv = k.at(o, i, ky, kx);
            const int xbase = kx * d - p;
            int x0, x1;
            detail::valid_out_range(W, Wo, s, xbase, x0, x1);
            if (x0 > x1) continue;
            for (int y = y0; y <= y1; ++y) {
              T* dst = gxp + std::int64_t(y * s + ybase) * W + (x0 * s + xbase);
              const T* src = gyp + std::int64_t(y) * Wo + x0;
              const int len = x1 - x0 + 1;
              if (s == 1) {
                for (int t = 0; t < len; ++t) dst[t] += wv * src[t];
              } else {
                for (int t = 0; t < len; ++t) dst[std::int64_t(t) * s] += wv * src[t];
              }
            }
          }
        }
      }
    }
  }
  return gx;
}

template <class T>
TensorT<T> conv2d_bwd_weight(const TensorT<T>& gy, const TensorT<T>& x,
                             const ConvSpec& sp, const std::vector<int>& kshape) {
  const int N = gy.n(), Ho = gy.h(), Wo = gy.w();
  const int H = x.h(), W = x.w();
  const int Co = kshape[0], Ci = kshape[1], Kh = kshape[2], Kw = kshape[3];
  TensorT<T> gk(kshape);
  const int s = sp.stride, d = sp.dilation, p = sp.padding;
  for (int o = 0; o < Co; ++o) {
    for (int i = 0; i < Ci; ++i) {
      for (int ky = 0; ky < Kh; ++ky) {
        const int ybase = ky * d - p;
        int y0, y1;
        detail::valid_out_range(H, Ho, s, ybase, y0, y1);
        for (int kx = 0; kx < Kw; ++kx) {
          const int xbase = kx * d - p;
          int x0, x1;
          detail::valid_out_range(W, Wo, s, xbase, x0, x1);
          double acc = 0.0;
          if (x0 <= x1) {
            for (int n = 0; n < N; ++n) {
              const T* gyp = &gy.at(n, o, 0, 0);
              const T* inp = &x.at(n, i, 0, 0);
              for (int y = y0; y <= y1; ++y) {
                const T* g = gyp + std::int64_t(y) * Wo + x0;
                const T* v = inp + std::int64_t(y * s + ybase) * W + (x0 * s + xbase);
                const int len = x1 - x0 + 1;
                T rowacc = 0;
                if (s == 1) {
                  for (int t = 0; t < len; ++t) rowacc += g[t] * v[t];
                } else {
                  for (int t = 0; t < len; ++t) rowacc += g[t] * v[std::int64_t(t) * s];
                }
                acc += double(rowacc);
              }
            }
          }
          gk.at(o, i, ky, kx) = T(acc);
        }
      }
    }
  }
  return gk;
}

template <class T>
TensorT<T> conv2d_bwd_bias(const TensorT<T>& gy) {
  const int N = gy.n(), Co = gy.c();
  const std::int64_t plane = std::int64_t(gy.h()) * gy.w();
  TensorT<T> gb({Co});
  for (int o = 0; o < Co; ++o) {
    double acc = 0.0;
    for (int n = 0; n < N; ++n) {
      const T* g = &gy.at(n, o, 0, 0);
      for (std::int64_t t = 0; t < plane; ++t) acc += double(g[t]);
    }
    gb.data[std::size_t(o)] = T(acc);
  }
  return gb;
}

// ---------------------------------------------------------- pixel shuffle

// Space-to-channel permutation: out[n, c*r^2 + dy*r + dx, y, x] = in[n, c, y*r+dy, x*r+dx].
template <class T>
TensorT<T> pixel_shuffle_down(const TensorT<T>& x, int r) {
  if (x.rank() != 4) throw ContractError("pixel_shuffle: rank-4 input required");
  if (r < 1) throw ContractError("pixel_shuffle: r must be >= 1");
  const int N = x.n(), C = x.c(), H = x.h(), W = x.w();
  if (H % r != 0 || W % r != 0)
    throw ContractError("pixel_shuffle down: H and W must be divisible by r");
  TensorT<T> out({N, C * r * r, H / r, W / r});
  const int Ho = H / r, Wo = W / r;
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c)
      for (int dy = 0; dy < r; ++dy)
        for (int dx = 0; dx < r; ++dx) {
          const int co = c * r * r + dy * r + dx;
          for (int y = 0; y < Ho; ++y) {
            const T* src = &x.at(n, c, y * r + dy, dx);
            T* dst = &out.at(n, co, y, 0);
            for (int xx = 0; xx < Wo; ++xx) dst[xx] = src[std::int64_t(xx) * r];
          }
        }
  return out;
}

// Exact inverse of pixel_shuffle_down.
template <class T>
TensorT<T> pixel_shuffle_up(const TensorT<T>& x, int r) {
  if (x.rank() != 4) throw ContractError("pixel_shuffle: rank-4 input required");
  if (r < 1) throw ContractError("pixel_shuffle: r must be >= 1");
  const int N = x.n(), C = x.c(), H = x.h(), W = x.w();
  if (C % (r * r) != 0)
    throw ContractError("pixel_shuffle up: C must be divisible by r^2");
  TensorT<T> out({N, C / (r * r), H * r, W * r});
  const int Co = C / (r * r);
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < Co; ++c)
      for (int dy = 0; dy < r; ++dy)
        for (int dx = 0; dx < r; ++dx) {
          const int ci = c * r * r + dy * r + dx;
          for (int y = 0; y < H; ++y) {
            const T* src = &x.at(n, ci, y, 0);
            T* dst = &out.at(n, c, y * r + dy, dx);
            for (int xx = 0; xx < W; ++xx) dst[std::int64_t(xx) * r] = src[xx];
          }
        }
  return out;
}

// ------------------------------------------------------- bilinear resize

// Half-pixel centers with border clamping. The lerp form a + t*(b-a) keeps
// equal-size resizes and constant inputs exact.
struct ResizeTaps {
  std::vector<int> lo, hi;
  std::vector<double> t;
};

inline ResizeTaps resize_taps(int in, int out) {
  ResizeTaps taps;
  taps.lo.resize(std::size_t(out));
  taps.hi.resize(std::size_t(out));
  taps.t.resize(std::size_t(out));
  const double scale = double(in) / double(out);
  for (int o = 0; o < out; ++o) {
    double src = (o + 0.5) * scale - 0.5;
    double f = std::floor(src);
    int lo = int(f);
    double t = src - f;
    if (lo < 0) { lo = 0; t = 0.0; }
    if (lo >= in - 1) { lo = in - 1; t = 0.0; }
    taps.lo[std::size_t(o)] = lo;
    taps.hi[std::size_t(o)] = std::min(lo + 1, in - 1);
    taps.t[std::size_t(o)] = t;
  }
  return taps;
}

template <class T>
TensorT<T> resize_bilinear_fwd(const TensorT<T>& x, int oh, int ow) {
  if (x.rank() != 4) throw ContractError("resize_bilinear: rank-4 input required");
  if (oh < 1 || ow < 1) throw ContractError("resize_bilinear: output extents must be >= 1");
  const int N = x.n(), C = x.c(), H = x.h(), W = x.w();
  if (oh == H && ow == W) return x;  // identity, bit-exact
  TensorT<T> out({N, C, oh, ow});
  const ResizeTaps ty = resize_taps(H, oh);
  const ResizeTaps tx = resize_taps(W, ow);
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const T* inp = &x.at(n, c, 0, 0);
      T* outp = &out.at(n, c, 0, 0);
      for (int y = 0; y < oh; ++y) {
        const T* r0 = inp + std::int64_t(ty.lo[std::size_t(y)]) * W;
        const T* r1 = inp + std::int64_t(ty.hi[std::size_t(y)]) * W;
        const T wy = T(ty.t[std::size_t(y)]);
        T* dst = outp + std::int64_t(y) * ow;
        for (int xx = 0; xx < ow; ++xx) {
          const int a = tx.lo[std::size_t(xx)], b = tx.hi[std::size_t(xx)];
          const T wx = T(tx.t[std::size_t(xx)]);
          const T top = r0[a] + wx * (r0[b] - r0[a]);
          const T bot = r1[a] + wx * (r1[b] - r1[a]);
          dst[xx] = top + wy * (bot - top);
        }
      }
    }
  return out;
}

template <class T>
TensorT<T> resize_bilinear_bwd(const TensorT<T>& gy, const std::vector<int>& xshape) {
  const int N = gy.n(), C = gy.c(), oh = gy.h(), ow = gy.w();
  const int H = xshape[2], W = xshape[3];
  if (oh == H && ow == W) return gy;
  TensorT<T> gx(xshape);
  const ResizeTaps ty = resize_taps(H, oh);
  const ResizeTaps tx = resize_taps(W, ow);
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      T* gxp = &gx.at(n, c, 0, 0);
      const T* gyp = &gy.at(n, c, 0, 0);
      for (int y = 0; y < oh; ++y) {
        const int ya = ty.lo[std::size_t(y)], yb = ty.hi[std::size_t(y)];
        const T wy = T(ty.t[std::size_t(y)]);
        const T* g = gyp + std::int64_t(y) * ow;
        for (int xx = 0; xx < ow; ++xx) {
          const int xa = tx.lo[std::size_t(xx)], xb = tx.hi[std::size_t(xx)];
          const T wx = T(tx.t[std::size_t(xx)]);
          const T gv = g[xx];
          gxp[std::int64_t(ya) * W + xa] += (T(1) - wy) * (T(1) - wx) * gv;
          gxp[std::int64_t(ya) * W + xb] += (T(1) - wy) * wx * gv;
          gxp[std::int64_t(yb) * W + xa] += wy * (T(1) - wx) * gv;
          gxp[std::int64_t(yb) * W + xb] += wy * wx * gv;
        }
      }
    }
  return gx;
}

// ------------------------------------------------------------- pooling

template <class T>
TensorT<T> global_avg_pool_fwd(const TensorT<T>& x) {
  if (x.rank() != 4) throw ContractError("global_avg_pool: rank-4 input required");
  const int N = x.n(), C = x.c();
  const std::int64_t plane = std::int64_t(x.h()) * x.w();
  TensorT<T> out({N, C});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const T* p = &x.at(n, c, 0, 0);
      double acc = 0.0;
      for (std::int64_t t = 0; t < plane; ++t) acc += double(p[t]);
      out.data[std::size_t(n) * C + c] = T(acc / double(plane));
    }
  return out;
}

template <class T>
TensorT<T> global_avg_pool_bwd(const TensorT<T>& gy, const std::vector<int>& xshape) {
  const int N = xshape[0], C = xshape[1];
  const std::int64_t plane = std::int64_t(xshape[2]) * xshape[3];
  TensorT<T> gx(xshape);
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const T g = gy.data[std::size_t(n) * C + c] / T(plane);
      T* p = &gx.data[std::size_t((std::int64_t(n) * C + c) * plane)];
      for (std::int64_t t = 0; t < plane; ++t) p[t] = g;
    }
  return gx;
}

// 2x2 stride-2 max pool. Ties resolve to the first element in row-major
// window order so backward routing is deterministic.
template <class T>
TensorT<T> maxpool2_fwd(const TensorT<T>& x, std::vector<std::uint8_t>& argmax) {
  if (x.rank() != 4) throw ContractError("maxpool2: rank-4 input required");
  const int N = x.n(), C = x.c(), H = x.h(), W = x.w();
  if (H % 2 != 0 || W % 2 != 0)
    throw ContractError("maxpool2: H and W must be even");
  const int Ho = H / 2, Wo = W / 2;
  TensorT<T> out({N, C, Ho, Wo});
  argmax.assign(out.data.size(), 0);
  std::int64_t oi = 0;
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const T* inp = &x.at(n, c, 0, 0);
      for (int y = 0; y < Ho; ++y)
        for (int xx = 0; xx < Wo; ++xx, ++oi) {
          const T* w0 = inp + std::int64_t(2 * y) * W + 2 * xx;
          const T* w1 = w0 + W;
          T best = w0[0];
          std::uint8_t arg = 0;
          if (w0[1] > best) { best = w0[1]; arg = 1; }
          if (w1[0] > best) { best = w1[0]; arg = 2; }
          if (w1[1] > best) { best = w1[1]; arg = 3; }
          out.data[std::size_t(oi)] = best;
          argmax[std::size_t(oi)] = arg;
        }
    }
  return out;
}

template <class T>
TensorT<T> maxpool2_bwd(const TensorT<T>& gy, const std::vector<std::uint8_t>& argmax,
                        const std::vector<int>& xshape) {
  const int N = xshape[0], C = xshape[1], H = xshape[2], W = xshape[3];
  const int Ho = H / 2, Wo = W / 2;
  TensorT<T> gx(xshape);
  std::int64_t oi = 0;
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      T* gxp = &gx.at(n, c, 0, 0);
      for (int y = 0; y < Ho; ++y)
        for (int xx = 0; xx < Wo; ++xx, ++oi) {
          const std::uint8_t a = argmax[std::size_t(oi)];
          const int iy = 2 * y + (a >> 1), ix = 2 * xx + (a & 1);
          gxp[std::int64_t(iy) * W + ix] += gy.data[std::size_t(oi)];
        }
    }
  return gx;
}

// -------------------------------------------------------------- affine

template <class T>
TensorT<T> affine_fwd(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b) {
  if (x.rank() != 2 || w.rank() != 2 || b.rank() != 1)
    throw ContractError("affine: expects x(N,Ci), w(Co,Ci), b(Co)");
  const int N = x.dim(0), Ci = x.dim(1), Co = w.dim(0);
  if (w.dim(1) != Ci || b.dim(0) != Co)
    throw ContractError("affine: dimension mismatch, x" + shape_str(x) +
                        " w" + shape_str(w) + " b" + shape_str(b));
  TensorT<T> out({N, Co});
  for (int n = 0; n < N; ++n) {
    const T* xv = &x.data[std::size_t(n) * Ci];
    for (int o = 0; o < Co; ++o) {
      const T* wv = &w.data[std::size_t(o) * Ci];
      T acc = b.data[std::size_t(o)];
      for (int i = 0; i < Ci; ++i) acc += xv[i] * wv[i];
      out.data[std::size_t(n) * Co + o] = acc;
    }
  }
  return out;
}

template <class T>
void affine_bwd(const TensorT<T>& gy, const TensorT<T>& x, const TensorT<T>& w,
                TensorT<T>* gx, TensorT<T>* gw, TensorT<T>* gb) {
  const int N = x.dim(0), Ci = x.dim(1), Co = w.dim(0);
  if (gx) {
    *gx = TensorT<T>({N, Ci});
    for (int n = 0; n < N; ++n)
      for (int o = 0; o < Co; ++o) {
        const T g = gy.data[std::size_t(n) * Co + o];
        const T* wv = &w.data[std::size_t(o) * Ci];
        T* dst = &gx->data[std::size_t(n) * Ci];
        for (int i = 0; i < Ci; ++i) dst[i] += g * wv[i];
      }
  }
  if (gw) {
    *gw = TensorT<T>({Co, Ci});
    for (int o = 0; o < Co; ++o)
      for (int n = 0; n < N; ++n) {
        const T g = gy.data[std::size_t(n) * Co + o];
        const T* xv = &x.data[std::size_t(n) * Ci];
        T* dst = &gw->data[std::size_t(o) * Ci];
        for (int i = 0; i < Ci; ++i) dst[i] += g * xv[i];
      }
  }
  if (gb) {
    *gb = TensorT<T>({Co});
    for (int o = 0; o < Co; ++o) {
      double acc = 0.0;
      for (int n = 0; n < N; ++n) acc += double(gy.data[std::size_t(n) * Co + o]);
      gb->data[std::size_t(o)] = T(acc);
    }
  }
}

// ----------------------------------------------------------- pointwise

template <class T>
TensorT<T> relu_fwd(const TensorT<T>& x) {
  TensorT<T> out = x;
  for (auto& v : out.data) v = v > T(0) ? v : T(0);
  return out;
}

template <class T>
TensorT<T> relu_bwd(const TensorT<T>& gy, const TensorT<T>& x) {
  TensorT<T> gx = gy;
  for (std::size_t i = 0; i < gx.data.size(); ++i)
    if (!(x.data[i] > T(0))) gx.data[i] = T(0);
  return gx;
}

template <class T>
TensorT<T> sigmoid_fwd(const TensorT<T>& x) {
  TensorT<T> out = x;
  for (auto& v : out.data) {
    if (v >= T(0)) {
      v = T(1) / (T(1) + std::exp(-v));
    } else {
      const T e = std::exp(v);
      v = e / (T(1) + e);
    }
  }
  return out;
}

template <class T>
TensorT<T> sigmoid_bwd(const TensorT<T>& gy, const TensorT<T>& y) {
  TensorT<T> gx = gy;
  for (std::size_t i = 0; i < gx.data.size(); ++i)
    gx.data[i] *= y.data[i] * (T(1) - y.data[i]);
  return gx;
}

template <class T>
TensorT<T> add_fwd(const TensorT<T>& a, const TensorT<T>& b) {
  if (!a.same_shape(b))
    throw ContractError("add: shape mismatch " + shape_str(a) + " vs " + shape_str(b));
  TensorT<T> out = a;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
  return out;
}

// a is N,C,H,W; weights are per-channel, either (C) shared across the batch
// or (N,C) per sample. Broadcast over the spatial dimensions.
template <class T>
TensorT<T> mul_channel_fwd(const TensorT<T>& a, const TensorT<T>& w) {
  if (a.rank() != 4) throw ContractError("mul_channel: rank-4 input required");
  const int N = a.n(), C = a.c();
  const std::int64_t plane = std::int64_t(a.h()) * a.w();
  const bool per_sample = w.rank() == 2;
  if (per_sample) {
    if (w.dim(0) != N || w.dim(1) != C)
      throw ContractError("mul_channel: weights (N,C) mismatch");
  } else if (w.rank() != 1 || w.dim(0) != C) {
    throw ContractError("mul_channel: weights must be (C) or (N,C) with C=" +
                        std::to_string(C) + ", got " + shape_str(w));
  }
  TensorT<T> out = a;
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const T wv = per_sample ? w.data[std::size_t(n) * C + c] : w.data[std::size_t(c)];
      T* p = &out.at(n, c, 0, 0);
      for (std::int64_t t = 0; t < plane; ++t) p[t] *= wv;
    }
  return out;
}

template <class T>
void mul_channel_bwd(const TensorT<T>& gy, const TensorT<T>& a, const TensorT<T>& w,
                     TensorT<T>* ga, TensorT<T>* gw) {
  const int N = a.n(), C = a.c();
  const std::int64_t plane = std::int64_t(a.h()) * a.w();
  const bool per_sample = w.rank() == 2;
  if (ga) {
    *ga = gy;
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c) {
        const T wv = per_sample ? w.data[std::size_t(n) * C + c] : w.data[std::size_t(c)];
        T* p = &ga->at(n, c, 0, 0);
        for (std::int64_t t = 0; t < plane; ++t) p[t] *= wv;
      }
  }
  if (gw) {
    *gw = TensorT<T>(w.shape);
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c) {
        const T* g = &gy.at(n, c, 0, 0);
        const T* av = &a.at(n, c, 0, 0);
        double acc = 0.0;
        for (std::int64_t t = 0; t < plane; ++t) acc += double(g[t]) * double(av[t]);
        if (per_sample)
          gw->data[std::size_t(n) * C + c] = T(acc);
        else
          gw->data[std::size_t(c)] += T(acc);
      }
  }
}

// Scalar mean absolute difference.
template <class T>
TensorT<T> l1_diff_fwd(const TensorT<T>& a, const TensorT<T>& b) {
  if (!a.same_shape(b))
    throw ContractError("l1_diff: shape mismatch " + shape_str(a) + " vs " + shape_str(b));
  double acc = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i)
    acc += std::abs(double(a.data[i]) - double(b.data[i]));
  TensorT<T> out({1});
  out.data[0] = T(acc / double(a.numel()));
  return out;
}

template <class T>
void l1_diff_bwd(const TensorT<T>& gy, const TensorT<T>& a, const TensorT<T>& b,
                 TensorT<T>* ga, TensorT<T>* gb) {
  const T g = gy.data[0] / T(a.numel());
  if (ga) *ga = TensorT<T>(a.shape);
  if (gb) *gb = TensorT<T>(b.shape);
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const T d = a.data[i] - b.data[i];
    const T s = d > T(0) ? g : (d < T(0) ? -g : T(0));
    if (ga) ga->data[i] = s;
    if (gb) gb->data[i] = -s;
  }
}

// ------------------------------------------------------ concat / slice

// Concatenate along axis 1 (channels for N,C,H,W; columns for N,C).
template <class T>
TensorT<T> concat_fwd(const std::vector<const TensorT<T>*>& parts) {
  if (parts.empty()) throw ContractError("concat: needs at least one part");
  const TensorT<T>& first = *parts[0];
  if (first.rank() != 2 && first.rank() != 4)
    throw ContractError("concat: rank-2 or rank-4 parts required");
  int ctotal = 0;
  for (const auto* p : parts) {
    if (p->rank() != first.rank() || p->dim(0) != first.dim(0))
      throw ContractError("concat: rank/batch mismatch");
    if (first.rank() == 4 && (p->h() != first.h() || p->w() != first.w()))
      throw ContractError("concat: spatial extents mismatch " + shape_str(*p) +
                          " vs " + shape_str(first));
    ctotal += p->dim(1);
  }
  std::vector<int> oshape = first.shape;
  oshape[1] = ctotal;
  TensorT<T> out(oshape);
  const int N = first.dim(0);
  const std::int64_t plane =
      first.rank() == 4 ? std::int64_t(first.h()) * first.w() : 1;
  for (int n = 0; n < N; ++n) {
    std::int64_t coff = 0;
    for (const auto* p : parts) {
      const int pc = p->dim(1);
      const T* src = &p->data[std::size_t(std::int64_t(n) * pc * plane)];
      T* dst = &out.data[std::size_t((std::int64_t(n) * ctotal + coff) * plane)];
      std::copy(src, src + std::int64_t(pc) * plane, dst);
      coff += pc;
    }
  }
  return out;
}

template <class T>
std::vector<TensorT<T>> concat_bwd(const TensorT<T>& gy,
                                   const std::vector<std::vector<int>>& part_shapes) {
  std::vector<TensorT<T>> grads;
  grads.reserve(part_shapes.size());
  for (const auto& s : part_shapes) grads.emplace_back(s);
  const int N = gy.dim(0);
  const int ctotal = gy.dim(1);
  const std::int64_t plane = gy.rank() == 4 ? std::int64_t(gy.h()) * gy.w() : 1;
  for (int n = 0; n < N; ++n) {
    std::int64_t coff = 0;
    for (auto& g : grads) {
      const int pc = g.dim(1);
      const T* src = &gy.data[std::size_t((std::int64_t(n) * ctotal + coff) * plane)];
      T* dst = &g.data[std::size_t(std::int64_t(n) * pc * plane)];
      std::copy(src, src + std::int64_t(pc) * plane, dst);
      coff += pc;
    }
  }
  return grads;
}

// Column slice of an N,C tensor.
template <class T>
TensorT<T> slice_cols_fwd(const TensorT<T>& x, int start, int len) {
  if (x.rank() != 2) throw ContractError("slice_cols: rank-2 input required");
  const int N = x.dim(0), C = x.dim(1);
  if (start < 0 || len < 1 || start + len > C)
    throw ContractError("slice_cols: range out of bounds");
  TensorT<T> out({N, len});
  for (int n = 0; n < N; ++n)
    std::copy(&x.data[std::size_t(n) * C + start],
              &x.data[std::size_t(n) * C + start + len],
              &out.data[std::size_t(n) * len]);
  return out;
}

template <class T>
TensorT<T> slice_cols_bwd(const TensorT<T>& gy, int start, const std::vector<int>& xshape) {
  const int N = xshape[0], C = xshape[1], len = gy.dim(1);
  TensorT<T> gx(xshape);
  for (int n = 0; n < N; ++n)
    std::copy(&gy.data[std::size_t(n) * len], &gy.data[std::size_t(n) * len + len],
              &gx.data[std::size_t(n) * C + start]);
  return gx;
}

// ------------------------------------------------------------ reduce

template <class T>
TensorT<T> sum_fwd(const TensorT<T>& x) {
  double acc = 0.0;
  for (const T v : x.data) acc += double(v);
  TensorT<T> out({1});
  out.data[0] = T(acc);
  return out;
}

template <class T>
TensorT<T> scale_fwd(const TensorT<T>& x, double s) {
  TensorT<T> out = x;
  for (auto& v : out.data) v = T(double(v) * s);
  return out;
}

template <class T>
bool all_finite(const TensorT<T>& x) {
  for (const T v : x.data)
    if (!std::isfinite(double(v))) return false;
  return true;
}

}  // namespace esdnet
