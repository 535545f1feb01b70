#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <random>
#include <utility>
#include <vector>

#include "stridezero/tensor.hpp"

namespace sz {

// Per-output linear index of the selected maximum, used to route pooling
// gradients.  kNoArg marks a window that contained no real pixel.
using ArgIndices = std::vector<int64_t>;
inline constexpr int64_t kNoArg = -1;

namespace detail {

// Kernels accept [C,H,W] or [N,C,H,W]; a rank-3 tensor is treated as a single
// batch element and the result is returned at the caller's rank.
struct Geom {
  int64_t n, c, h, w;
  bool batched;
};

template <typename T>
inline Geom geom(const TensorT<T>& t, const char* who) {
  if (t.rank() == 3) return {1, t.extent(0), t.extent(1), t.extent(2), false};
  if (t.rank() == 4) return {t.extent(0), t.extent(1), t.extent(2), t.extent(3), true};
  throw DimensionError(std::string(who) + ": expected rank 3 or 4 input, got shape " +
                       t.shape_str());
}

inline std::vector<int64_t> out_shape(const Geom& g, int64_t c, int64_t h, int64_t w) {
  if (g.batched) return {g.n, c, h, w};
  return {c, h, w};
}

}  // namespace detail

// 2-D cross-correlation with symmetric zero padding, stride and dilation.
// kernels is [Cout,Cin,kh,kw]; out-of-image taps read zero.  The reduction
// order per output value is fixed (input channel outer, then kernel rows,
// then kernel columns) so results do not depend on how work is partitioned.
template <typename T>
TensorT<T> conv2d(const TensorT<T>& input, const TensorT<T>& kernels,
                  const std::vector<T>& bias, const ConvParams& p) {
  p.validate();
  const auto g = detail::geom(input, "conv2d");
  if (kernels.rank() != 4) {
    throw DimensionError("conv2d: kernel tensor must be [Cout,Cin,kh,kw], got " +
                         kernels.shape_str());
  }
  const int64_t cout = kernels.extent(0);
  const int64_t cin = kernels.extent(1);
  if (kernels.extent(2) != p.kernel_h || kernels.extent(3) != p.kernel_w) {
    throw DimensionError("conv2d: kernel extents disagree with params along height/width");
  }
  if (g.c != cin) {
    throw DimensionError("conv2d: channel axis mismatch, input has " + std::to_string(g.c) +
                         " channels but kernels expect " + std::to_string(cin));
  }
  if (static_cast<int64_t>(bias.size()) != cout) {
    throw DimensionError("conv2d: bias length " + std::to_string(bias.size()) +
                         " does not match output channel axis " + std::to_string(cout));
  }
  if (g.h + 2 * p.pad < p.effective_h()) {
    throw DimensionError("conv2d: padded height " + std::to_string(g.h + 2 * p.pad) +
                         " smaller than effective kernel height " +
                         std::to_string(p.effective_h()));
  }
  if (g.w + 2 * p.pad < p.effective_w()) {
    throw DimensionError("conv2d: padded width " + std::to_string(g.w + 2 * p.pad) +
                         " smaller than effective kernel width " + std::to_string(p.effective_w()));
  }

  const int64_t ho = conv_out_extent(g.h, p.kernel_h, p.stride, p.pad, p.dilation);
  const int64_t wo = conv_out_extent(g.w, p.kernel_w, p.stride, p.pad, p.dilation);
  TensorT<T> out(detail::out_shape(g, cout, ho, wo));

  const T* in = input.data();
  const T* ker = kernels.data();
  T* o = out.data();
  for (int64_t n = 0; n < g.n; ++n) {
    const T* in_n = in + n * g.c * g.h * g.w;
    for (int64_t co = 0; co < cout; ++co) {
      const T* ker_co = ker + co * cin * p.kernel_h * p.kernel_w;
      T* o_plane = o + (n * cout + co) * ho * wo;
      for (int64_t oy = 0; oy < ho; ++oy) {
        const int64_t iy0 = oy * p.stride - p.pad;
        for (int64_t ox = 0; ox < wo; ++ox) {
          const int64_t ix0 = ox * p.stride - p.pad;
          T acc = bias[static_cast<size_t>(co)];
          for (int64_t ci = 0; ci < cin; ++ci) {
            const T* in_c = in_n + ci * g.h * g.w;
            const T* ker_c = ker_co + ci * p.kernel_h * p.kernel_w;
            for (int64_t ky = 0; ky < p.kernel_h; ++ky) {
              const int64_t iy = iy0 + ky * p.dilation;
              if (iy < 0 || iy >= g.h) continue;
              const T* row = in_c + iy * g.w;
              const T* krow = ker_c + ky * p.kernel_w;
              for (int64_t kx = 0; kx < p.kernel_w; ++kx) {
                const int64_t ix = ix0 + kx * p.dilation;
                if (ix < 0 || ix >= g.w) continue;
                acc += krow[kx] * row[ix];
              }
            }
          }
          o_plane[oy * wo + ox] = acc;
        }
      }
    }
  }
  return out;
}

// Gradients of conv2d.  Returns d/dinput; accumulates d/dkernels and d/dbias
// into the provided buffers (callers zero them or sum over a batch).
template <typename T>
TensorT<T> conv2d_backward(const TensorT<T>& input, const TensorT<T>& kernels,
                           const ConvParams& p, const TensorT<T>& grad_out,
                           TensorT<T>& grad_kernels, std::vector<T>& grad_bias) {
  const auto g = detail::geom(input, "conv2d_backward");
  const auto go = detail::geom(grad_out, "conv2d_backward");
  const int64_t cout = kernels.extent(0);
  const int64_t cin = kernels.extent(1);
  const int64_t ho = conv_out_extent(g.h, p.kernel_h, p.stride, p.pad, p.dilation);
  const int64_t wo = conv_out_extent(g.w, p.kernel_w, p.stride, p.pad, p.dilation);
  if (go.c != cout || go.h != ho || go.w != wo || go.n != g.n) {
    throw DimensionError("conv2d_backward: upstream gradient shape " + grad_out.shape_str() +
                         " does not match forward output");
  }
  if (!grad_kernels.same_shape(kernels)) {
    throw DimensionError("conv2d_backward: kernel gradient buffer shape mismatch");
  }
  if (static_cast<int64_t>(grad_bias.size()) != cout) {
    throw DimensionError("conv2d_backward: bias gradient buffer length mismatch");
  }

  TensorT<T> grad_in(input.shape());
  const T* in = input.data();
  const T* ker = kernels.data();
  const T* gout = grad_out.data();
  T* gin = grad_in.data();
  T* gker = grad_kernels.data();
  for (int64_t n = 0; n < g.n; ++n) {
    for (int64_t co = 0; co < cout; ++co) {
      const T* ker_co = ker + co * cin * p.kernel_h * p.kernel_w;
      T* gker_co = gker + co * cin * p.kernel_h * p.kernel_w;
      const T* go_plane = gout + (n * cout + co) * ho * wo;
      for (int64_t oy = 0; oy < ho; ++oy) {
        const int64_t iy0 = oy * p.stride - p.pad;
        for (int64_t ox = 0; ox < wo; ++ox) {
          const int64_t ix0 = ox * p.stride - p.pad;
          const T gv = go_plane[oy * wo + ox];
          if (gv == T(0)) continue;
          grad_bias[static_cast<size_t>(co)] += gv;
          for (int64_t ci = 0; ci < cin; ++ci) {
            const T* in_c = in + (n * g.c + ci) * g.h * g.w;
            T* gin_c = gin + (n * g.c + ci) * g.h * g.w;
            const T* ker_c = ker_co + ci * p.kernel_h * p.kernel_w;
            T* gker_c = gker_co + ci * p.kernel_h * p.kernel_w;
            for (int64_t ky = 0; ky < p.kernel_h; ++ky) {
              const int64_t iy = iy0 + ky * p.dilation;
              if (iy < 0 || iy >= g.h) continue;
              for (int64_t kx = 0; kx < p.kernel_w; ++kx) {
                const int64_t ix = ix0 + kx * p.dilation;
                if (ix < 0 || ix >= g.w) continue;
                gker_c[ky * p.kernel_w + kx] += gv * in_c[iy * g.w + ix];
                gin_c[iy * g.w + ix] += gv * ker_c[ky * p.kernel_w + kx];
              }
            }
          }
        }
      }
    }
  }
  return grad_in;
}

namespace detail {

// Sliding-window running maximum over one line (van Herk / Gil-Werman class:
// cost independent of the window size).  The monotonic deque keeps the
// earliest index among equal values, which gives the lowest-linear-index tie
// rule once both passes run.  Positions outside [0,len) act as -inf.
template <typename T>
inline void sliding_max_line(const T* vals, const int64_t* idxs, int64_t len, int64_t window,
                             int64_t pad, int64_t stride, int64_t out_len, T* out_vals,
                             int64_t* out_idxs) {
  std::deque<int64_t> dq;  // positions into vals, front = current max
  int64_t next = -pad;     // next position to feed into the deque
  for (int64_t o = 0; o < out_len; ++o) {
    const int64_t lo = o * stride - pad;
    const int64_t hi = lo + window;  // exclusive
    for (; next < hi; ++next) {
      if (next < 0 || next >= len) continue;
      while (!dq.empty() && vals[dq.back()] < vals[next]) dq.pop_back();
      dq.push_back(next);
    }
    while (!dq.empty() && dq.front() < lo) dq.pop_front();
    if (dq.empty()) {
      out_vals[o] = -std::numeric_limits<T>::infinity();
      out_idxs[o] = kNoArg;
    } else {
      out_vals[o] = vals[dq.front()];
      out_idxs[o] = idxs ? idxs[dq.front()] : dq.front();
    }
  }
}

}  // namespace detail

// Max pooling over dense windows with -inf padding.  Runs as two separable
// running-max passes, so the cost per output is independent of the window
// size.  ArgIndices holds, per output value, the linear index of the selected
// input element; ties go to the lowest linear index.
template <typename T>
std::pair<TensorT<T>, ArgIndices> maxpool2d(const TensorT<T>& input, int64_t window_h,
                                            int64_t window_w, int64_t stride, int64_t pad) {
  if (window_h < 1 || window_w < 1) throw ParameterError("maxpool2d: window must be >= 1");
  if (stride < 1) throw ParameterError("maxpool2d: stride must be >= 1");
  if (pad < 0) throw ParameterError("maxpool2d: pad must be >= 0");
  const auto g = detail::geom(input, "maxpool2d");
  if (g.h + 2 * pad < window_h || g.w + 2 * pad < window_w) {
    throw DimensionError("maxpool2d: window larger than padded input (" +
                         std::to_string(g.h + 2 * pad) + "x" + std::to_string(g.w + 2 * pad) +
                         " vs " + std::to_string(window_h) + "x" + std::to_string(window_w) + ")");
  }
  const int64_t ho = pool_out_extent(g.h, window_h, stride, pad);
  const int64_t wo = pool_out_extent(g.w, window_w, stride, pad);
  TensorT<T> out(detail::out_shape(g, g.c, ho, wo));
  ArgIndices args(static_cast<size_t>(out.numel()), kNoArg);

  // horizontal pass at stride 1 over every input row, then vertical pass.
  std::vector<T> rowmax(static_cast<size_t>(g.h * wo));
  std::vector<int64_t> rowarg(static_cast<size_t>(g.h * wo));
  std::vector<T> colv(static_cast<size_t>(g.h));
  std::vector<int64_t> coli(static_cast<size_t>(g.h));
  std::vector<T> outv(static_cast<size_t>(ho));
  std::vector<int64_t> outi(static_cast<size_t>(ho));

  const T* in = input.data();
  T* o = out.data();
  for (int64_t n = 0; n < g.n; ++n) {
    for (int64_t c = 0; c < g.c; ++c) {
      const int64_t plane_off = (n * g.c + c) * g.h * g.w;
      const T* plane = in + plane_off;
      for (int64_t y = 0; y < g.h; ++y) {
        detail::sliding_max_line<T>(plane + y * g.w, nullptr, g.w, window_w, pad, stride, wo,
                                    rowmax.data() + y * wo, rowarg.data() + y * wo);
      }
      for (int64_t ox = 0; ox < wo; ++ox) {
        for (int64_t y = 0; y < g.h; ++y) {
          colv[static_cast<size_t>(y)] = rowmax[static_cast<size_t>(y * wo + ox)];
          coli[static_cast<size_t>(y)] = y;
        }
        detail::sliding_max_line<T>(colv.data(), coli.data(), g.h, window_h, pad, stride, ho,
                                    outv.data(), outi.data());
        for (int64_t oy = 0; oy < ho; ++oy) {
          const int64_t oidx = ((n * g.c + c) * ho + oy) * wo + ox;
          o[oidx] = outv[static_cast<size_t>(oy)];
          const int64_t srow = outi[static_cast<size_t>(oy)];
          if (srow == kNoArg) {
            args[static_cast<size_t>(oidx)] = kNoArg;
          } else {
            const int64_t scol = rowarg[static_cast<size_t>(srow * wo + ox)];
            args[static_cast<size_t>(oidx)] =
                scol == kNoArg ? kNoArg : plane_off + srow * g.w + scol;
          }
        }
      }
    }
  }
  return {std::move(out), std::move(args)};
}

// Reference evaluator for maxpool2d: per-window scan in row-major order.
// Kept close to the definition; the streaming version must match it exactly.
template <typename T>
std::pair<TensorT<T>, ArgIndices> maxpool2d_naive(const TensorT<T>& input, int64_t window_h,
                                                  int64_t window_w, int64_t stride, int64_t pad) {
  const auto g = detail::geom(input, "maxpool2d_naive");
  const int64_t ho = pool_out_extent(g.h, window_h, stride, pad);
  const int64_t wo = pool_out_extent(g.w, window_w, stride, pad);
  TensorT<T> out(detail::out_shape(g, g.c, ho, wo));
  ArgIndices args(static_cast<size_t>(out.numel()), kNoArg);
  const T* in = input.data();
  T* o = out.data();
  for (int64_t n = 0; n < g.n; ++n) {
    for (int64_t c = 0; c < g.c; ++c) {
      const int64_t plane_off = (n * g.c + c) * g.h * g.w;
      for (int64_t oy = 0; oy < ho; ++oy) {
        for (int64_t ox = 0; ox < wo; ++ox) {
          T best = -std::numeric_limits<T>::infinity();
          int64_t best_idx = kNoArg;
          for (int64_t ky = 0; ky < window_h; ++ky) {
            const int64_t iy = oy * stride - pad + ky;
            if (iy < 0 || iy >= g.h) continue;
            for (int64_t kx = 0; kx < window_w; ++kx) {
              const int64_t ix = ox * stride - pad + kx;
              if (ix < 0 || ix >= g.w) continue;
              const T v = in[plane_off + iy * g.w + ix];
              if (v > best) {
                best = v;
                best_idx = plane_off + iy * g.w + ix;
              }
            }
          }
          const int64_t oidx = ((n * g.c + c) * ho + oy) * wo + ox;
          o[oidx] = best;
          args[static_cast<size_t>(oidx)] = best_idx;
        }
      }
    }
  }
  return {std::move(out), std::move(args)};
}

template <typename T>
TensorT<T> maxpool2d_backward(const std::vector<int64_t>& input_shape, const ArgIndices& args,
                              const TensorT<T>& grad_out) {
  TensorT<T> grad_in(input_shape);
  if (args.size() != static_cast<size_t>(grad_out.numel())) {
    throw StateError("maxpool2d_backward: arg indices do not match upstream gradient");
  }
  for (size_t i = 0; i < args.size(); ++i) {
    if (args[i] != kNoArg) grad_in[args[i]] += grad_out[static_cast<int64_t>(i)];
  }
  return grad_in;
}

template <typename T>
TensorT<T> relu(const TensorT<T>& input) {
  TensorT<T> out(input.shape());
  for (int64_t i = 0; i < input.numel(); ++i) out[i] = input[i] > T(0) ? input[i] : T(0);
  return out;
}

template <typename T>
TensorT<T> relu_backward(const TensorT<T>& input, const TensorT<T>& grad_out) {
  TensorT<T> grad_in(input.shape());
  for (int64_t i = 0; i < input.numel(); ++i) grad_in[i] = input[i] > T(0) ? grad_out[i] : T(0);
  return grad_in;
}

// Per-pixel exp-normalization over the channel axis with max subtraction.
template <typename T>
TensorT<T> softmax_channels(const TensorT<T>& input) {
  const auto g = detail::geom(input, "softmax_channels");
  TensorT<T> out(input.shape());
  const T* in = input.data();
  T* o = out.data();
  const int64_t hw = g.h * g.w;
  for (int64_t n = 0; n < g.n; ++n) {
    for (int64_t p = 0; p < hw; ++p) {
      const int64_t base = n * g.c * hw + p;
      T m = in[base];
      for (int64_t c = 1; c < g.c; ++c) m = std::max(m, in[base + c * hw]);
      T sum = T(0);
      for (int64_t c = 0; c < g.c; ++c) {
        const T e = std::exp(in[base + c * hw] - m);
        o[base + c * hw] = e;
        sum += e;
      }
      for (int64_t c = 0; c < g.c; ++c) o[base + c * hw] /= sum;
    }
  }
  return out;
}

// d/dlogits given probs = softmax_channels(logits):
//   dz_c = p_c * (g_c - sum_k g_k p_k) per pixel.
template <typename T>
TensorT<T> softmax_channels_backward(const TensorT<T>& probs, const TensorT<T>& grad_out) {
  const auto g = detail::geom(probs, "softmax_channels_backward");
  TensorT<T> grad_in(probs.shape());
  const T* p = probs.data();
  const T* go = grad_out.data();
  T* gi = grad_in.data();
  const int64_t hw = g.h * g.w;
  for (int64_t n = 0; n < g.n; ++n) {
    for (int64_t px = 0; px < hw; ++px) {
      const int64_t base = n * g.c * hw + px;
      T dot = T(0);
      for (int64_t c = 0; c < g.c; ++c) dot += go[base + c * hw] * p[base + c * hw];
      for (int64_t c = 0; c < g.c; ++c) {
        gi[base + c * hw] = p[base + c * hw] * (go[base + c * hw] - dot);
      }
    }
  }
  return grad_in;
}

namespace detail {

// Half-pixel-center source coordinate for bilinear_upsample, clamped to the
// valid range: src = (i + 0.5)/factor - 0.5.
struct LerpTap {
  int64_t lo, hi;
  double w_hi;
};

inline LerpTap lerp_tap(int64_t i, int64_t factor, int64_t in_extent) {
  double src = (static_cast<double>(i) + 0.5) / static_cast<double>(factor) - 0.5;
  src = std::min(std::max(src, 0.0), static_cast<double>(in_extent - 1));
  const int64_t lo = static_cast<int64_t>(std::floor(src));
  const int64_t hi = std::min(lo + 1, in_extent - 1);
  return {lo, hi, src - static_cast<double>(lo)};
}

}  // namespace detail

template <typename T>
TensorT<T> bilinear_upsample(const TensorT<T>& input, int64_t factor) {
  if (factor < 1) throw ParameterError("bilinear_upsample: factor must be >= 1");
  if (factor == 1) return input;
  const auto g = detail::geom(input, "bilinear_upsample");
  const int64_t ho = g.h * factor;
  const int64_t wo = g.w * factor;
  TensorT<T> out(detail::out_shape(g, g.c, ho, wo));
  std::vector<detail::LerpTap> ty(static_cast<size_t>(ho)), tx(static_cast<size_t>(wo));
  for (int64_t i = 0; i < ho; ++i) ty[static_cast<size_t>(i)] = detail::lerp_tap(i, factor, g.h);
  for (int64_t i = 0; i < wo; ++i) tx[static_cast<size_t>(i)] = detail::lerp_tap(i, factor, g.w);
  const T* in = input.data();
  T* o = out.data();
  for (int64_t nc = 0; nc < g.n * g.c; ++nc) {
    const T* plane = in + nc * g.h * g.w;
    T* oplane = o + nc * ho * wo;
    for (int64_t y = 0; y < ho; ++y) {
      const auto& a = ty[static_cast<size_t>(y)];
      for (int64_t x = 0; x < wo; ++x) {
        const auto& b = tx[static_cast<size_t>(x)];
        const double v00 = plane[a.lo * g.w + b.lo];
        const double v01 = plane[a.lo * g.w + b.hi];
        const double v10 = plane[a.hi * g.w + b.lo];
        const double v11 = plane[a.hi * g.w + b.hi];
        const double top = v00 + (v01 - v00) * b.w_hi;
        const double bot = v10 + (v11 - v10) * b.w_hi;
        oplane[y * wo + x] = static_cast<T>(top + (bot - top) * a.w_hi);
      }
    }
  }
  return out;
}

template <typename T>
TensorT<T> bilinear_upsample_backward(const std::vector<int64_t>& input_shape, int64_t factor,
                                      const TensorT<T>& grad_out) {
  if (factor == 1) return grad_out;
  TensorT<T> grad_in(input_shape);
  const auto g = detail::geom(grad_in, "bilinear_upsample_backward");
  const auto go = detail::geom(grad_out, "bilinear_upsample_backward");
  std::vector<detail::LerpTap> ty(static_cast<size_t>(go.h)), tx(static_cast<size_t>(go.w));
  for (int64_t i = 0; i < go.h; ++i) ty[static_cast<size_t>(i)] = detail::lerp_tap(i, factor, g.h);
  for (int64_t i = 0; i < go.w; ++i) tx[static_cast<size_t>(i)] = detail::lerp_tap(i, factor, g.w);
  const T* gout = grad_out.data();
  T* gin = grad_in.data();
  for (int64_t nc = 0; nc < g.n * g.c; ++nc) {
    T* plane = gin + nc * g.h * g.w;
    const T* oplane = gout + nc * go.h * go.w;
    for (int64_t y = 0; y < go.h; ++y) {
      const auto& a = ty[static_cast<size_t>(y)];
      for (int64_t x = 0; x < go.w; ++x) {
        const auto& b = tx[static_cast<size_t>(x)];
        const double gv = oplane[y * go.w + x];
        plane[a.lo * g.w + b.lo] += static_cast<T>(gv * (1.0 - a.w_hi) * (1.0 - b.w_hi));
        plane[a.lo * g.w + b.hi] += static_cast<T>(gv * (1.0 - a.w_hi) * b.w_hi);
        plane[a.hi * g.w + b.lo] += static_cast<T>(gv * a.w_hi * (1.0 - b.w_hi));
        plane[a.hi * g.w + b.hi] += static_cast<T>(gv * a.w_hi * b.w_hi);
      }
    }
  }
  return grad_in;
}

// Spatial crop: rows [y0, y0+h) and columns [x0, x0+w).
template <typename T>
TensorT<T> crop_spatial(const TensorT<T>& t, int64_t y0, int64_t x0, int64_t h, int64_t w) {
  const auto g = detail::geom(t, "crop_spatial");
  if (y0 < 0 || x0 < 0 || y0 + h > g.h || x0 + w > g.w || h < 1 || w < 1) {
    throw DimensionError("crop_spatial: window [" + std::to_string(y0) + "," +
                         std::to_string(x0) + ")+" + std::to_string(h) + "x" + std::to_string(w) +
                         " outside " + t.shape_str());
  }
  TensorT<T> out(detail::out_shape(g, g.c, h, w));
  for (int64_t nc = 0; nc < g.n * g.c; ++nc) {
    for (int64_t y = 0; y < h; ++y) {
      const T* src = t.data() + (nc * g.h + y0 + y) * g.w + x0;
      std::copy(src, src + w, out.data() + (nc * h + y) * w);
    }
  }
  return out;
}

// Channel concatenation, a's channels first.  Spatial extents must agree.
template <typename T>
TensorT<T> concat_channels(const TensorT<T>& a, const TensorT<T>& b) {
  const auto ga = detail::geom(a, "concat_channels");
  const auto gb = detail::geom(b, "concat_channels");
  if (ga.h != gb.h || ga.w != gb.w || ga.n != gb.n || ga.batched != gb.batched) {
    throw DimensionError("concat_channels: spatial/batch extents disagree, " + a.shape_str() +
                         " vs " + b.shape_str());
  }
  TensorT<T> out(detail::out_shape(ga, ga.c + gb.c, ga.h, ga.w));
  const int64_t hw = ga.h * ga.w;
  for (int64_t n = 0; n < ga.n; ++n) {
    std::copy(a.data() + n * ga.c * hw, a.data() + (n + 1) * ga.c * hw,
              out.data() + n * (ga.c + gb.c) * hw);
    std::copy(b.data() + n * gb.c * hw, b.data() + (n + 1) * gb.c * hw,
              out.data() + n * (ga.c + gb.c) * hw + ga.c * hw);
  }
  return out;
}

template <typename T>
std::pair<TensorT<T>, TensorT<T>> concat_channels_backward(const std::vector<int64_t>& a_shape,
                                                           const std::vector<int64_t>& b_shape,
                                                           const TensorT<T>& grad_out) {
  TensorT<T> ga(a_shape), gb(b_shape);
  const auto g_a = detail::geom(ga, "concat_channels_backward");
  const auto g_b = detail::geom(gb, "concat_channels_backward");
  const int64_t hw = g_a.h * g_a.w;
  for (int64_t n = 0; n < g_a.n; ++n) {
    const T* src = grad_out.data() + n * (g_a.c + g_b.c) * hw;
    std::copy(src, src + g_a.c * hw, ga.data() + n * g_a.c * hw);
    std::copy(src + g_a.c * hw, src + (g_a.c + g_b.c) * hw, gb.data() + n * g_b.c * hw);
  }
  return {std::move(ga), std::move(gb)};
}

// Inverted dropout: at train time each value is kept with probability
// (1-ratio) and scaled by 1/(1-ratio); the returned factor tensor holds the
// per-element multiplier so the backward pass reuses the identical mask.
template <typename T>
std::pair<TensorT<T>, TensorT<T>> dropout_train(const TensorT<T>& input, double ratio,
                                                uint64_t seed) {
  if (ratio < 0.0 || ratio >= 1.0) {
    throw ParameterError("dropout: ratio must lie in [0,1), got " + std::to_string(ratio));
  }
  TensorT<T> factors(input.shape());
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const T scale = static_cast<T>(1.0 / (1.0 - ratio));
  for (int64_t i = 0; i < factors.numel(); ++i) factors[i] = u(gen) < ratio ? T(0) : scale;
  TensorT<T> out(input.shape());
  for (int64_t i = 0; i < input.numel(); ++i) out[i] = input[i] * factors[i];
  return {std::move(out), std::move(factors)};
}

}  // namespace sz
