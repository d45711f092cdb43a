#include <algorithm>
#include <string>

#include "gemm.hpp"
#include "nwq/error.hpp"
#include "nwq/ops.hpp"
#include "op_util.hpp"

namespace nwq {

using detail::gemm_nn;
using detail::gemm_nt;
using detail::gemm_tn;
using detail::lane_sum;

namespace {

// Zero-padded copy of one [H,W] plane into [(H+2p), (W+2p)].
template <typename T>
void pad_plane(const T* src, std::size_t h, std::size_t w, std::size_t pad, T* dst) {
  const std::size_t wp = w + 2 * pad;
  std::fill(dst, dst + (h + 2 * pad) * wp, T(0));
  for (std::size_t r = 0; r < h; ++r) std::copy(src + r * w, src + (r + 1) * w, dst + (r + pad) * wp + pad);
}

// Geometry of a direct correlation over a padded plane.
struct Taps {
  std::size_t kh, kw, stride, wp, oh, ow;
};

// out[r, c] += sum over taps of k[ki, kj] * P[r*s + ki, c*s + kj]
template <typename T>
void correlate(const Taps& t, const T* pp, const T* kern, T* out) {
  for (std::size_t r = 0; r < t.oh; ++r) {
    T* __restrict orow = out + r * t.ow;
    for (std::size_t ki = 0; ki < t.kh; ++ki) {
      const T* prow = pp + (r * t.stride + ki) * t.wp;
      for (std::size_t kj = 0; kj < t.kw; ++kj) {
        const T coeff = kern[ki * t.kw + kj];
        const T* __restrict src = prow + kj;
        if (t.stride == 1) {
          for (std::size_t c = 0; c < t.ow; ++c) orow[c] += coeff * src[c];
        } else {
          for (std::size_t c = 0; c < t.ow; ++c) orow[c] += coeff * src[c * t.stride];
        }
      }
    }
  }
}

// Backward of correlate for one (output plane, input plane) pair. dk gets per-tap sums
// (column partials over rows, then one lane_sum); dpp gets the scattered gradient.
template <typename T>
void correlate_backward(const Taps& t, const T* pp, const T* kern, const T* g, T* dk, T* dpp,
                        T* colacc) {
  for (std::size_t ki = 0; ki < t.kh; ++ki) {
    for (std::size_t kj = 0; kj < t.kw; ++kj) {
      const std::size_t tap = ki * t.kw + kj;
      if (dk) {
        std::fill(colacc, colacc + t.ow, T(0));
        for (std::size_t r = 0; r < t.oh; ++r) {
          const T* __restrict grow = g + r * t.ow;
          const T* __restrict src = pp + (r * t.stride + ki) * t.wp + kj;
          T* __restrict acc = colacc;
          if (t.stride == 1) {
            for (std::size_t c = 0; c < t.ow; ++c) acc[c] += grow[c] * src[c];
          } else {
            for (std::size_t c = 0; c < t.ow; ++c) acc[c] += grow[c] * src[c * t.stride];
          }
        }
        dk[tap] += lane_sum(colacc, t.ow);
      }
      if (dpp) {
        const T coeff = kern[tap];
        for (std::size_t r = 0; r < t.oh; ++r) {
          const T* __restrict grow = g + r * t.ow;
          T* __restrict dst = dpp + (r * t.stride + ki) * t.wp + kj;
          if (t.stride == 1) {
            for (std::size_t c = 0; c < t.ow; ++c) dst[c] += coeff * grow[c];
          } else {
            for (std::size_t c = 0; c < t.ow; ++c) dst[c * t.stride] += coeff * grow[c];
          }
        }
      }
    }
  }
}

// Adds the interior of a padded gradient plane onto dx.
template <typename T>
void unpad_add(const T* dpp, std::size_t h, std::size_t w, std::size_t pad, T* dx) {
  const std::size_t wp = w + 2 * pad;
  for (std::size_t r = 0; r < h; ++r) {
    const T* src = dpp + (r + pad) * wp + pad;
    T* dst = dx + r * w;
    for (std::size_t c = 0; c < w; ++c) dst[c] += src[c];
  }
}

// out[K,P] = bias broadcast, then += w[K,R] * cols[R,P]. Shared by conv2d and
// pointwise_conv2d so that a 1x1 conv2d and the pointwise op agree bit for bit.
template <typename T>
void affine_plane(std::size_t k, std::size_t r, std::size_t p, const T* w, const T* bias,
                  const T* cols, T* out) {
  for (std::size_t i = 0; i < k; ++i) std::fill(out + i * p, out + (i + 1) * p, bias[i]);
  gemm_nn(k, p, r, w, cols, out);
}

template <typename T>
void check_bias(const Tensor<T>& b, std::size_t k, const char* op) {
  if (b.rank() != 1 || b.dim(0) != k) {
    throw DimensionError(std::string(op) + ": bias shape " + shape_string(b.shape()) +
                         " does not match " + std::to_string(k) + " output channels");
  }
}

}  // namespace

template <typename T>
Tensor<T> conv2d(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                 std::size_t padding, std::size_t stride) {
  detail::require_rank(x, 4, "conv2d input");
  detail::require_rank(w, 4, "conv2d weight");
  if (stride == 0) throw ContractError("conv2d: stride must be >= 1");
  const std::size_t n = x.dim(0);
  const std::size_t k = w.dim(0);
  if (w.dim(1) != x.dim(1)) {
    throw DimensionError("conv2d: input has " + std::to_string(x.dim(1)) +
                         " channels but weight expects " + std::to_string(w.dim(1)));
  }
  if (w.dim(2) % 2 == 0 || w.dim(3) % 2 == 0) {
    throw DimensionError("conv2d: kernel size must be odd, got " + shape_string(w.shape()));
  }
  check_bias(b, k, "conv2d");
  if (x.dim(2) + 2 * padding < w.dim(2) || x.dim(3) + 2 * padding < w.dim(3)) {
    throw DimensionError("conv2d: kernel larger than padded input");
  }
  // A 1x1 kernel without padding or stride is exactly the pointwise op.
  if (w.dim(2) == 1 && w.dim(3) == 1 && padding == 0 && stride == 1) {
    return pointwise_conv2d(tape, x, w, b);
  }
  const std::size_t c = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::size_t hp = h + 2 * padding, wp = wd + 2 * padding;
  const Taps t{w.dim(2), w.dim(3), stride, wp, (hp - w.dim(2)) / stride + 1,
               (wp - w.dim(3)) / stride + 1};
  const std::size_t taps = t.kh * t.kw;
  const std::size_t plane = h * wd, pplane = hp * wp, oplane = t.oh * t.ow;

  std::vector<T> out(n * k * oplane);
  std::vector<T> padded(c * pplane);
  const T* xv = x.values().data();
  const T* wv = w.values().data();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      pad_plane(xv + (i * c + ch) * plane, h, wd, padding, padded.data() + ch * pplane);
    }
    for (std::size_t o = 0; o < k; ++o) {
      T* dst = out.data() + (i * k + o) * oplane;
      std::fill(dst, dst + oplane, b.values()[o]);
      for (std::size_t ch = 0; ch < c; ++ch) {
        correlate(t, padded.data() + ch * pplane, wv + (o * c + ch) * taps, dst);
      }
    }
  }
  Tensor<T> y({n, k, t.oh, t.ow}, std::move(out));
  check_finite(y, "conv2d");

  if (tape.wants({&x, &w, &b})) {
    tape.record({x, w, b}, y, [x, w, b, t, n, k, c, h, wd, padding](const Tensor<T>& out) mutable {
      const T* dy = out.grad().data();
      const std::size_t taps = t.kh * t.kw;
      const std::size_t plane = h * wd, pplane = (h + 2 * padding) * t.wp, oplane = t.oh * t.ow;
      T* dw = w.requires_grad() ? w.grad_buffer().data() : nullptr;
      T* db = b.requires_grad() ? b.grad_buffer().data() : nullptr;
      T* dx = x.requires_grad() ? x.grad_buffer().data() : nullptr;
      const T* xv = x.values().data();
      const T* wv = w.values().data();
      std::vector<T> padded(c * pplane), dpadded(dx ? c * pplane : 0), colacc(t.ow);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t ch = 0; ch < c; ++ch) {
          pad_plane(xv + (i * c + ch) * plane, h, wd, padding, padded.data() + ch * pplane);
        }
        std::fill(dpadded.begin(), dpadded.end(), T(0));
        for (std::size_t o = 0; o < k; ++o) {
          const T* g = dy + (i * k + o) * oplane;
          if (db) db[o] += lane_sum(g, oplane);
          for (std::size_t ch = 0; ch < c; ++ch) {
            correlate_backward(t, padded.data() + ch * pplane, wv + (o * c + ch) * taps, g,
                               dw ? dw + (o * c + ch) * taps : nullptr,
                               dx ? dpadded.data() + ch * pplane : nullptr, colacc.data());
          }
        }
        if (dx) {
          for (std::size_t ch = 0; ch < c; ++ch) {
            unpad_add(dpadded.data() + ch * pplane, h, wd, padding, dx + (i * c + ch) * plane);
          }
        }
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> pointwise_conv2d(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& w,
                           const Tensor<T>& b) {
  detail::require_rank(x, 4, "pointwise_conv2d input");
  detail::require_rank(w, 4, "pointwise_conv2d weight");
  const std::size_t n = x.dim(0), c = x.dim(1), p = x.dim(2) * x.dim(3);
  const std::size_t k = w.dim(0);
  if (w.dim(1) != c || w.dim(2) != 1 || w.dim(3) != 1) {
    throw DimensionError("pointwise_conv2d: weight " + shape_string(w.shape()) +
                         " incompatible with input " + shape_string(x.shape()));
  }
  check_bias(b, k, "pointwise_conv2d");

  std::vector<T> out(n * k * p);
  const T* xv = x.values().data();
  for (std::size_t i = 0; i < n; ++i) {
    affine_plane(k, c, p, w.values().data(), b.values().data(), xv + i * c * p,
                 out.data() + i * k * p);
  }
  Tensor<T> y({n, k, x.dim(2), x.dim(3)}, std::move(out));
  check_finite(y, "pointwise_conv2d");

  if (tape.wants({&x, &w, &b})) {
    tape.record({x, w, b}, y, [x, w, b, n, c, k, p](const Tensor<T>& out) mutable {
      const T* dy = out.grad().data();
      T* dw = w.requires_grad() ? w.grad_buffer().data() : nullptr;
      T* db = b.requires_grad() ? b.grad_buffer().data() : nullptr;
      T* dx = x.requires_grad() ? x.grad_buffer().data() : nullptr;
      for (std::size_t i = 0; i < n; ++i) {
        const T* dyi = dy + i * k * p;
        if (dw) gemm_nt(k, c, p, dyi, x.values().data() + i * c * p, dw);
        if (db) {
          for (std::size_t o = 0; o < k; ++o) db[o] += lane_sum(dyi + o * p, p);
        }
        if (dx) gemm_tn(c, p, k, w.values().data(), dyi, dx + i * c * p);
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> depthwise_conv2d(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& w,
                           const Tensor<T>& b, std::size_t padding) {
  detail::require_rank(x, 4, "depthwise_conv2d input");
  detail::require_rank(w, 4, "depthwise_conv2d weight");
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
  if (w.dim(0) != c || w.dim(1) != 1) {
    throw DimensionError("depthwise_conv2d: weight " + shape_string(w.shape()) +
                         " needs one filter per each of " + std::to_string(c) + " channels");
  }
  const std::size_t kh = w.dim(2), kw = w.dim(3);
  if (kh % 2 == 0 || kw % 2 == 0) {
    throw DimensionError("depthwise_conv2d: kernel size must be odd");
  }
  if (h + 2 * padding < kh || wd + 2 * padding < kw) {
    throw DimensionError("depthwise_conv2d: kernel larger than padded input");
  }
  check_bias(b, c, "depthwise_conv2d");
  const std::size_t hp = h + 2 * padding, wp = wd + 2 * padding;
  const Taps t{kh, kw, 1, wp, hp - kh + 1, wp - kw + 1};

  std::vector<T> out(n * c * t.oh * t.ow);
  std::vector<T> padded(hp * wp);
  const T* xv = x.values().data();
  const T* wv = w.values().data();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      pad_plane(xv + (i * c + ch) * h * wd, h, wd, padding, padded.data());
      T* dst = out.data() + (i * c + ch) * t.oh * t.ow;
      std::fill(dst, dst + t.oh * t.ow, b.values()[ch]);
      correlate(t, padded.data(), wv + ch * kh * kw, dst);
    }
  }
  Tensor<T> y({n, c, t.oh, t.ow}, std::move(out));
  check_finite(y, "depthwise_conv2d");

  if (tape.wants({&x, &w, &b})) {
    tape.record({x, w, b}, y, [x, w, b, t, n, c, h, wd, padding](const Tensor<T>& out) mutable {
      const T* dyv = out.grad().data();
      T* dw = w.requires_grad() ? w.grad_buffer().data() : nullptr;
      T* db = b.requires_grad() ? b.grad_buffer().data() : nullptr;
      T* dxv = x.requires_grad() ? x.grad_buffer().data() : nullptr;
      const T* xv = x.values().data();
      const T* wv = w.values().data();
      const std::size_t taps = t.kh * t.kw, oplane = t.oh * t.ow;
      const std::size_t pplane = (h + 2 * padding) * t.wp;
      std::vector<T> padded(pplane), dpadded(dxv ? pplane : 0), colacc(t.ow);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t ch = 0; ch < c; ++ch) {
          const std::size_t plane = (i * c + ch);
          const T* g = dyv + plane * oplane;
          if (db) db[ch] += lane_sum(g, oplane);
          pad_plane(xv + plane * h * wd, h, wd, padding, padded.data());
          std::fill(dpadded.begin(), dpadded.end(), T(0));
          correlate_backward(t, padded.data(), wv + ch * taps, g, dw ? dw + ch * taps : nullptr,
                             dxv ? dpadded.data() : nullptr, colacc.data());
          if (dxv) unpad_add(dpadded.data(), h, wd, padding, dxv + plane * h * wd);
        }
      }
    });
  }
  return y;
}

#define NWQ_INSTANTIATE(T)                                                                    \
  template Tensor<T> conv2d<T>(Tape<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, \
                               std::size_t, std::size_t);                                     \
  template Tensor<T> pointwise_conv2d<T>(Tape<T>&, const Tensor<T>&, const Tensor<T>&,         \
                                         const Tensor<T>&);                                   \
  template Tensor<T> depthwise_conv2d<T>(Tape<T>&, const Tensor<T>&, const Tensor<T>&,         \
                                         const Tensor<T>&, std::size_t);

NWQ_INSTANTIATE(float)
NWQ_INSTANTIATE(double)

#undef NWQ_INSTANTIATE

}  // namespace nwq
