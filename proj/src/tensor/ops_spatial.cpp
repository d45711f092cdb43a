#include <algorithm>
#include <cmath>
#include <string>

#include "gemm.hpp"
#include "nwq/error.hpp"
#include "nwq/ops.hpp"
#include "op_util.hpp"

namespace nwq {

template <typename T>
Tensor<T> max_pool2(Tape<T>& tape, const Tensor<T>& x) {
  detail::require_rank(x, 4, "max_pool2 input");
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h % 2 != 0 || w % 2 != 0) {
    throw DimensionError("max_pool2: spatial size " + shape_string(x.shape()) + " must be even");
  }
  const std::size_t oh = h / 2, ow = w / 2;
  std::vector<T> out(n * c * oh * ow);
  std::vector<std::size_t> argmax(out.size());
  const T* xv = x.values().data();
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const T* src = xv + plane * h * w;
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j) {
        const std::size_t cand[4] = {(2 * i) * w + 2 * j, (2 * i) * w + 2 * j + 1,
                                     (2 * i + 1) * w + 2 * j, (2 * i + 1) * w + 2 * j + 1};
        std::size_t best = cand[0];
        for (std::size_t q = 1; q < 4; ++q) {
          if (src[cand[q]] > src[best]) best = cand[q];
        }
        const std::size_t o = (plane * oh + i) * ow + j;
        out[o] = src[best];
        argmax[o] = plane * h * w + best;
      }
    }
  }
  Tensor<T> y({n, c, oh, ow}, std::move(out));
  if (tape.wants({&x})) {
    tape.record({x}, y, [x, argmax = std::move(argmax)](const Tensor<T>& out) {
      auto dx = x.grad_buffer();
      auto dy = out.grad();
      for (std::size_t o = 0; o < dy.size(); ++o) dx[argmax[o]] += dy[o];
    });
  }
  return y;
}

namespace {

struct Tap {
  std::size_t lo, hi;
  double w_lo, w_hi;
};

// Source taps for x2 upsampling along one axis with half-pixel centres:
// src = (o + 0.5) / 2 - 0.5, clamped to [0, len-1].
std::vector<Tap> upsample_taps(std::size_t len) {
  std::vector<Tap> taps(2 * len);
  for (std::size_t o = 0; o < 2 * len; ++o) {
    double src = (static_cast<double>(o) + 0.5) * 0.5 - 0.5;
    if (src < 0.0) src = 0.0;
    std::size_t lo = static_cast<std::size_t>(std::floor(src));
    if (lo > len - 1) lo = len - 1;
    const std::size_t hi = std::min(lo + 1, len - 1);
    const double frac = src - static_cast<double>(lo);
    taps[o] = {lo, hi, 1.0 - frac, frac};
  }
  return taps;
}

}  // namespace

template <typename T>
Tensor<T> bilinear_upsample2(Tape<T>& tape, const Tensor<T>& x) {
  detail::require_rank(x, 4, "bilinear_upsample2 input");
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h == 0 || w == 0) throw DimensionError("bilinear_upsample2: empty spatial extent");
  const auto ty = upsample_taps(h);
  const auto tx = upsample_taps(w);
  const std::size_t oh = 2 * h, ow = 2 * w;
  std::vector<T> out(n * c * oh * ow);
  const T* xv = x.values().data();
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const T* src = xv + plane * h * w;
    T* dst = out.data() + plane * oh * ow;
    for (std::size_t i = 0; i < oh; ++i) {
      const T* r0 = src + ty[i].lo * w;
      const T* r1 = src + ty[i].hi * w;
      const T wy0 = static_cast<T>(ty[i].w_lo), wy1 = static_cast<T>(ty[i].w_hi);
      for (std::size_t j = 0; j < ow; ++j) {
        const T wx0 = static_cast<T>(tx[j].w_lo), wx1 = static_cast<T>(tx[j].w_hi);
        dst[i * ow + j] = wy0 * (wx0 * r0[tx[j].lo] + wx1 * r0[tx[j].hi]) +
                          wy1 * (wx0 * r1[tx[j].lo] + wx1 * r1[tx[j].hi]);
      }
    }
  }
  Tensor<T> y({n, c, oh, ow}, std::move(out));
  if (tape.wants({&x})) {
    tape.record({x}, y, [x, ty, tx, n, c, h, w](const Tensor<T>& out) {
      const std::size_t oh = 2 * h, ow = 2 * w;
      T* dx = x.grad_buffer().data();
      const T* dy = out.grad().data();
      for (std::size_t plane = 0; plane < n * c; ++plane) {
        T* dsrc = dx + plane * h * w;
        const T* g = dy + plane * oh * ow;
        for (std::size_t i = 0; i < oh; ++i) {
          T* r0 = dsrc + ty[i].lo * w;
          T* r1 = dsrc + ty[i].hi * w;
          const T wy0 = static_cast<T>(ty[i].w_lo), wy1 = static_cast<T>(ty[i].w_hi);
          for (std::size_t j = 0; j < ow; ++j) {
            const T wx0 = static_cast<T>(tx[j].w_lo), wx1 = static_cast<T>(tx[j].w_hi);
            const T gv = g[i * ow + j];
            r0[tx[j].lo] += wy0 * wx0 * gv;
            r0[tx[j].hi] += wy0 * wx1 * gv;
            r1[tx[j].lo] += wy1 * wx0 * gv;
            r1[tx[j].hi] += wy1 * wx1 * gv;
          }
        }
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> concat_channels(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_rank(a, 4, "concat_channels first input");
  detail::require_rank(b, 4, "concat_channels second input");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3)) {
    throw DimensionError("concat_channels: " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()) + " differ outside the channel axis");
  }
  const std::size_t n = a.dim(0), ca = a.dim(1), cb = b.dim(1);
  const std::size_t plane = a.dim(2) * a.dim(3);
  std::vector<T> out(n * (ca + cb) * plane);
  for (std::size_t i = 0; i < n; ++i) {
    auto dst = out.begin() + static_cast<std::ptrdiff_t>(i * (ca + cb) * plane);
    auto sa = a.values().subspan(i * ca * plane, ca * plane);
    auto sb = b.values().subspan(i * cb * plane, cb * plane);
    dst = std::copy(sa.begin(), sa.end(), dst);
    std::copy(sb.begin(), sb.end(), dst);
  }
  Tensor<T> y({n, ca + cb, a.dim(2), a.dim(3)}, std::move(out));
  if (tape.wants({&a, &b})) {
    tape.record({a, b}, y, [a, b, n, ca, cb, plane](const Tensor<T>& out) {
      auto dy = out.grad();
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t base = i * (ca + cb) * plane;
        if (a.requires_grad()) {
          auto da = a.grad_buffer().subspan(i * ca * plane, ca * plane);
          for (std::size_t q = 0; q < da.size(); ++q) da[q] += dy[base + q];
        }
        if (b.requires_grad()) {
          auto db = b.grad_buffer().subspan(i * cb * plane, cb * plane);
          for (std::size_t q = 0; q < db.size(); ++q) db[q] += dy[base + ca * plane + q];
        }
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> global_avg_pool(Tape<T>& tape, const Tensor<T>& x) {
  detail::require_rank(x, 4, "global_avg_pool input");
  const std::size_t n = x.dim(0), c = x.dim(1), p = x.dim(2) * x.dim(3);
  if (p == 0) throw DimensionError("global_avg_pool: empty spatial extent");
  std::vector<T> out(n * c);
  const T inv = T(1) / static_cast<T>(p);
  for (std::size_t q = 0; q < n * c; ++q) {
    out[q] = detail::lane_sum(x.values().data() + q * p, p) * inv;
  }
  Tensor<T> y({n, c, 1, 1}, std::move(out));
  if (tape.wants({&x})) {
    tape.record({x}, y, [x, n, c, p, inv](const Tensor<T>& out) {
      auto dx = x.grad_buffer();
      auto dy = out.grad();
      for (std::size_t q = 0; q < n * c; ++q) {
        const T g = dy[q] * inv;
        for (std::size_t i = 0; i < p; ++i) dx[q * p + i] += g;
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> channel_avg_max(Tape<T>& tape, const Tensor<T>& x) {
  detail::require_rank(x, 4, "channel_avg_max input");
  const std::size_t n = x.dim(0), c = x.dim(1), p = x.dim(2) * x.dim(3);
  if (c == 0) throw DimensionError("channel_avg_max: no channels");
  std::vector<T> out(n * 2 * p);
  std::vector<std::size_t> argmax(n * p);
  const T inv = T(1) / static_cast<T>(c);
  const T* xv = x.values().data();
  for (std::size_t i = 0; i < n; ++i) {
    T* avg = out.data() + i * 2 * p;
    T* mx = avg + p;
    const T* base = xv + i * c * p;
    std::copy(base, base + p, avg);
    std::copy(base, base + p, mx);
    std::fill(argmax.begin() + static_cast<std::ptrdiff_t>(i * p),
              argmax.begin() + static_cast<std::ptrdiff_t>((i + 1) * p), std::size_t{0});
    for (std::size_t ch = 1; ch < c; ++ch) {
      const T* src = base + ch * p;
      for (std::size_t q = 0; q < p; ++q) {
        avg[q] += src[q];
        if (src[q] > mx[q]) {
          mx[q] = src[q];
          argmax[i * p + q] = ch;
        }
      }
    }
    for (std::size_t q = 0; q < p; ++q) avg[q] *= inv;
  }
  Tensor<T> y({n, 2, x.dim(2), x.dim(3)}, std::move(out));
  if (tape.wants({&x})) {
    tape.record({x}, y, [x, n, c, p, inv, argmax = std::move(argmax)](const Tensor<T>& out) {
      auto dx = x.grad_buffer();
      auto dy = out.grad();
      for (std::size_t i = 0; i < n; ++i) {
        const T* gavg = dy.data() + i * 2 * p;
        const T* gmax = gavg + p;
        for (std::size_t ch = 0; ch < c; ++ch) {
          T* d = dx.data() + (i * c + ch) * p;
          for (std::size_t q = 0; q < p; ++q) d[q] += gavg[q] * inv;
        }
        for (std::size_t q = 0; q < p; ++q) dx[(i * c + argmax[i * p + q]) * p + q] += gmax[q];
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> scale_channels(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& s) {
  detail::require_rank(x, 4, "scale_channels input");
  detail::require_rank(s, 4, "scale_channels scale");
  const std::size_t n = x.dim(0), c = x.dim(1), p = x.dim(2) * x.dim(3);
  if (s.dim(0) != n || s.dim(1) != c || s.dim(2) != 1 || s.dim(3) != 1) {
    throw DimensionError("scale_channels: scale " + shape_string(s.shape()) +
                         " does not broadcast over " + shape_string(x.shape()));
  }
  std::vector<T> out(x.size());
  for (std::size_t q = 0; q < n * c; ++q) {
    const T sv = s.values()[q];
    for (std::size_t i = 0; i < p; ++i) out[q * p + i] = x.values()[q * p + i] * sv;
  }
  Tensor<T> y(x.shape(), std::move(out));
  check_finite(y, "scale_channels");
  if (tape.wants({&x, &s})) {
    tape.record({x, s}, y, [x, s, n, c, p](const Tensor<T>& out) {
      auto dy = out.grad();
      for (std::size_t q = 0; q < n * c; ++q) {
        if (x.requires_grad()) {
          auto dx = x.grad_buffer();
          const T sv = s.values()[q];
          for (std::size_t i = 0; i < p; ++i) dx[q * p + i] += dy[q * p + i] * sv;
        }
        if (s.requires_grad()) {
          s.grad_buffer()[q] += detail::lane_dot(dy.data() + q * p, x.values().data() + q * p, p);
        }
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> scale_spatial(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& s) {
  detail::require_rank(x, 4, "scale_spatial input");
  detail::require_rank(s, 4, "scale_spatial scale");
  const std::size_t n = x.dim(0), c = x.dim(1), p = x.dim(2) * x.dim(3);
  if (s.dim(0) != n || s.dim(1) != 1 || s.dim(2) != x.dim(2) || s.dim(3) != x.dim(3)) {
    throw DimensionError("scale_spatial: scale " + shape_string(s.shape()) +
                         " does not broadcast over " + shape_string(x.shape()));
  }
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < n; ++i) {
    const T* sv = s.values().data() + i * p;
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t base = (i * c + ch) * p;
      for (std::size_t q = 0; q < p; ++q) out[base + q] = x.values()[base + q] * sv[q];
    }
  }
  Tensor<T> y(x.shape(), std::move(out));
  check_finite(y, "scale_spatial");
  if (tape.wants({&x, &s})) {
    tape.record({x, s}, y, [x, s, n, c, p](const Tensor<T>& out) {
      auto dy = out.grad();
      for (std::size_t i = 0; i < n; ++i) {
        const T* sv = s.values().data() + i * p;
        for (std::size_t ch = 0; ch < c; ++ch) {
          const std::size_t base = (i * c + ch) * p;
          if (x.requires_grad()) {
            T* dx = x.grad_buffer().data() + base;
            for (std::size_t q = 0; q < p; ++q) dx[q] += dy[base + q] * sv[q];
          }
          if (s.requires_grad()) {
            T* ds = s.grad_buffer().data() + i * p;
            const T* xv = x.values().data() + base;
            for (std::size_t q = 0; q < p; ++q) ds[q] += dy[base + q] * xv[q];
          }
        }
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> select_channels(Tape<T>& tape, const Tensor<T>& x, std::span<const std::size_t> index) {
  detail::require_rank(x, 4, "select_channels input");
  const std::size_t n = x.dim(0), c = x.dim(1), p = x.dim(2) * x.dim(3);
  for (std::size_t ch : index) {
    if (ch >= c) {
      throw ContractError("select_channels: channel " + std::to_string(ch) + " out of range for " +
                          shape_string(x.shape()));
    }
  }
  const std::size_t k = index.size();
  std::vector<T> out(n * k * p);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t o = 0; o < k; ++o) {
      auto src = x.values().subspan((i * c + index[o]) * p, p);
      std::copy(src.begin(), src.end(), out.begin() + static_cast<std::ptrdiff_t>((i * k + o) * p));
    }
  }
  Tensor<T> y({n, k, x.dim(2), x.dim(3)}, std::move(out));
  if (tape.wants({&x})) {
    std::vector<std::size_t> idx(index.begin(), index.end());
    tape.record({x}, y, [x, idx = std::move(idx), n, c, p](const Tensor<T>& out) {
      auto dx = x.grad_buffer();
      auto dy = out.grad();
      const std::size_t k = idx.size();
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t o = 0; o < k; ++o) {
          T* d = dx.data() + (i * c + idx[o]) * p;
          const T* g = dy.data() + (i * k + o) * p;
          for (std::size_t q = 0; q < p; ++q) d[q] += g[q];
        }
      }
    });
  }
  return y;
}

#define NWQ_INSTANTIATE(T)                                                                     \
  template Tensor<T> max_pool2<T>(Tape<T>&, const Tensor<T>&);                                  \
  template Tensor<T> bilinear_upsample2<T>(Tape<T>&, const Tensor<T>&);                         \
  template Tensor<T> concat_channels<T>(Tape<T>&, const Tensor<T>&, const Tensor<T>&);          \
  template Tensor<T> global_avg_pool<T>(Tape<T>&, const Tensor<T>&);                            \
  template Tensor<T> channel_avg_max<T>(Tape<T>&, const Tensor<T>&);                            \
  template Tensor<T> scale_channels<T>(Tape<T>&, const Tensor<T>&, const Tensor<T>&);           \
  template Tensor<T> scale_spatial<T>(Tape<T>&, const Tensor<T>&, const Tensor<T>&);            \
  template Tensor<T> select_channels<T>(Tape<T>&, const Tensor<T>&, std::span<const std::size_t>);

NWQ_INSTANTIATE(float)
NWQ_INSTANTIATE(double)

#undef NWQ_INSTANTIATE

}  // namespace nwq
