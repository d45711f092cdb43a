#include <algorithm>
#include <cmath>
#include <limits>

#include "gemm.hpp"
#include "nwq/error.hpp"
#include "nwq/ops.hpp"
#include "op_util.hpp"

namespace nwq {

template <typename T>
Tensor<T> leaky_relu(Tape<T>& tape, const Tensor<T>& x, T slope) {
  std::vector<T> out(x.size());
  const T* __restrict xv = x.values().data();
  T* __restrict o = out.data();
  // Branch-free select; the sign of x is random in practice.
  for (std::size_t i = 0; i < out.size(); ++i) o[i] = std::max(xv[i], T(0)) + slope * std::min(xv[i], T(0));
  Tensor<T> y(x.shape(), std::move(out));
  if (tape.wants({&x})) {
    tape.record({x}, y, [x, slope](const Tensor<T>& out) {
      T* __restrict dx = x.grad_buffer().data();
      const T* __restrict dy = out.grad().data();
      const T* __restrict xv = x.values().data();
      const std::size_t n = x.size();
      for (std::size_t i = 0; i < n; ++i) {
        const T on = static_cast<T>(xv[i] > T(0));
        dx[i] += dy[i] * on + slope * dy[i] * (T(1) - on);
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> relu(Tape<T>& tape, const Tensor<T>& x) {
  std::vector<T> out(x.size());
  auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] > T(0) ? xv[i] : T(0);
  Tensor<T> y(x.shape(), std::move(out));
  if (tape.wants({&x})) {
    tape.record({x}, y, [x](const Tensor<T>& out) {
      auto dx = x.grad_buffer();
      auto dy = out.grad();
      auto xv = x.values();
      for (std::size_t i = 0; i < dx.size(); ++i) {
        if (xv[i] > T(0)) dx[i] += dy[i];
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> sigmoid(Tape<T>& tape, const Tensor<T>& x) {
  constexpr T lo = std::numeric_limits<T>::min();
  const T hi = std::nextafter(T(1), T(0));
  std::vector<T> out(x.size());
  auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) {
    T s;
    if (xv[i] >= T(0)) {
      s = T(1) / (T(1) + std::exp(-xv[i]));
    } else {
      const T e = std::exp(xv[i]);
      s = e / (T(1) + e);
    }
    out[i] = std::clamp(s, lo, hi);
  }
  Tensor<T> y(x.shape(), std::move(out));
  check_finite(y, "sigmoid");
  if (tape.wants({&x})) {
    tape.record({x}, y, [x](const Tensor<T>& out) {
      auto dx = x.grad_buffer();
      auto dy = out.grad();
      auto s = out.values();
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i] * s[i] * (T(1) - s[i]);
    });
  }
  return y;
}

template <typename T>
Tensor<T> sum(Tape<T>& tape, const Tensor<T>& x) {
  Tensor<T> y = Tensor<T>::scalar(detail::lane_sum(x.values().data(), x.size()));
  check_finite(y, "sum");
  if (tape.wants({&x})) {
    tape.record({x}, y, [x](const Tensor<T>& out) {
      auto dx = x.grad_buffer();
      const T g = out.grad()[0];
      for (auto& d : dx) d += g;
    });
  }
  return y;
}

template <typename T>
Tensor<T> square(Tape<T>& tape, const Tensor<T>& x) {
  std::vector<T> out(x.size());
  auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * xv[i];
  Tensor<T> y(x.shape(), std::move(out));
  check_finite(y, "square");
  if (tape.wants({&x})) {
    tape.record({x}, y, [x](const Tensor<T>& out) {
      auto dx = x.grad_buffer();
      auto dy = out.grad();
      auto xv = x.values();
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += T(2) * xv[i] * dy[i];
    });
  }
  return y;
}

template <typename T>
Tensor<T> mul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "mul");
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
  Tensor<T> y(a.shape(), std::move(out));
  check_finite(y, "mul");
  if (tape.wants({&a, &b})) {
    tape.record({a, b}, y, [a, b](const Tensor<T>& out) {
      auto dy = out.grad();
      if (a.requires_grad()) {
        auto da = a.grad_buffer();
        for (std::size_t i = 0; i < da.size(); ++i) da[i] += dy[i] * b.values()[i];
      }
      if (b.requires_grad()) {
        auto db = b.grad_buffer();
        for (std::size_t i = 0; i < db.size(); ++i) db[i] += dy[i] * a.values()[i];
      }
    });
  }
  return y;
}

#define NWQ_INSTANTIATE(T)                                                       \
  template Tensor<T> leaky_relu<T>(Tape<T>&, const Tensor<T>&, T);              \
  template Tensor<T> relu<T>(Tape<T>&, const Tensor<T>&);                       \
  template Tensor<T> sigmoid<T>(Tape<T>&, const Tensor<T>&);                    \
  template Tensor<T> sum<T>(Tape<T>&, const Tensor<T>&);                        \
  template Tensor<T> square<T>(Tape<T>&, const Tensor<T>&);                     \
  template Tensor<T> mul<T>(Tape<T>&, const Tensor<T>&, const Tensor<T>&);

NWQ_INSTANTIATE(float)
NWQ_INSTANTIATE(double)

#undef NWQ_INSTANTIATE

}  // namespace nwq
