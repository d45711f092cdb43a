#pragma once

// Training objectives as scalar tape ops. All three normalize by the batch size B
// only; sums run over lead time and grid cells, so magnitudes scale with L*H*W.

#include <string>
#include <variant>

#include "nwq/model.hpp"
#include "nwq/tensor.hpp"

namespace nwq {

struct MseLoss {
  bool operator==(const MseLoss&) const = default;
};
struct MaeLoss {
  bool operator==(const MaeLoss&) const = default;
};
struct MultiQuantileLoss {
  QuantileSpec spec;
  bool operator==(const MultiQuantileLoss&) const = default;
};

using LossKind = std::variant<MseLoss, MaeLoss, MultiQuantileLoss>;

/// "mse", "mae" or "quantile".
std::string loss_name(const LossKind& kind);
/// Inverse of loss_name; `spec` is used for "quantile". Throws ConfigError otherwise.
LossKind parse_loss(const std::string& name, const QuantileSpec& spec = QuantileSpec::standard());

/// Asymmetric absolute error for one pair: q*e if e >= 0, (q-1)*e otherwise, e = y - y_hat.
double pinball_value(double y, double y_hat, double q);

/// Sum over all elements of the pinball loss. The derivative w.r.t. y_hat is -q for
/// e >= 0 (right derivative at e = 0) and 1 - q for e < 0.
template <typename T>
Tensor<T> pinball(Tape<T>& tape, const Tensor<T>& y, const Tensor<T>& y_hat, double q);

/// (1/B) sum_b sum_q w_q sum_{l,i,j} pinball(y[b,l,i,j], y_hat[b, l*|Q|+q, i, j]).
template <typename T>
Tensor<T> multi_quantile_loss(Tape<T>& tape, const Tensor<T>& y, const Tensor<T>& y_hat,
                              const QuantileSpec& spec);

/// (1/B) sum of squared errors.
template <typename T>
Tensor<T> mse_loss(Tape<T>& tape, const Tensor<T>& y, const Tensor<T>& y_hat);

/// (1/B) sum of absolute errors; subgradient 0 at e = 0.
template <typename T>
Tensor<T> mae_loss(Tape<T>& tape, const Tensor<T>& y, const Tensor<T>& y_hat);

/// Dispatches on the loss kind. For MultiQuantile, y_hat carries L*|Q| channels.
template <typename T>
Tensor<T> compute_loss(Tape<T>& tape, const LossKind& kind, const Tensor<T>& y, const Tensor<T>& y_hat);

}  // namespace nwq
