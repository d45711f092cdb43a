#include "nwq/objectives.hpp"

#include <cmath>

#include "nwq/error.hpp"

namespace nwq {

std::string loss_name(const LossKind& kind) {
  struct Visitor {
    std::string operator()(const MseLoss&) const { return "mse"; }
    std::string operator()(const MaeLoss&) const { return "mae"; }
    std::string operator()(const MultiQuantileLoss&) const { return "quantile"; }
  };
  return std::visit(Visitor{}, kind);
}

LossKind parse_loss(const std::string& name, const QuantileSpec& spec) {
  if (name == "mse") return MseLoss{};
  if (name == "mae") return MaeLoss{};
  if (name == "quantile") {
    spec.validate();
    return MultiQuantileLoss{spec};
  }
  throw ConfigError("unknown loss '" + name + "' (expected mse, mae or quantile)");
}

double pinball_value(double y, double y_hat, double q) {
  const double e = y - y_hat;
  return e >= 0.0 ? q * e : (q - 1.0) * e;
}

namespace {

template <typename T>
void require_same(const Tensor<T>& y, const Tensor<T>& y_hat, const char* op) {
  if (y.shape() != y_hat.shape()) {
    throw DimensionError(std::string(op) + ": target " + shape_string(y.shape()) +
                         " and prediction " + shape_string(y_hat.shape()) + " differ");
  }
}

template <typename T>
std::size_t batch_of(const Tensor<T>& y, const char* op) {
  if (y.rank() != 4) {
    throw DimensionError(std::string(op) + ": expected [B, L, H, W], got " + shape_string(y.shape()));
  }
  if (y.dim(0) == 0) throw ContractError(std::string(op) + ": empty batch");
  return y.dim(0);
}

}  // namespace

template <typename T>
Tensor<T> pinball(Tape<T>& tape, const Tensor<T>& y, const Tensor<T>& y_hat, double q) {
  require_same(y, y_hat, "pinball");
  if (!(q > 0.0 && q < 1.0)) throw ContractError("pinball: quantile level outside (0, 1)");
  double total = 0.0;
  auto yv = y.values();
  auto pv = y_hat.values();
  for (std::size_t i = 0; i < yv.size(); ++i) total += pinball_value(yv[i], pv[i], q);
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(total));
  check_finite(out, "pinball");
  if (tape.wants({&y_hat})) {
    tape.record({y_hat}, out, [y, y_hat, q](const Tensor<T>& out) {
      const double g = out.grad()[0];
      auto d = y_hat.grad_buffer();
      auto yv = y.values();
      auto pv = y_hat.values();
      for (std::size_t i = 0; i < d.size(); ++i) {
        const double e = static_cast<double>(yv[i]) - static_cast<double>(pv[i]);
        d[i] += static_cast<T>(g * (e >= 0.0 ? -q : 1.0 - q));
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> multi_quantile_loss(Tape<T>& tape, const Tensor<T>& y, const Tensor<T>& y_hat,
                              const QuantileSpec& spec) {
  const std::size_t b = batch_of(y, "multi_quantile_loss");
  const std::size_t nq = spec.size();
  if (nq == 0) throw ContractError("multi_quantile_loss: empty quantile spec");
  if (y_hat.rank() != 4 || y_hat.dim(0) != b || y_hat.dim(1) != y.dim(1) * nq ||
      y_hat.dim(2) != y.dim(2) || y_hat.dim(3) != y.dim(3)) {
    throw DimensionError("multi_quantile_loss: prediction " + shape_string(y_hat.shape()) +
                         " does not carry " + std::to_string(nq) + " quantiles for target " +
                         shape_string(y.shape()));
  }
  const std::size_t leads = y.dim(1), plane = y.dim(2) * y.dim(3);
  auto yv = y.values();
  auto pv = y_hat.values();
  double total = 0.0;
  for (std::size_t s = 0; s < b; ++s) {
    for (std::size_t q = 0; q < nq; ++q) {
      double part = 0.0;
      for (std::size_t l = 0; l < leads; ++l) {
        const std::size_t ty = (s * leads + l) * plane;
        const std::size_t tp = (s * leads * nq + l * nq + q) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          part += pinball_value(yv[ty + i], pv[tp + i], spec.levels[q]);
        }
      }
      total += spec.weights[q] * part;
    }
  }
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(total / static_cast<double>(b)));
  check_finite(out, "multi_quantile_loss");
  if (tape.wants({&y_hat})) {
    tape.record({y_hat}, out, [y, y_hat, spec, b, nq, leads, plane](const Tensor<T>& out) {
      const double g = out.grad()[0] / static_cast<double>(b);
      auto d = y_hat.grad_buffer();
      auto yv = y.values();
      auto pv = y_hat.values();
      for (std::size_t s = 0; s < b; ++s) {
        for (std::size_t l = 0; l < leads; ++l) {
          for (std::size_t q = 0; q < nq; ++q) {
            const double lvl = spec.levels[q];
            const double gw = g * spec.weights[q];
            const std::size_t ty = (s * leads + l) * plane;
            const std::size_t tp = (s * leads * nq + l * nq + q) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
              const double e = static_cast<double>(yv[ty + i]) - static_cast<double>(pv[tp + i]);
              d[tp + i] += static_cast<T>(gw * (e >= 0.0 ? -lvl : 1.0 - lvl));
            }
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> mse_loss(Tape<T>& tape, const Tensor<T>& y, const Tensor<T>& y_hat) {
  require_same(y, y_hat, "mse_loss");
  const std::size_t b = batch_of(y, "mse_loss");
  double total = 0.0;
  auto yv = y.values();
  auto pv = y_hat.values();
  for (std::size_t i = 0; i < yv.size(); ++i) {
    const double e = static_cast<double>(yv[i]) - static_cast<double>(pv[i]);
    total += e * e;
  }
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(total / static_cast<double>(b)));
  check_finite(out, "mse_loss");
  if (tape.wants({&y_hat})) {
    tape.record({y_hat}, out, [y, y_hat, b](const Tensor<T>& out) {
      const double g = out.grad()[0] / static_cast<double>(b);
      auto d = y_hat.grad_buffer();
      auto yv = y.values();
      auto pv = y_hat.values();
      for (std::size_t i = 0; i < d.size(); ++i) {
        const double e = static_cast<double>(yv[i]) - static_cast<double>(pv[i]);
        d[i] += static_cast<T>(-2.0 * e * g);
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> mae_loss(Tape<T>& tape, const Tensor<T>& y, const Tensor<T>& y_hat) {
  require_same(y, y_hat, "mae_loss");
  const std::size_t b = batch_of(y, "mae_loss");
  double total = 0.0;
  auto yv = y.values();
  auto pv = y_hat.values();
  for (std::size_t i = 0; i < yv.size(); ++i) {
    total += std::abs(static_cast<double>(yv[i]) - static_cast<double>(pv[i]));
  }
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(total / static_cast<double>(b)));
  check_finite(out, "mae_loss");
  if (tape.wants({&y_hat})) {
    tape.record({y_hat}, out, [y, y_hat, b](const Tensor<T>& out) {
      const double g = out.grad()[0] / static_cast<double>(b);
      auto d = y_hat.grad_buffer();
      auto yv = y.values();
      auto pv = y_hat.values();
      for (std::size_t i = 0; i < d.size(); ++i) {
        const double e = static_cast<double>(yv[i]) - static_cast<double>(pv[i]);
        if (e > 0.0) {
          d[i] += static_cast<T>(-g);
        } else if (e < 0.0) {
          d[i] += static_cast<T>(g);
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> compute_loss(Tape<T>& tape, const LossKind& kind, const Tensor<T>& y, const Tensor<T>& y_hat) {
  if (std::holds_alternative<MseLoss>(kind)) return mse_loss(tape, y, y_hat);
  if (std::holds_alternative<MaeLoss>(kind)) return mae_loss(tape, y, y_hat);
  return multi_quantile_loss(tape, y, y_hat, std::get<MultiQuantileLoss>(kind).spec);
}

#define NWQ_INSTANTIATE(T)                                                                        \
  template Tensor<T> pinball<T>(Tape<T>&, const Tensor<T>&, const Tensor<T>&, double);            \
  template Tensor<T> multi_quantile_loss<T>(Tape<T>&, const Tensor<T>&, const Tensor<T>&,         \
                                            const QuantileSpec&);                                 \
  template Tensor<T> mse_loss<T>(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                   \
  template Tensor<T> mae_loss<T>(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                   \
  template Tensor<T> compute_loss<T>(Tape<T>&, const LossKind&, const Tensor<T>&, const Tensor<T>&);

NWQ_INSTANTIATE(float)
NWQ_INSTANTIATE(double)

#undef NWQ_INSTANTIATE

}  // namespace nwq
