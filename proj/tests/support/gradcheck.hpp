#pragma once

// Central finite-difference gradient checks shared by the unit tests and the
// acceptance runner.
//
// The analytic gradient comes from the engine under test (float or double). The
// numeric reference is always evaluated in double on a twin instance holding the
// same float-representable values.
//
// Central differences are taken at a coarse and a fine step. When they agree the
// fine value is the reference. When they do not, a kink (relu, max, |e|) lies inside
// the coarse stencil; the reference is then the fine central value or, for a kink
// closer than the fine step, the one-sided slope on either side (the analytic rules
// return a one-sided derivative there). Such coordinates are counted as `kinked`.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "nwq/random.hpp"
#include "nwq/tensor.hpp"

namespace nwq::testing {

template <typename T>
using ScalarFn = std::function<Tensor<T>(Tape<T>&, const std::vector<Tensor<T>>&)>;

template <typename T>
struct Instance {
  std::vector<std::string> names;
  std::vector<Tensor<T>> inputs;  // every one requires a gradient
  ScalarFn<T> fn;
};

struct GradOptions {
  double coarse_step = 1e-4;
  double fine_step = 1e-5;
  // Denominator floor of the relative error: gradients smaller than
  // max(floor, scale_floor * largest |gradient| of the instance) are compared in
  // absolute terms.
  double floor = 1e-4;
  double scale_floor = 0.0;
  // Coarse and fine central differences agreeing to this (relative) means no kink.
  double agreement = 1e-5;
  // Coordinates checked per input tensor (all of them when the tensor is smaller).
  std::size_t coords_per_input = 16;
};

template <typename T>
GradOptions default_grad_options();
template <>
inline GradOptions default_grad_options<double>() {
  return {};
}
template <>
inline GradOptions default_grad_options<float>() {
  GradOptions o;
  o.floor = 1e-3;
  o.scale_floor = 1e-4;
  return o;
}

struct GradReport {
  double max_rel = 0.0;
  std::string worst;
  std::size_t checked = 0;
  std::size_t kinked = 0;  // coordinates with a kink inside the coarse stencil

  void merge(const GradReport& o) {
    checked += o.checked;
    kinked += o.kinked;
    if (o.max_rel > max_rel || worst.empty()) {
      max_rel = o.max_rel;
      worst = o.worst;
    }
  }
};

inline double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

template <typename T>
std::vector<std::vector<double>> analytic_gradients(Instance<T>& inst) {
  for (auto& t : inst.inputs) t.zero_grad();
  Tape<T> tape;
  const Tensor<T> loss = inst.fn(tape, inst.inputs);
  backward(loss, tape);
  std::vector<std::vector<double>> out;
  for (const auto& t : inst.inputs) out.emplace_back(t.grad().begin(), t.grad().end());
  return out;
}

/// Compares the gradients of `analytic` with finite differences of `reference`
/// (same inputs, evaluated in double).
template <typename T>
GradReport check_gradients(Instance<T>& analytic, Instance<double>& reference, const GradOptions& opt, Rng& rng) {
  const auto grads = analytic_gradients(analytic);
  double scale = 0.0;
  for (const auto& g : grads) {
    for (double v : g) scale = std::max(scale, std::abs(v));
  }
  const double floor = std::max(opt.floor, opt.scale_floor * scale);

  GradReport report;
  Tape<double> off(false);
  const double f0 = reference.fn(off, reference.inputs).item();
  for (std::size_t k = 0; k < reference.inputs.size(); ++k) {
    Tensor<double>& t = reference.inputs[k];
    std::vector<std::size_t> coords;
    if (t.size() <= opt.coords_per_input) {
      for (std::size_t i = 0; i < t.size(); ++i) coords.push_back(i);
    } else {
      for (std::size_t i = 0; i < opt.coords_per_input; ++i) coords.push_back(rng.below(t.size()));
    }
    for (std::size_t i : coords) {
      auto values = t.mutable_values();
      const double x0 = values[i];
      auto eval = [&](double x) {
        values[i] = x;
        const double f = reference.fn(off, reference.inputs).item();
        values[i] = x0;
        return f;
      };
      const double hc = opt.coarse_step, hf = opt.fine_step;
      const double coarse = (eval(x0 + hc) - eval(x0 - hc)) / (2.0 * hc);
      const double fp = eval(x0 + hf), fm = eval(x0 - hf);
      const double fine = (fp - fm) / (2.0 * hf);
      const double a = grads[k][i];
      double rel = relative_error(a, fine, floor);
      double numeric = fine;
      if (relative_error(coarse, fine, floor) > opt.agreement) {
        ++report.kinked;
        for (double side : {(fp - f0) / hf, (f0 - fm) / hf}) {
          const double r = relative_error(a, side, floor);
          if (r < rel) {
            rel = r;
            numeric = side;
          }
        }
      }
      ++report.checked;
      if (rel > report.max_rel || report.worst.empty()) {
        report.max_rel = rel;
        report.worst = reference.names[k] + "[" + std::to_string(i) + "] analytic " + std::to_string(a) +
                       " numeric " + std::to_string(numeric);
      }
    }
  }
  return report;
}

}  // namespace nwq::testing
