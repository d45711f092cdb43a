#include <algorithm>
#include <cmath>

#include "nwq/error.hpp"
#include "nwq/verification.hpp"

namespace nwq {

void RegressionAccumulator::add(std::span<const float> prediction, std::span<const float> target) {
  if (prediction.size() != target.size()) {
    throw DimensionError("regression: prediction has " + std::to_string(prediction.size()) +
                         " values, target " + std::to_string(target.size()));
  }
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double e = static_cast<double>(prediction[i]) - static_cast<double>(target[i]);
    se_ += e * e;
    ae_ += std::abs(e);
  }
  n_ += target.size();
}

RegressionScores RegressionAccumulator::scores() const {
  if (n_ == 0) throw ContractError("regression: no values accumulated");
  return {se_ / static_cast<double>(n_), ae_ / static_cast<double>(n_)};
}

RegressionScores eval_regression(std::span<const Tensor<float>> predictions,
                                 std::span<const Tensor<float>> targets) {
  if (predictions.size() != targets.size()) throw DimensionError("regression: sample counts differ");
  if (predictions.empty()) throw ContractError("regression: empty test set");
  RegressionAccumulator acc;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i].shape() != targets[i].shape()) {
      throw DimensionError("regression: sample " + std::to_string(i) + " shapes differ");
    }
    acc.add(predictions[i].values(), targets[i].values());
  }
  return acc.scores();
}

std::vector<std::uint8_t> binarize(std::span<const float> field, double threshold) {
  std::vector<std::uint8_t> mask(field.size());
  for (std::size_t i = 0; i < field.size(); ++i) mask[i] = static_cast<double>(field[i]) >= threshold ? 1 : 0;
  return mask;
}

ConfusionCounts& ConfusionCounts::operator+=(const ConfusionCounts& o) {
  tp += o.tp;
  fp += o.fp;
  fn += o.fn;
  tn += o.tn;
  return *this;
}

ConfusionTable::ConfusionTable(std::vector<double> thresholds, std::size_t lead_times)
    : thresholds_(std::move(thresholds)), leads_(lead_times), cells_(thresholds_.size() * lead_times) {}

ConfusionCounts& ConfusionTable::at(std::size_t t, std::size_t lead) {
  if (t >= thresholds_.size() || lead >= leads_) throw ContractError("confusion table index out of range");
  return cells_[t * leads_ + lead];
}

const ConfusionCounts& ConfusionTable::at(std::size_t t, std::size_t lead) const {
  if (t >= thresholds_.size() || lead >= leads_) throw ContractError("confusion table index out of range");
  return cells_[t * leads_ + lead];
}

void accumulate_confusion(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> observed,
                          ConfusionCounts& c) {
  if (predicted.size() != observed.size()) {
    throw DimensionError("confusion: masks of " + std::to_string(predicted.size()) + " and " +
                         std::to_string(observed.size()) + " pixels");
  }
  // Index by the pair (pred, obs): 0 = tn, 1 = fn, 2 = fp, 3 = tp.
  std::uint64_t cell[4] = {0, 0, 0, 0};
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    ++cell[(predicted[i] != 0 ? 2 : 0) + (observed[i] != 0 ? 1 : 0)];
  }
  c.tn += cell[0];
  c.fn += cell[1];
  c.fp += cell[2];
  c.tp += cell[3];
}

void accumulate_confusion(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> observed,
                          ConfusionTable& table, std::size_t threshold_index, std::size_t lead) {
  accumulate_confusion(predicted, observed, table.at(threshold_index, lead));
}

namespace {

std::optional<double> ratio(std::uint64_t num, std::uint64_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

std::optional<double> csi(const ConfusionCounts& c) { return ratio(c.tp, c.tp + c.fp + c.fn); }
std::optional<double> pod(const ConfusionCounts& c) { return ratio(c.tp, c.tp + c.fn); }
std::optional<double> far(const ConfusionCounts& c) { return ratio(c.fp, c.tp + c.fp); }

double mcc(const ConfusionCounts& c) {
  if (c.fp == 0 && c.fn == 0 && c.tp > 0 && c.tn > 0) return 1.0;
  if (c.tp == 0 && c.tn == 0 && c.fp > 0 && c.fn > 0) return -1.0;
  using LD = long double;
  const LD tp = c.tp, fp = c.fp, fn = c.fn, tn = c.tn;
  const LD a = tp + fp, b = tp + fn, d = tn + fp, e = tn + fn;
  if (a == 0 || b == 0 || d == 0 || e == 0) return 0.0;
  const LD value = (tp * tn - fp * fn) / (std::sqrt(a * b) * std::sqrt(d * e));
  return static_cast<double>(std::clamp(value, LD(-1), LD(1)));
}

EventScores event_scores(const ConfusionCounts& c) { return {csi(c), pod(c), far(c), mcc(c)}; }

EventScores average_scores(std::span<const EventScores> per_lead) {
  auto mean_of = [&](auto member) -> std::optional<double> {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& s : per_lead) {
      if (const auto& v = s.*member) {
        sum += *v;
        ++n;
      }
    }
    if (n == 0) return std::nullopt;
    return sum / static_cast<double>(n);
  };
  EventScores out;
  out.csi = mean_of(&EventScores::csi);
  out.pod = mean_of(&EventScores::pod);
  out.far = mean_of(&EventScores::far);
  double m = 0.0;
  for (const auto& s : per_lead) m += s.mcc;
  out.mcc = per_lead.empty() ? 0.0 : m / static_cast<double>(per_lead.size());
  return out;
}

}  // namespace nwq
