#pragma once

// Forecast verification: regression scores in normalized units and thresholded
// event scores (CSI, POD, FAR, MCC) in mm/h.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nwq/data.hpp"
#include "nwq/tensor.hpp"
#include "nwq/training.hpp"

namespace nwq {

struct RegressionScores {
  double mse = 0.0;
  double mae = 0.0;
};

/// Sums squared and absolute errors in double over every value it is given.
class RegressionAccumulator {
 public:
  void add(std::span<const float> prediction, std::span<const float> target);
  std::uint64_t count() const { return n_; }
  /// Throws ContractError when nothing was added.
  RegressionScores scores() const;

 private:
  double se_ = 0.0;
  double ae_ = 0.0;
  std::uint64_t n_ = 0;
};

/// Mean squared / absolute error over every (sample, lead, i, j).
RegressionScores eval_regression(std::span<const Tensor<float>> predictions,
                                 std::span<const Tensor<float>> targets);

/// 1 where field >= threshold.
std::vector<std::uint8_t> binarize(std::span<const float> field, double threshold);

struct ConfusionCounts {
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;

  std::uint64_t total() const { return tp + fp + fn + tn; }
  ConfusionCounts& operator+=(const ConfusionCounts& o);
  bool operator==(const ConfusionCounts&) const = default;
};

/// Counters indexed by (threshold, lead time).
class ConfusionTable {
 public:
  ConfusionTable(std::vector<double> thresholds, std::size_t lead_times);

  ConfusionCounts& at(std::size_t threshold_index, std::size_t lead);
  const ConfusionCounts& at(std::size_t threshold_index, std::size_t lead) const;
  const std::vector<double>& thresholds() const { return thresholds_; }
  std::size_t lead_times() const { return leads_; }

 private:
  std::vector<double> thresholds_;
  std::size_t leads_;
  std::vector<ConfusionCounts> cells_;
};

/// Per-pixel update; DimensionError when the masks differ in size.
void accumulate_confusion(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> observed,
                          ConfusionCounts& counts);
void accumulate_confusion(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> observed,
                          ConfusionTable& table, std::size_t threshold_index, std::size_t lead);

/// nullopt when the denominator is zero.
std::optional<double> csi(const ConfusionCounts& c);
std::optional<double> pod(const ConfusionCounts& c);
std::optional<double> far(const ConfusionCounts& c);
/// 0 when any factor under the root is zero.
double mcc(const ConfusionCounts& c);

struct EventScores {
  std::optional<double> csi, pod, far;
  double mcc = 0.0;
};
EventScores event_scores(const ConfusionCounts& c);

/// Lead-time average of per-lead scores; missing values are skipped.
EventScores average_scores(std::span<const EventScores> per_lead);

// --- Model evaluation ---------------------------------------------------------------

struct OutputHead {
  std::string name;                   // "det" or "q0.5", "q0.9", ...
  std::optional<std::size_t> q_index;  // none for deterministic models
  std::optional<double> level;
};

/// Output heads of a model: one deterministic head, or one per quantile.
std::vector<OutputHead> output_heads(const ModelConfig& config);

struct SummaryRow {
  std::string model, output;
  double threshold = 0.0;
  EventScores scores;
  double mse = 0.0, mae = 0.0;
};

struct CurveRow {
  std::string model, output;
  double threshold = 0.0;
  std::size_t lead_time = 0;  // 1-based forecast step
  EventScores scores;
};

struct CoverageRow {
  std::string model, output;
  double level = 0.0;
  double coverage = 0.0;  // share of target pixels <= the head's prediction
};

struct EvaluationReport {
  std::vector<SummaryRow> summary;
  std::vector<CurveRow> curves;
  std::vector<CoverageRow> coverage;
  /// Observed event counts per threshold, pooled over leads.
  std::vector<std::uint64_t> observed_events;

  void append(const EvaluationReport& other);
  void write_summary_csv(std::ostream& os) const;
  void write_curves_csv(std::ostream& os) const;
  void write_coverage_csv(std::ostream& os) const;
};

/// Runs the model over `samples` in batches and returns [N, out, H, W] normalized outputs.
Tensor<float> predict(const Checkpoint& ckpt, const Sequences& samples, std::size_t batch_size = 32);

/// Scores every head of `ckpt` on `test`. Predictions and observations are denormalized
/// with `stats` and converted to mm/h before thresholding; regression scores stay in
/// normalized units. `only` restricts evaluation to the named heads (ContractError if
/// a requested head does not exist).
EvaluationReport evaluate_model(const std::string& model_name, const Checkpoint& ckpt,
                                const Sequences& test, const NormalizationStats& stats,
                                std::span<const double> thresholds,
                                std::span<const std::string> only = {});

/// Validation MSE of one head, in normalized units.
double head_mse(const Checkpoint& ckpt, const Sequences& samples, const NormalizationStats& stats,
                std::optional<std::size_t> q_index);

}  // namespace nwq
