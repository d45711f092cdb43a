#pragma once

// Optimization protocol: Adam, reduce-on-plateau, early stopping, best-of-n runs,
// the upper-quantile weight grid search and NWQC checkpoints.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "nwq/data.hpp"
#include "nwq/error.hpp"
#include "nwq/model.hpp"
#include "nwq/objectives.hpp"

namespace nwq {

struct TrainConfig {
  LossKind loss = MseLoss{};
  std::size_t batch_size = 16;
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double plateau_factor = 0.1;
  std::size_t plateau_patience = 4;
  std::size_t early_stop_patience = 15;
  std::size_t max_epochs = 200;
  std::size_t n_runs = 5;
  std::uint64_t seed = 0;

  /// Throws ConfigError on B = 0, factor outside (0, 1), early stop < plateau patience, ...
  void validate() const;
};

// --- JSON forms shared by checkpoints and experiment configs ----------------------

nlohmann::json quantile_spec_to_json(const QuantileSpec& spec);
QuantileSpec quantile_spec_from_json(const nlohmann::json& j);
nlohmann::json model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);
/// The loss is stored by name; a quantile loss takes its spec from `quantiles`.
nlohmann::json train_config_to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j, const QuantileSpec& quantiles);

// --- Optimizer --------------------------------------------------------------------

struct AdamState {
  std::vector<std::vector<float>> m;  // first moments, one block per parameter
  std::vector<std::vector<float>> v;  // second moments
  std::uint64_t step = 0;

  static AdamState for_parameters(const Parameters<float>& params);
  bool operator==(const AdamState&) const = default;
};

/// One bias-corrected Adam update from the gradients held by `params`. Parameters
/// without a gradient are treated as having a zero gradient. Throws TrainingError
/// naming the parameter when a gradient is NaN or infinite (nothing is updated then).
void adam_step(Parameters<float>& params, AdamState& state, double lr, double beta1, double beta2,
               double epsilon);

// --- Schedules ----------------------------------------------------------------------

/// Learning rate to use after the last epoch in `history`. Replays the history: an
/// epoch improves when its loss is strictly below the best so far; after `patience`
/// consecutive non-improving epochs (counted since the last best or last reduction)
/// the rate is reduced. Returns lr * factor if that happens at the final epoch,
/// lr otherwise.
double plateau_scheduler(std::span<const double> history, double lr, double factor,
                         std::size_t patience);

/// True once `patience` consecutive epochs have passed without a strict improvement.
bool should_stop_early(std::span<const double> history, std::size_t patience);

// --- Logs and checkpoints -----------------------------------------------------------

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;  // objective per sample, divided by L*H*W
  double val_loss = 0.0;    // same scaling, on the validation split
  double learning_rate = 0.0;
  double seconds = 0.0;

  /// Ignores wall time.
  bool same_numbers(const EpochRecord& other) const;
};

struct RunLog {
  std::size_t run_index = 0;
  std::vector<EpochRecord> epochs;

  std::vector<double> val_history() const;
  /// CSV with header epoch,train_loss,val_loss,lr,seconds.
  void write_csv(std::ostream& os) const;
  void write_csv(const std::filesystem::path& path) const;
};

/// Failure during training. Carries the log up to the failing epoch.
class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, RunLog log = {}) : Error(what), log_(std::move(log)) {}
  const RunLog& log() const noexcept { return log_; }

 private:
  RunLog log_;
};

struct Checkpoint {
  ModelConfig model;
  NormalizationStats stats;
  LossKind loss = MseLoss{};
  Parameters<float> params;
  AdamState adam;
  std::size_t epoch = 0;
  double validation_loss = 0.0;
  std::size_t run_index = 0;
  double learning_rate = 0.0;          // rate for the next epoch
  std::vector<EpochRecord> history;  // epochs 0..epoch, wall time dropped

  Checkpoint clone() const;
};

constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// True when parameters, optimizer state and header fields all match bit for bit.
bool checkpoints_identical(const Checkpoint& a, const Checkpoint& b);

// --- Training -----------------------------------------------------------------------

struct TrainHooks {
  /// Called after every optimizer step with (epoch, batch index, batch loss per pixel).
  std::function<void(std::size_t, std::size_t, double)> on_batch;
  /// Called after every epoch.
  std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
  Checkpoint best;  // lowest validation loss, earliest epoch on ties
  Checkpoint last;  // state after the final epoch, for resuming
  RunLog log;
};

/// Trains one run with seed train.seed + run_index (initialization and batch order).
/// With `resume`, continues from resume->last until max_epochs or early stop; the
/// result equals an uninterrupted run of the same total length.
TrainResult train_one(const ModelConfig& model, const Dataset& data, const TrainConfig& train,
                      std::size_t run_index, const TrainResult* resume = nullptr,
                      const TrainHooks& hooks = {});

/// Index of the lowest finite value, lower index on ties. nullopt when none is finite.
std::optional<std::size_t> select_best_run(std::span<const double> best_val_losses);

struct BestOfResult {
  Checkpoint best;
  std::size_t selected_run = 0;
  std::vector<RunLog> logs;               // one per run, diverged runs included
  std::vector<double> best_val_losses;  // NaN for diverged runs
};

/// Runs train_one for run indices 0..n_runs-1 and keeps the run with the lowest best
/// validation loss. Throws TrainingError when every run diverged.
BestOfResult train_best_of(const ModelConfig& model, const Dataset& data, const TrainConfig& train,
                           const TrainHooks& hooks = {});

struct GridRow {
  double weight = 0.0;
  double val_mse_median = 0.0;
};

struct GridSearchResult {
  std::vector<GridRow> rows;
  double best_weight = 0.0;

  void write_csv(std::ostream& os) const;
};

/// For each shared upper weight w, trains the quantile model with weights {1, w, w}
/// (best of train.n_runs) and records the validation MSE of the median head.
/// The best weight is the argmin, the smaller weight on ties.
GridSearchResult grid_search_weights(const ModelConfig& model, const Dataset& data,
                                     const TrainConfig& train, std::span<const double> grid,
                                     const TrainHooks& hooks = {});

}  // namespace nwq
