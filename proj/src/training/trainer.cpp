#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cmath>
#include <fstream>
#include <limits>
#include <mutex>
#include <ostream>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "nwq/random.hpp"
#include "nwq/training.hpp"

namespace nwq {

bool EpochRecord::same_numbers(const EpochRecord& o) const {
  return epoch == o.epoch && train_loss == o.train_loss && val_loss == o.val_loss &&
         learning_rate == o.learning_rate;
}

std::vector<double> RunLog::val_history() const {
  std::vector<double> out;
  for (const auto& e : epochs) out.push_back(e.val_loss);
  return out;
}

void RunLog::write_csv(std::ostream& os) const {
  os << "epoch,train_loss,val_loss,lr,seconds\n";
  char line[160];
  for (const auto& e : epochs) {
    std::snprintf(line, sizeof line, "%zu,%.10g,%.10g,%.10g,%.3f\n", e.epoch, e.train_loss, e.val_loss,
                  e.learning_rate, e.seconds);
    os << line;
  }
}

void RunLog::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  write_csv(out);
}

namespace {

// Activations are allocated and freed every step; keep them on the heap instead of
// paying an mmap/munmap pair each time.
void keep_heap_warm() {
#if defined(__GLIBC__)
  static std::once_flag once;
  std::call_once(once, [] {
    mallopt(M_MMAP_THRESHOLD, 256 << 20);
    mallopt(M_TRIM_THRESHOLD, 512 << 20);
  });
#endif
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t run_seed, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(mix_seed(run_seed, epoch));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

// Mean objective per sample over a split, divided by L*H*W.
double split_loss(const Parameters<float>& params, const ModelConfig& model, const LossKind& loss,
                  const Sequences& samples, const NormalizationStats& stats, std::size_t batch_size) {
  Tape<float> tape(false);
  double total = 0.0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < samples.size(); start += batch_size) {
    idx.clear();
    for (std::size_t i = start; i < std::min(samples.size(), start + batch_size); ++i) idx.push_back(i);
    const Batch batch = make_batch(samples, idx, stats);
    const auto out = forward(tape, params, model, batch.inputs);
    total += static_cast<double>(compute_loss(tape, loss, batch.targets, out).item()) *
             static_cast<double>(idx.size());
  }
  const double per_pixel = static_cast<double>(model.lead_times * model.grid_h * model.grid_w);
  return total / static_cast<double>(samples.size()) / per_pixel;
}

void check_compatible(const ModelConfig& model, const Dataset& data, const LossKind& loss) {
  const auto& m = data.manifest;
  if (model.input_frames != m.input_frames || model.lead_times != m.lead_times ||
      model.grid_h != m.height || model.grid_w != m.width) {
    throw ConfigError("model configuration does not match the dataset shape");
  }
  const bool quantile = std::holds_alternative<MultiQuantileLoss>(loss);
  if (quantile != model.quantiles.has_value()) {
    throw ConfigError("quantile loss requires a quantile head and vice versa");
  }
  if (quantile && std::get<MultiQuantileLoss>(loss).spec.size() != model.quantiles->size()) {
    throw ConfigError("quantile loss and model head disagree on the number of quantiles");
  }
  if (data.splits.train.empty() || data.splits.validation.empty()) {
    throw ConfigError("training needs non-empty train and validation splits");
  }
}

}  // namespace

TrainResult train_one(const ModelConfig& model_in, const Dataset& data, const TrainConfig& train,
                      std::size_t run_index, const TrainResult* resume, const TrainHooks& hooks) {
  train.validate();
  check_compatible(model_in, data, train.loss);
  keep_heap_warm();
  const std::uint64_t run_seed = train.seed + run_index;
  ModelConfig model = model_in;
  model.seed = run_seed;

  TrainResult result;
  result.log.run_index = run_index;
  Checkpoint state;
  std::size_t first_epoch = 0;
  if (resume) {
    if (resume->last.run_index != run_index || !(resume->last.model == model)) {
      throw ConfigError("resume checkpoint belongs to a different run or model");
    }
    state = resume->last.clone();
    result.best = resume->best.clone();
    result.log = resume->log;
    first_epoch = state.epoch + 1;
  } else {
    state.model = model;
    state.stats = data.stats;
    state.loss = train.loss;
    state.params = init_parameters(model);
    state.adam = AdamState::for_parameters(state.params);
    state.run_index = run_index;
    state.learning_rate = train.learning_rate;
    result.best.validation_loss = std::numeric_limits<double>::infinity();
  }

  const std::size_t pixels = model.lead_times * model.grid_h * model.grid_w;
  const auto& samples = data.splits.train;
  std::vector<double> history;
  for (const auto& e : result.log.epochs) history.push_back(e.val_loss);
  if (resume && should_stop_early(history, train.early_stop_patience)) {
    result.last = std::move(state);
    return result;
  }

  for (std::size_t epoch = first_epoch; epoch < train.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = state.learning_rate;
    const auto order = epoch_order(samples.size(), run_seed, epoch);
    double train_total = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += train.batch_size, ++batch_index) {
      const std::size_t end = std::min(order.size(), start + train.batch_size);
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      const Batch batch = make_batch(samples, idx, data.stats);
      double value = 0.0;
      try {
        Tape<float> tape;
        state.params.zero_grad();
        const auto out = forward(tape, state.params, model, batch.inputs);
        const auto loss = compute_loss(tape, train.loss, batch.targets, out);
        backward(loss, tape);
        adam_step(state.params, state.adam, lr, train.adam_beta1, train.adam_beta2, train.adam_epsilon);
        value = static_cast<double>(loss.item());
      } catch (const TrainingError& e) {
        throw TrainingError(std::string(e.what()) + " at epoch " + std::to_string(epoch), result.log);
      } catch (const NumericError& e) {
        throw TrainingError("diverged at epoch " + std::to_string(epoch) + ": " + e.what(), result.log);
      }
      train_total += value * static_cast<double>(idx.size());
      if (hooks.on_batch) hooks.on_batch(epoch, batch_index, value / static_cast<double>(pixels));
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = train_total / static_cast<double>(samples.size()) / static_cast<double>(pixels);
    try {
      rec.val_loss = split_loss(state.params, model, train.loss, data.splits.validation, data.stats,
                                std::max<std::size_t>(train.batch_size, 32));
    } catch (const NumericError&) {
      rec.val_loss = std::numeric_limits<double>::quiet_NaN();
    }
    rec.learning_rate = lr;
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.log.epochs.push_back(rec);
    if (!std::isfinite(rec.val_loss)) {
      throw TrainingError("validation loss diverged at epoch " + std::to_string(epoch), result.log);
    }
    history.push_back(rec.val_loss);
    state.history.push_back(rec);
    state.history.back().seconds = 0.0;
    state.epoch = epoch;
    state.validation_loss = rec.val_loss;
    state.learning_rate = plateau_scheduler(history, lr, train.plateau_factor, train.plateau_patience);
    if (rec.val_loss < result.best.validation_loss) result.best = state.clone();
    if (hooks.on_epoch) hooks.on_epoch(rec);
    if (should_stop_early(history, train.early_stop_patience)) break;
  }
  result.last = std::move(state);
  return result;
}

std::optional<std::size_t> select_best_run(std::span<const double> losses) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < losses.size(); ++i) {
    if (!std::isfinite(losses[i])) continue;
    if (!best || losses[i] < losses[*best]) best = i;
  }
  return best;
}

BestOfResult train_best_of(const ModelConfig& model, const Dataset& data, const TrainConfig& train,
                           const TrainHooks& hooks) {
  train.validate();
  BestOfResult out;
  std::vector<Checkpoint> bests;
  std::string last_error;
  for (std::size_t run = 0; run < train.n_runs; ++run) {
    try {
      auto r = train_one(model, data, train, run, nullptr, hooks);
      out.best_val_losses.push_back(r.best.validation_loss);
      out.logs.push_back(std::move(r.log));
      bests.push_back(std::move(r.best));
    } catch (const TrainingError& e) {
      last_error = e.what();
      out.best_val_losses.push_back(std::numeric_limits<double>::quiet_NaN());
      out.logs.push_back(e.log());
      out.logs.back().run_index = run;
      bests.emplace_back();
    }
  }
  const auto selected = select_best_run(out.best_val_losses);
  if (!selected) throw TrainingError("all " + std::to_string(train.n_runs) + " runs diverged: " + last_error);
  out.selected_run = *selected;
  out.best = std::move(bests[*selected]);
  return out;
}

}  // namespace nwq
