#include <cstdio>
#include <ostream>

#include "nwq/training.hpp"
#include "nwq/verification.hpp"

namespace nwq {

void GridSearchResult::write_csv(std::ostream& os) const {
  os << "weight,val_mse_median\n";
  char line[96];
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%.10g,%.10g\n", r.weight, r.val_mse_median);
    os << line;
  }
}

GridSearchResult grid_search_weights(const ModelConfig& model, const Dataset& data,
                                     const TrainConfig& train, std::span<const double> grid,
                                     const TrainHooks& hooks) {
  if (grid.empty()) throw ConfigError("grid search needs at least one weight");
  const auto* base = std::get_if<MultiQuantileLoss>(&train.loss);
  if (!base) throw ConfigError("grid search requires the quantile loss");
  const auto median = base->spec.find(0.5);
  if (!median) throw ConfigError("grid search needs the 0.5 quantile in the spec");

  GridSearchResult result;
  for (double w : grid) {
    // Median weight stays 1, every other level shares w.
    QuantileSpec spec = base->spec;
    for (std::size_t i = 0; i < spec.size(); ++i) spec.weights[i] = i == *median ? 1.0 : w;
    spec.validate();
    TrainConfig tc = train;
    tc.loss = MultiQuantileLoss{spec};
    ModelConfig mc = model;
    mc.quantiles = spec;
    const auto best = train_best_of(mc, data, tc, hooks);
    result.rows.push_back({w, head_mse(best.best, data.splits.validation, data.stats, median)});
  }
  std::size_t arg = 0;
  for (std::size_t i = 1; i < result.rows.size(); ++i) {
    const auto& r = result.rows[i];
    const auto& b = result.rows[arg];
    if (r.val_mse_median < b.val_mse_median || (r.val_mse_median == b.val_mse_median && r.weight < b.weight)) {
      arg = i;
    }
  }
  result.best_weight = result.rows[arg].weight;
  return result;
}

}  // namespace nwq
