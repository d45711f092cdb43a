#include <cmath>

#include "nwq/json_fields.hpp"
#include "nwq/training.hpp"

namespace nwq {

using nlohmann::json;

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("train: batch_size must be >= 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("train: learning_rate must be finite and >= 0");
  }
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw ConfigError("train: Adam betas must lie in [0, 1)");
  }
  if (!(adam_epsilon > 0.0)) throw ConfigError("train: adam_epsilon must be > 0");
  if (!(plateau_factor > 0.0 && plateau_factor < 1.0)) {
    throw ConfigError("train: plateau_factor must lie in (0, 1)");
  }
  if (plateau_patience == 0) throw ConfigError("train: plateau_patience must be >= 1");
  if (early_stop_patience < plateau_patience) {
    throw ConfigError("train: early_stop_patience must be >= plateau_patience");
  }
  if (max_epochs == 0) throw ConfigError("train: max_epochs must be >= 1");
  if (n_runs == 0) throw ConfigError("train: n_runs must be >= 1");
  if (const auto* q = std::get_if<MultiQuantileLoss>(&loss)) q->spec.validate();
}

json quantile_spec_to_json(const QuantileSpec& spec) {
  return json{{"levels", spec.levels}, {"weights", spec.weights}};
}

QuantileSpec quantile_spec_from_json(const json& j) {
  QuantileSpec spec;
  JsonFields f(j, "quantiles");
  f.require("levels", spec.levels);
  f.require("weights", spec.weights);
  f.finish();
  spec.validate();
  return spec;
}

json model_config_to_json(const ModelConfig& c) {
  json j{{"input_frames", c.input_frames},
         {"lead_times", c.lead_times},
         {"base_channels", c.base_channels},
         {"depth", c.depth},
         {"grid_h", c.grid_h},
         {"grid_w", c.grid_w},
         {"attention_enabled", c.attention_enabled},
         {"seed", c.seed}};
  j["quantiles"] = c.quantiles ? quantile_spec_to_json(*c.quantiles) : json(nullptr);
  return j;
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  JsonFields f(j, "model");
  f.get("input_frames", c.input_frames);
  f.get("lead_times", c.lead_times);
  f.get("base_channels", c.base_channels);
  f.get("depth", c.depth);
  f.get("grid_h", c.grid_h);
  f.get("grid_w", c.grid_w);
  f.get("attention_enabled", c.attention_enabled);
  f.get("seed", c.seed);
  if (const auto* q = f.object("quantiles"); q && !q->is_null()) c.quantiles = quantile_spec_from_json(*q);
  f.finish();
  c.validate();
  return c;
}

json train_config_to_json(const TrainConfig& c) {
  return json{{"loss", loss_name(c.loss)},
              {"batch_size", c.batch_size},
              {"learning_rate", c.learning_rate},
              {"adam_beta1", c.adam_beta1},
              {"adam_beta2", c.adam_beta2},
              {"adam_epsilon", c.adam_epsilon},
              {"plateau_factor", c.plateau_factor},
              {"plateau_patience", c.plateau_patience},
              {"early_stop_patience", c.early_stop_patience},
              {"max_epochs", c.max_epochs},
              {"n_runs", c.n_runs},
              {"seed", c.seed}};
}

TrainConfig train_config_from_json(const json& j, const QuantileSpec& quantiles) {
  TrainConfig c;
  JsonFields f(j, "train");
  std::string loss = loss_name(c.loss);
  f.get("loss", loss);
  c.loss = parse_loss(loss, quantiles);
  f.get("batch_size", c.batch_size);
  f.get("learning_rate", c.learning_rate);
  f.get("adam_beta1", c.adam_beta1);
  f.get("adam_beta2", c.adam_beta2);
  f.get("adam_epsilon", c.adam_epsilon);
  f.get("plateau_factor", c.plateau_factor);
  f.get("plateau_patience", c.plateau_patience);
  f.get("early_stop_patience", c.early_stop_patience);
  f.get("max_epochs", c.max_epochs);
  f.get("n_runs", c.n_runs);
  f.get("seed", c.seed);
  f.finish();
  c.validate();
  return c;
}

}  // namespace nwq
