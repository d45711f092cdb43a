#include <fstream>

#include "nwq/experiment.hpp"
#include "nwq/json_fields.hpp"

namespace nwq {

using nlohmann::json;

TrainConfig ExperimentConfig::desk_train() {
  TrainConfig t;
  t.n_runs = 3;
  t.max_epochs = 12;
  return t;
}

ModelConfig ExperimentConfig::model_config(const LossKind& loss) const {
  ModelConfig m;
  m.input_frames = dataset.input_frames;
  m.lead_times = dataset.lead_times;
  m.grid_h = dataset.height;
  m.grid_w = dataset.width;
  m.base_channels = base_channels;
  m.depth = depth;
  m.attention_enabled = attention_enabled;
  m.seed = train.seed;
  if (const auto* q = std::get_if<MultiQuantileLoss>(&loss)) m.quantiles = q->spec;
  return m;
}

TrainConfig ExperimentConfig::train_config(const std::string& name) const {
  TrainConfig t = train;
  t.loss = parse_loss(name, quantiles);
  return t;
}

void ExperimentConfig::validate() const {
  dataset.validate();
  train.validate();
  quantiles.validate();
  model_config(MseLoss{}).validate();
  if (thresholds.empty()) throw ConfigError("experiment: thresholds must not be empty");
  for (double t : thresholds) {
    if (!(t >= 0.0)) throw ConfigError("experiment: thresholds must be >= 0");
  }
  for (double w : grid) {
    if (!(w > 0.0)) throw ConfigError("experiment: grid weights must be > 0");
  }
  if (grid_runs == 0 || grid_max_epochs == 0) throw ConfigError("experiment: grid budget must be positive");
  if (!(image_max_rate > 0.0)) throw ConfigError("experiment: image_max_rate must be > 0");
}

json ExperimentConfig::to_json() const {
  json d = dataset.to_json();
  d.erase("counts");
  d.erase("rate_factor");
  return json{{"dataset", d},
              {"model", {{"base_channels", base_channels}, {"depth", depth}, {"attention_enabled", attention_enabled}}},
              {"train", train_config_to_json(train)},
              {"quantiles", quantile_spec_to_json(quantiles)},
              {"thresholds", thresholds},
              {"grid", grid},
              {"grid_runs", grid_runs},
              {"grid_max_epochs", grid_max_epochs},
              {"image_max_rate", image_max_rate},
              {"out_dir", out_dir}};
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  ExperimentConfig c;
  JsonFields f(j, "config");
  if (const auto* d = f.object("dataset")) c.dataset = DatasetManifest::from_json(*d);
  if (const auto* m = f.object("model")) {
    JsonFields mf(*m, "model");
    mf.get("base_channels", c.base_channels);
    mf.get("depth", c.depth);
    mf.get("attention_enabled", c.attention_enabled);
    mf.finish();
  }
  if (const auto* q = f.object("quantiles")) c.quantiles = quantile_spec_from_json(*q);
  if (const auto* t = f.object("train")) {
    // Keys missing from the section fall back to the desk defaults, not the struct defaults.
    if (!t->is_object()) throw ConfigError("train: expected a JSON object");
    json merged = train_config_to_json(desk_train());
    for (auto it = t->begin(); it != t->end(); ++it) merged[it.key()] = it.value();
    c.train = train_config_from_json(merged, c.quantiles);
  }
  f.get("thresholds", c.thresholds);
  f.get("grid", c.grid);
  f.get("grid_runs", c.grid_runs);
  f.get("grid_max_epochs", c.grid_max_epochs);
  f.get("image_max_rate", c.image_max_rate);
  f.get("out_dir", c.out_dir);
  f.finish();
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return from_json(j);
}

void ExperimentConfig::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << to_json().dump(2) << '\n';
}

}  // namespace nwq
