#include "nwq/data.hpp"
#include "nwq/error.hpp"
#include "nwq/json_fields.hpp"

namespace nwq {

using nlohmann::json;

json StormParams::to_json() const {
  return json{{"steps_per_hour", steps_per_hour},
              {"velocity_x", velocity_x},
              {"velocity_y", velocity_y},
              {"velocity_jitter", velocity_jitter},
              {"velocity_reversion", velocity_reversion},
              {"dry_fraction", dry_fraction},
              {"mean_wet_episode", mean_wet_episode},
              {"ramp_frames", ramp_frames},
              {"background_log_median", background_log_median},
              {"background_log_sigma", background_log_sigma},
              {"background_modulation", background_modulation},
              {"cell_birth_rate", cell_birth_rate},
              {"cell_log_peak_median", cell_log_peak_median},
              {"cell_log_peak_sigma", cell_log_peak_sigma},
              {"cell_sigma_min", cell_sigma_min},
              {"cell_sigma_max", cell_sigma_max},
              {"cell_max_aspect", cell_max_aspect},
              {"cell_growth", cell_growth},
              {"cell_decay", cell_decay},
              {"cell_noise", cell_noise},
              {"cell_max_age", cell_max_age},
              {"dry_cutoff", dry_cutoff}};
}

StormParams StormParams::from_json(const json& j) {
  StormParams p;
  JsonFields f(j, "storm");
  f.get("steps_per_hour", p.steps_per_hour);
  f.get("velocity_x", p.velocity_x);
  f.get("velocity_y", p.velocity_y);
  f.get("velocity_jitter", p.velocity_jitter);
  f.get("velocity_reversion", p.velocity_reversion);
  f.get("dry_fraction", p.dry_fraction);
  f.get("mean_wet_episode", p.mean_wet_episode);
  f.get("ramp_frames", p.ramp_frames);
  f.get("background_log_median", p.background_log_median);
  f.get("background_log_sigma", p.background_log_sigma);
  f.get("background_modulation", p.background_modulation);
  f.get("cell_birth_rate", p.cell_birth_rate);
  f.get("cell_log_peak_median", p.cell_log_peak_median);
  f.get("cell_log_peak_sigma", p.cell_log_peak_sigma);
  f.get("cell_sigma_min", p.cell_sigma_min);
  f.get("cell_sigma_max", p.cell_sigma_max);
  f.get("cell_max_aspect", p.cell_max_aspect);
  f.get("cell_growth", p.cell_growth);
  f.get("cell_decay", p.cell_decay);
  f.get("cell_noise", p.cell_noise);
  f.get("cell_max_age", p.cell_max_age);
  f.get("dry_cutoff", p.dry_cutoff);
  f.finish();
  return p;
}

json DatasetManifest::to_json() const {
  json j{{"seed", seed},
         {"n_frames", n_frames},
         {"height", height},
         {"width", width},
         {"storm", storm.to_json()},
         {"source", source},
         {"input_frames", input_frames},
         {"lead_times", lead_times},
         {"stride", stride},
         {"wet_fraction", wet_fraction},
         {"train_fraction", train_fraction},
         {"val_fraction", val_fraction},
         {"rate_factor", steps_per_hour()},
         {"counts", {{"train", train_count}, {"validation", validation_count}, {"test", test_count}}}};
  return j;
}

DatasetManifest DatasetManifest::from_json(const json& j) {
  DatasetManifest m;
  JsonFields f(j, "dataset");
  f.get("seed", m.seed);
  f.get("n_frames", m.n_frames);
  f.get("height", m.height);
  f.get("width", m.width);
  if (const auto* storm = f.object("storm")) m.storm = StormParams::from_json(*storm);
  f.get("source", m.source);
  f.get("input_frames", m.input_frames);
  f.get("lead_times", m.lead_times);
  f.get("stride", m.stride);
  f.get("wet_fraction", m.wet_fraction);
  f.get("train_fraction", m.train_fraction);
  f.get("val_fraction", m.val_fraction);
  if (f.has("rate_factor")) {
    std::uint32_t factor = 0;
    f.get("rate_factor", factor);
    if (factor != m.steps_per_hour()) {
      throw ConfigError("dataset.rate_factor disagrees with storm.steps_per_hour");
    }
  }
  if (const auto* counts = f.object("counts")) {
    JsonFields c(*counts, "dataset.counts");
    c.get("train", m.train_count);
    c.get("validation", m.validation_count);
    c.get("test", m.test_count);
    c.finish();
  }
  f.finish();
  return m;
}

void DatasetManifest::validate() const {
  if (n_frames == 0 || height == 0 || width == 0) {
    throw ConfigError("dataset: n_frames, height and width must be positive");
  }
  if (input_frames == 0 || lead_times == 0 || stride == 0) {
    throw ConfigError("dataset: input_frames, lead_times and stride must be positive");
  }
  if (n_frames < input_frames + lead_times) {
    throw ConfigError("dataset: n_frames must be at least input_frames + lead_times");
  }
  if (!(wet_fraction >= 0.0 && wet_fraction <= 1.0)) throw ConfigError("dataset: wet_fraction outside [0, 1]");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ConfigError("dataset: train_fraction outside (0, 1)");
  }
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw ConfigError("dataset: val_fraction outside (0, 1)");
  storm.validate();
}

}  // namespace nwq
