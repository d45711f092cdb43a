#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>

#include "nwq/experiment.hpp"

namespace nwq {

namespace fs = std::filesystem;

namespace {

void say(Progress p, const std::string& line) {
  if (p) *p << line << '\n' << std::flush;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw ConfigError("cannot create directory " + dir.string());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw ConfigError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw Error("failed writing " + path.string());
}

void echo_config(const ExperimentConfig& config) {
  const Layout layout{config.out_dir};
  ensure_dir(layout.root);
  config.save(layout.effective_config());
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace

Dataset cmd_generate(const ExperimentConfig& config, Progress progress) {
  config.validate();
  const Layout layout{config.out_dir};
  ensure_dir(layout.dataset_dir());
  echo_config(config);

  std::shared_ptr<const FrameArchive> archive;
  if (config.dataset.source.empty()) {
    const auto& m = config.dataset;
    archive = std::make_shared<const FrameArchive>(generate_archive(m.seed, m.n_frames, m.height, m.width, m.storm));
  } else {
    auto a = read_archive(config.dataset.source);
    if (a.height != config.dataset.height || a.width != config.dataset.width) {
      throw ConfigError("archive " + config.dataset.source + " grid does not match dataset.height/width");
    }
    if (a.steps_per_hour != config.dataset.steps_per_hour()) {
      throw ConfigError("archive " + config.dataset.source + " steps_per_hour does not match the config");
    }
    archive = std::make_shared<const FrameArchive>(std::move(a));
  }
  DatasetManifest manifest = config.dataset;
  manifest.n_frames = archive->n_frames;
  Dataset ds = prepare_dataset(manifest, archive);
  write_archive(*archive, layout.archive());
  write_text(layout.manifest(), ds.manifest.to_json().dump(2) + "\n");
  say(progress, "archive   " + layout.archive().string() + " (" + std::to_string(archive->n_frames) + " frames)");
  say(progress, "manifest  " + layout.manifest().string());
  say(progress, "splits    train " + std::to_string(ds.manifest.train_count) + ", validation " +
                    std::to_string(ds.manifest.validation_count) + ", test " +
                    std::to_string(ds.manifest.test_count));
  return ds;
}

Dataset load_dataset(const Layout& layout) {
  if (!fs::exists(layout.manifest()) || !fs::exists(layout.archive())) {
    throw DataError("no dataset under " + layout.dataset_dir().string() + " (run generate first)");
  }
  std::ifstream in(layout.manifest());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("manifest " + layout.manifest().string() + " is not valid JSON: " + e.what());
  }
  const auto recorded = DatasetManifest::from_json(j);
  auto archive = std::make_shared<const FrameArchive>(read_archive(layout.archive()));
  if (archive->n_frames != recorded.n_frames || archive->height != recorded.height ||
      archive->width != recorded.width) {
    throw DataError("archive dimensions disagree with the manifest");
  }
  Dataset ds = prepare_dataset(recorded, archive);
  if (ds.manifest.train_count != recorded.train_count ||
      ds.manifest.validation_count != recorded.validation_count ||
      ds.manifest.test_count != recorded.test_count) {
    throw DataError("split sizes differ from the manifest; the dataset files were modified");
  }
  return ds;
}

TrainOutcome cmd_train(const ExperimentConfig& config, const std::string& loss_name, Progress progress) {
  config.validate();
  const Layout layout{config.out_dir};
  const TrainConfig train = config.train_config(loss_name);
  const ModelConfig model = config.model_config(train.loss);
  const Dataset ds = load_dataset(layout);
  echo_config(config);
  ensure_dir(layout.model_dir(loss_name));

  TrainHooks hooks;
  std::size_t run = 0;
  bool started = false;
  hooks.on_epoch = [&](const EpochRecord& e) {
    if (e.epoch == 0 && started) ++run;
    started = true;
    say(progress, loss_name + " run " + std::to_string(run) + " epoch " + std::to_string(e.epoch) +
                      "  train " + fmt(e.train_loss) + "  val " + fmt(e.val_loss) + "  lr " +
                      fmt(e.learning_rate) + "  " + fmt(e.seconds) + "s");
  };
  TrainOutcome out;
  try {
    out.result = train_best_of(model, ds, train, hooks);
  } catch (const TrainingError& e) {
    if (!e.log().epochs.empty()) e.log().write_csv(layout.model_dir(loss_name) / "failed_run.csv");
    throw;
  }
  for (const auto& log : out.result.logs) {
    log.write_csv(layout.model_dir(loss_name) / ("run" + std::to_string(log.run_index) + ".csv"));
  }
  out.checkpoint = layout.checkpoint(loss_name);
  save_checkpoint(out.result.best, out.checkpoint);
  say(progress, "selected run " + std::to_string(out.result.selected_run) + " (epoch " +
                    std::to_string(out.result.best.epoch) + ", val " + fmt(out.result.best.validation_loss) + ")");
  say(progress, "checkpoint " + out.checkpoint.string());
  return out;
}

GridSearchResult cmd_gridsearch(const ExperimentConfig& config, std::span<const double> weights,
                                Progress progress) {
  config.validate();
  const Layout layout{config.out_dir};
  TrainConfig train = config.train_config("quantile");
  train.n_runs = config.grid_runs;
  train.max_epochs = config.grid_max_epochs;
  train.early_stop_patience = std::max(train.early_stop_patience, train.plateau_patience);
  const ModelConfig model = config.model_config(train.loss);
  const Dataset ds = load_dataset(layout);
  echo_config(config);
  ensure_dir(layout.grid_csv().parent_path());

  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochRecord& e) {
    say(progress, "  epoch " + std::to_string(e.epoch) + "  val " + fmt(e.val_loss));
  };
  auto result = grid_search_weights(model, ds, train, weights, hooks);
  std::ofstream out(layout.grid_csv(), std::ios::trunc | std::ios::binary);
  if (!out) throw ConfigError("cannot open " + layout.grid_csv().string() + " for writing");
  result.write_csv(out);
  for (const auto& r : result.rows) say(progress, "weight " + fmt(r.weight) + "  val_mse_median " + fmt(r.val_mse_median));
  say(progress, "best weight " + fmt(result.best_weight));
  return result;
}

std::vector<NamedCheckpoint> trained_checkpoints(const Layout& layout) {
  std::vector<NamedCheckpoint> out;
  for (const char* name : {"mse", "mae", "quantile"}) {
    if (fs::exists(layout.checkpoint(name))) out.push_back({name, layout.checkpoint(name)});
  }
  return out;
}

EvaluationReport cmd_evaluate(const ExperimentConfig& config, const std::vector<NamedCheckpoint>& checkpoints,
                              Progress progress) {
  config.validate();
  const Layout layout{config.out_dir};
  if (checkpoints.empty()) throw ConfigError("no checkpoints to evaluate (run train first)");
  const Dataset ds = load_dataset(layout);
  echo_config(config);

  EvaluationReport report;
  for (const auto& named : checkpoints) {
    const Checkpoint ckpt = load_checkpoint(named.path);
    const auto& m = ckpt.model;
    if (m.input_frames != ds.manifest.input_frames || m.lead_times != ds.manifest.lead_times ||
        m.grid_h != ds.manifest.height || m.grid_w != ds.manifest.width) {
      throw ConfigError("checkpoint " + named.path.string() + " does not match the dataset shape");
    }
    if (!(ckpt.stats == ds.stats)) {
      throw ConfigError("checkpoint " + named.path.string() + " was trained with different normalization");
    }
    say(progress, "evaluating " + named.model);
    report.append(evaluate_model(named.model, ckpt, ds.splits.test, ds.stats, config.thresholds));
  }
  ensure_dir(layout.evaluation_dir());
  auto write = [&](const char* file, auto member) {
    std::ofstream out(layout.evaluation_dir() / file, std::ios::trunc | std::ios::binary);
    if (!out) throw ConfigError("cannot write " + (layout.evaluation_dir() / file).string());
    (report.*member)(out);
  };
  write("summary.csv", &EvaluationReport::write_summary_csv);
  write("curves.csv", &EvaluationReport::write_curves_csv);
  write("coverage.csv", &EvaluationReport::write_coverage_csv);
  for (const auto& r : report.summary) {
    say(progress, r.model + " " + r.output + " >=" + fmt(r.threshold) + "  csi " +
                      (r.scores.csi ? fmt(*r.scores.csi) : "-") + "  pod " +
                      (r.scores.pod ? fmt(*r.scores.pod) : "-") + "  far " +
                      (r.scores.far ? fmt(*r.scores.far) : "-") + "  mcc " + fmt(r.scores.mcc) + "  mse " +
                      fmt(r.mse));
  }
  for (const auto& c : report.coverage) say(progress, c.model + " " + c.output + " coverage " + fmt(c.coverage));
  say(progress, "wrote " + layout.evaluation_dir().string());
  return report;
}

void write_pgm(const fs::path& path, std::span<const float> values, std::size_t height, std::size_t width,
               double max_value) {
  if (values.size() != height * width) throw DimensionError("write_pgm: value count does not match the size");
  if (!(max_value > 0.0)) throw ConfigError("write_pgm: max_value must be > 0");
  std::string data = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  for (float v : values) {
    const double clamped = std::clamp(static_cast<double>(v), 0.0, max_value);
    data.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * clamped / max_value))));
  }
  write_text(path, data);
}

std::vector<fs::path> cmd_predict(const ExperimentConfig& config, const std::vector<NamedCheckpoint>& checkpoints,
                                  std::size_t sample, Progress progress) {
  config.validate();
  const Layout layout{config.out_dir};
  if (checkpoints.empty()) throw ConfigError("no checkpoints to predict with (run train first)");
  const Dataset ds = load_dataset(layout);
  if (sample >= ds.splits.test.size()) {
    throw ConfigError("sample " + std::to_string(sample) + " outside the test split of " +
                      std::to_string(ds.splits.test.size()) + " windows");
  }
  echo_config(config);
  const fs::path dir = layout.predict_dir(sample);
  ensure_dir(dir);
  const auto& seq = ds.splits.test[sample];
  const std::uint32_t sph = seq.archive().steps_per_hour;
  const std::size_t h = seq.archive().height, w = seq.archive().width, plane = h * w;
  const double scale = config.image_max_rate;

  std::vector<fs::path> written;
  std::vector<float> rate(plane);
  for (std::size_t l = 0; l < seq.lead_times(); ++l) {
    const auto obs = seq.target_frame(l);
    // Same path as evaluation: normalize, then back to mm/h.
    for (std::size_t i = 0; i < plane; ++i) rate[i] = to_rate(ds.stats.denormalize(ds.stats.normalize(obs[i])), sph);
    written.push_back(dir / ("truth_lead" + std::to_string(l + 1) + ".pgm"));
    write_pgm(written.back(), rate, h, w, scale);
  }
  const Sequences one{seq};
  for (const auto& named : checkpoints) {
    const Checkpoint ckpt = load_checkpoint(named.path);
    if (ckpt.model.grid_h != h || ckpt.model.grid_w != w || ckpt.model.lead_times != seq.lead_times() ||
        ckpt.model.input_frames != seq.input_frames()) {
      throw ConfigError("checkpoint " + named.path.string() + " does not match the dataset shape");
    }
    const auto out = predict(ckpt, one, 1);
    const std::size_t nq = ckpt.model.quantile_count();
    for (const auto& head : output_heads(ckpt.model)) {
      for (std::size_t l = 0; l < ckpt.model.lead_times; ++l) {
        const auto pred = out.values().subspan((l * nq + head.q_index.value_or(0)) * plane, plane);
        for (std::size_t i = 0; i < plane; ++i) rate[i] = to_rate(ckpt.stats.denormalize(pred[i]), sph);
        written.push_back(dir / (named.model + "_" + head.name + "_lead" + std::to_string(l + 1) + ".pgm"));
        write_pgm(written.back(), rate, h, w, scale);
      }
    }
  }
  write_text(dir / "scale.txt", "max_rate_mm_per_h " + fmt(scale) + "\nbyte = round(255 * min(rate, max_rate) / max_rate)\n" +
                                    "test_sample " + std::to_string(sample) + "\ntimestamp_index " +
                                    std::to_string(seq.timestamp_index()) + "\n");
  say(progress, "wrote " + std::to_string(written.size()) + " images to " + dir.string());
  return written;
}

}  // namespace nwq
