#pragma once

// One JSON document drives every command: dataset, backbone, optimizer, quantile set,
// thresholds and grid. The commands write into a fixed layout under the output dir:
//
//   dataset/archive.nwq1, dataset/manifest.json
//   models/<loss>/checkpoint.nwqc, models/<loss>/run<k>.csv
//   gridsearch/weights.csv
//   evaluation/summary.csv, curves.csv, coverage.csv
//   predict/sample<k>/*.pgm, predict/sample<k>/scale.txt
//   config.json (effective configuration of the last command)

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "nwq/data.hpp"
#include "nwq/model.hpp"
#include "nwq/training.hpp"
#include "nwq/verification.hpp"

namespace nwq {

struct ExperimentConfig {
  DatasetManifest dataset;
  // Backbone knobs; frame counts and grid size always follow the dataset.
  std::size_t base_channels = 16;
  std::size_t depth = 2;
  bool attention_enabled = true;
  TrainConfig train = desk_train();
  QuantileSpec quantiles = QuantileSpec::standard();
  std::vector<double> thresholds = {0.5, 10.0, 20.0};  // mm/h
  std::vector<double> grid = {0.1, 0.25, 0.5, 1.0};
  std::size_t grid_runs = 1;         // reduced budget per grid point
  std::size_t grid_max_epochs = 8;
  double image_max_rate = 20.0;      // mm/h mapped to byte 255
  std::string out_dir = "nwq_out";

  static TrainConfig desk_train();

  /// Model configuration for a given loss: quantile losses get the quantile head.
  ModelConfig model_config(const LossKind& loss) const;
  /// Train configuration with the loss replaced.
  TrainConfig train_config(const std::string& loss_name) const;

  void validate() const;
  nlohmann::json to_json() const;
  /// Unknown keys anywhere in the document are rejected with ConfigError.
  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
};

struct Layout {
  std::filesystem::path root;

  std::filesystem::path dataset_dir() const { return root / "dataset"; }
  std::filesystem::path archive() const { return dataset_dir() / "archive.nwq1"; }
  std::filesystem::path manifest() const { return dataset_dir() / "manifest.json"; }
  std::filesystem::path model_dir(const std::string& loss) const { return root / "models" / loss; }
  std::filesystem::path checkpoint(const std::string& loss) const { return model_dir(loss) / "checkpoint.nwqc"; }
  std::filesystem::path grid_csv() const { return root / "gridsearch" / "weights.csv"; }
  std::filesystem::path evaluation_dir() const { return root / "evaluation"; }
  std::filesystem::path predict_dir(std::size_t sample) const {
    return root / "predict" / ("sample" + std::to_string(sample));
  }
  std::filesystem::path effective_config() const { return root / "config.json"; }
};

/// Progress messages go here; nullptr silences them.
using Progress = std::ostream*;

/// Generates (or ingests dataset.source) the archive, writes it with its manifest and
/// returns the prepared dataset.
Dataset cmd_generate(const ExperimentConfig& config, Progress progress = nullptr);

/// Reads the dataset written by cmd_generate and re-runs the pipeline. Throws DataError
/// when files are missing or the recorded split sizes no longer match.
Dataset load_dataset(const Layout& layout);

struct TrainOutcome {
  std::filesystem::path checkpoint;
  BestOfResult result;
};
TrainOutcome cmd_train(const ExperimentConfig& config, const std::string& loss_name,
                       Progress progress = nullptr);

GridSearchResult cmd_gridsearch(const ExperimentConfig& config, std::span<const double> weights,
                                Progress progress = nullptr);

struct NamedCheckpoint {
  std::string model;  // label used in the CSVs
  std::filesystem::path path;
};

/// Default evaluation set: every trained model present under models/ (mse, mae, quantile).
std::vector<NamedCheckpoint> trained_checkpoints(const Layout& layout);

EvaluationReport cmd_evaluate(const ExperimentConfig& config, const std::vector<NamedCheckpoint>& checkpoints,
                              Progress progress = nullptr);

/// Writes P5 images for test sample `sample`: ground truth and every head at every lead.
/// Returns the written image paths.
std::vector<std::filesystem::path> cmd_predict(const ExperimentConfig& config,
                                               const std::vector<NamedCheckpoint>& checkpoints,
                                               std::size_t sample, Progress progress = nullptr);

/// Binary PGM with maxval 255: value v maps to round(255 * min(v, max) / max).
void write_pgm(const std::filesystem::path& path, std::span<const float> values, std::size_t height,
               std::size_t width, double max_value);

}  // namespace nwq
