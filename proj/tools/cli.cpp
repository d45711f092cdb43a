#include "cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <optional>
#include <ostream>

#include "nwq/experiment.hpp"

namespace nwq::cli {

namespace fs = std::filesystem;

namespace {

struct Globals {
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
};

ExperimentConfig load_config(const Globals& g) {
  ExperimentConfig config = g.config_path.empty() ? ExperimentConfig{} : ExperimentConfig::load(g.config_path);
  if (!g.out_dir.empty()) config.out_dir = g.out_dir;
  if (g.seed) {
    config.dataset.seed = *g.seed;
    config.train.seed = *g.seed;
  }
  return config;
}

// "label=path" or a bare path; a bare path is labelled by its directory
// (models/mse/checkpoint.nwqc -> mse) or, failing that, its stem.
NamedCheckpoint named_checkpoint(const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq != std::string::npos && eq > 0) return {spec.substr(0, eq), spec.substr(eq + 1)};
  const fs::path p(spec);
  std::string label = p.parent_path().filename().string();
  if (label.empty() || label == "." || label == "..") label = p.stem().string();
  return {label, p};
}

std::vector<NamedCheckpoint> checkpoints_for(const ExperimentConfig& config, const std::vector<std::string>& specs) {
  if (specs.empty()) return trained_checkpoints(Layout{config.out_dir});
  std::vector<NamedCheckpoint> out;
  for (const auto& s : specs) {
    auto named = named_checkpoint(s);
    if (!fs::exists(named.path)) throw ConfigError("checkpoint " + named.path.string() + " does not exist");
    out.push_back(std::move(named));
  }
  return out;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Precipitation nowcasting with a shared encoder-decoder trained under MSE, MAE or multi-quantile loss."};
  app.name("nwq");
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--config", g.config_path, "Experiment JSON document (defaults when omitted)");
  app.add_option("--out", g.out_dir, "Output directory (overrides out_dir)");
  app.add_option("--seed", g.seed, "Seed for data generation and training (overrides both config seeds)");

  auto* gen = app.add_subcommand("generate", "Generate (or ingest) the radar archive and write it with its manifest");

  auto* train = app.add_subcommand("train", "Train the best-of-n model for one loss");
  std::string loss = "mse";
  std::optional<std::size_t> runs, max_epochs, batch_size;
  std::optional<double> lr;
  train->add_option("--loss", loss, "Objective")->check(CLI::IsMember({"mse", "mae", "quantile"}))->capture_default_str();
  train->add_option("--runs", runs, "Independent runs (best one is kept)")->check(CLI::PositiveNumber);
  train->add_option("--max-epochs", max_epochs, "Epoch budget per run")->check(CLI::PositiveNumber);
  train->add_option("--batch-size", batch_size, "Mini-batch size")->check(CLI::PositiveNumber);
  train->add_option("--lr", lr, "Initial learning rate");

  auto* grid = app.add_subcommand("gridsearch", "Grid search over the shared upper-quantile weight");
  std::vector<double> weights;
  std::string grid_loss = "quantile";
  std::optional<std::size_t> grid_runs, grid_epochs;
  grid->add_option("--weights", weights, "Candidate weights (comma separated)")->delimiter(',');
  grid->add_option("--loss", grid_loss, "Objective; only quantile is meaningful")->capture_default_str();
  grid->add_option("--runs", grid_runs, "Runs per grid point")->check(CLI::PositiveNumber);
  grid->add_option("--max-epochs", grid_epochs, "Epoch budget per run")->check(CLI::PositiveNumber);

  auto* eval = app.add_subcommand("evaluate", "Score checkpoints on the test split and write CSV reports");
  std::vector<std::string> eval_ckpts;
  std::vector<double> thresholds;
  eval->add_option("--checkpoint", eval_ckpts,
                   "Checkpoint as PATH or LABEL=PATH, repeatable (default: every model under <out>/models)");
  eval->add_option("--thresholds", thresholds, "Event thresholds in mm/h (comma separated)")->delimiter(',');

  auto* pred = app.add_subcommand("predict", "Write P5 images of truth and predictions for one test sample");
  std::vector<std::string> pred_ckpts;
  std::size_t sample = 0;
  std::optional<double> max_rate;
  pred->add_option("--checkpoint", pred_ckpts, "Checkpoint as PATH or LABEL=PATH, repeatable");
  pred->add_option("--sample", sample, "Index into the test split")->required();
  pred->add_option("--max-rate", max_rate, "mm/h mapped to byte 255");

  for (auto* sub : {gen, train, grid, eval, pred}) {
    sub->footer("Global options (before or after the command): --config PATH, --out DIR, --seed U64");
  }

  std::vector<const char*> argv{"nwq"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  try {
    ExperimentConfig config = load_config(g);
    if (gen->parsed()) {
      cmd_generate(config, &out);
    } else if (train->parsed()) {
      if (runs) config.train.n_runs = *runs;
      if (max_epochs) config.train.max_epochs = *max_epochs;
      if (batch_size) config.train.batch_size = *batch_size;
      if (lr) config.train.learning_rate = *lr;
      cmd_train(config, loss, &out);
    } else if (grid->parsed()) {
      if (grid_loss != "quantile") {
        throw ConfigError("gridsearch tunes quantile weights; loss '" + grid_loss + "' has none");
      }
      if (grid_runs) config.grid_runs = *grid_runs;
      if (grid_epochs) config.grid_max_epochs = *grid_epochs;
      if (!weights.empty()) config.grid = weights;
      cmd_gridsearch(config, config.grid, &out);
    } else if (eval->parsed()) {
      if (!thresholds.empty()) config.thresholds = thresholds;
      cmd_evaluate(config, checkpoints_for(config, eval_ckpts), &out);
    } else if (pred->parsed()) {
      if (max_rate) config.image_max_rate = *max_rate;
      cmd_predict(config, checkpoints_for(config, pred_ckpts), sample, &out);
    }
  } catch (const TrainingError& e) {
    err << "nwq: training failed: " << e.what() << '\n';
    return kExitRuntime;
  } catch (const NumericError& e) {
    err << "nwq: numeric failure: " << e.what() << '\n';
    return kExitRuntime;
  } catch (const ConfigError& e) {
    err << "nwq: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DataError& e) {
    err << "nwq: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DimensionError& e) {
    err << "nwq: " << e.what() << '\n';
    return kExitUsage;
  } catch (const FormatError& e) {
    err << "nwq: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "nwq: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace nwq::cli
