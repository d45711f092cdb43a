#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "nwq/data.hpp"
#include "nwq/experiment.hpp"
#include "nwq/objectives.hpp"
#include "nwq/training.hpp"
#include "nwq/verification.hpp"

namespace py = pybind11;
using namespace nwq;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using MaskArray = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

Tensor<float> to_tensor(const FloatArray& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor<float>(std::move(shape), std::vector<float>(a.data(), a.data() + a.size()));
}

FloatArray to_array(const Tensor<float>& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  FloatArray out(shape);
  std::copy(t.values().begin(), t.values().end(), out.mutable_data());
  return out;
}

FloatArray archive_array(const FrameArchive& a) {
  FloatArray out({static_cast<py::ssize_t>(a.n_frames), static_cast<py::ssize_t>(a.height),
                  static_cast<py::ssize_t>(a.width)});
  std::copy(a.values.begin(), a.values.end(), out.mutable_data());
  return out;
}

FrameArchive array_archive(const FloatArray& frames, std::uint32_t steps_per_hour) {
  if (frames.ndim() != 3) throw DimensionError("archive frames must be [T, H, W]");
  FrameArchive a;
  a.n_frames = static_cast<std::uint32_t>(frames.shape(0));
  a.height = static_cast<std::uint32_t>(frames.shape(1));
  a.width = static_cast<std::uint32_t>(frames.shape(2));
  a.steps_per_hour = steps_per_hour;
  a.values.assign(frames.data(), frames.data() + frames.size());
  return a;
}

QuantileSpec make_spec(std::vector<double> levels, std::vector<double> weights) {
  QuantileSpec spec{std::move(levels), std::move(weights)};
  spec.validate();
  return spec;
}

ExperimentConfig make_config(const std::string& json_text, const std::optional<std::string>& out) {
  ExperimentConfig c = json_text.empty() ? ExperimentConfig{}
                                         : ExperimentConfig::from_json(nlohmann::json::parse(json_text));
  if (out) c.out_dir = *out;
  c.validate();
  return c;
}

py::dict scores_dict(const EventScores& s) {
  py::dict d;
  d["csi"] = s.csi;
  d["pod"] = s.pod;
  d["far"] = s.far;
  d["mcc"] = s.mcc;
  return d;
}

py::list summary_rows(const EvaluationReport& r) {
  py::list rows;
  for (const auto& s : r.summary) {
    py::dict d = scores_dict(s.scores);
    d["model"] = s.model;
    d["output"] = s.output;
    d["threshold"] = s.threshold;
    d["mse"] = s.mse;
    d["mae"] = s.mae;
    rows.append(d);
  }
  return rows;
}

}  // namespace

PYBIND11_MODULE(_nwq, m) {
  m.doc() = "Quantile precipitation nowcasting core";

  // Errors keep their category so callers can tell usage problems from runtime ones.
  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<FormatError>(m, "FormatError", base.ptr());
  py::register_exception<TrainingError>(m, "TrainingError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());
  py::register_exception<ContractError>(m, "ContractError", base.ptr());

  // Data
  m.def("generate_archive",
        [](std::uint64_t seed, std::uint32_t n_frames, std::uint32_t height, std::uint32_t width) {
          return archive_array(generate_archive(seed, n_frames, height, width, StormParams{}));
        },
        py::arg("seed") = 0, py::arg("n_frames") = 5000, py::arg("height") = 32, py::arg("width") = 32,
        "Synthetic storm archive as a float32 array [T, H, W] in mm per step.");
  m.def("read_archive", [](const std::filesystem::path& p) { return archive_array(read_archive(p)); },
        py::arg("path"));
  m.def("write_archive",
        [](const std::filesystem::path& p, const FloatArray& frames, std::uint32_t steps_per_hour) {
          write_archive(array_archive(frames, steps_per_hour), p);
        },
        py::arg("path"), py::arg("frames"), py::arg("steps_per_hour") = 12);
  m.def("dataset_summary",
        [](const std::string& manifest_json) {
          DatasetManifest manifest = manifest_json.empty()
                                         ? DatasetManifest{}
                                         : DatasetManifest::from_json(nlohmann::json::parse(manifest_json));
          const Dataset d = build_dataset(manifest);
          py::dict out;
          out["train"] = d.splits.train.size();
          out["validation"] = d.splits.validation.size();
          out["test"] = d.splits.test.size();
          out["train_max"] = d.stats.train_max;
          return out;
        },
        py::arg("manifest_json") = "", "Builds a dataset and returns its split sizes.");

  // Objectives
  m.def("pinball_value", &pinball_value, py::arg("y"), py::arg("y_hat"), py::arg("q"));
  m.def("pinball",
        [](const FloatArray& y, const FloatArray& y_hat, double q) {
          Tape<float> tape(false);
          return pinball(tape, to_tensor(y), to_tensor(y_hat), q).item();
        },
        py::arg("y"), py::arg("y_hat"), py::arg("q"), "Sum of the pinball loss over all elements.");
  m.def("multi_quantile_loss",
        [](const FloatArray& y, const FloatArray& y_hat, std::vector<double> levels, std::vector<double> weights) {
          Tape<float> tape(false);
          return multi_quantile_loss(tape, to_tensor(y), to_tensor(y_hat),
                                     make_spec(std::move(levels), std::move(weights)))
              .item();
        },
        py::arg("y"), py::arg("y_hat"), py::arg("levels") = std::vector<double>{0.5, 0.9, 0.95},
        py::arg("weights") = std::vector<double>{1.0, 0.5, 0.5});
  m.def("mse_loss",
        [](const FloatArray& y, const FloatArray& y_hat) {
          Tape<float> tape(false);
          return mse_loss(tape, to_tensor(y), to_tensor(y_hat)).item();
        },
        py::arg("y"), py::arg("y_hat"));
  m.def("mae_loss",
        [](const FloatArray& y, const FloatArray& y_hat) {
          Tape<float> tape(false);
          return mae_loss(tape, to_tensor(y), to_tensor(y_hat)).item();
        },
        py::arg("y"), py::arg("y_hat"));

  // Verification
  m.def("confusion",
        [](const MaskArray& predicted, const MaskArray& observed) {
          ConfusionCounts c;
          accumulate_confusion(std::span(predicted.data(), static_cast<std::size_t>(predicted.size())),
                               std::span(observed.data(), static_cast<std::size_t>(observed.size())), c);
          return py::make_tuple(c.tp, c.fp, c.fn, c.tn);
        },
        py::arg("predicted"), py::arg("observed"), "Returns (tp, fp, fn, tn).");
  m.def("event_scores",
        [](std::uint64_t tp, std::uint64_t fp, std::uint64_t fn, std::uint64_t tn) {
          return scores_dict(event_scores({tp, fp, fn, tn}));
        },
        py::arg("tp"), py::arg("fp"), py::arg("fn"), py::arg("tn"));

  // Schedules
  m.def("plateau_scheduler",
        [](std::vector<double> history, double lr, double factor, std::size_t patience) {
          return plateau_scheduler(history, lr, factor, patience);
        },
        py::arg("history"), py::arg("lr"), py::arg("factor") = 0.1, py::arg("patience") = 4);
  m.def("should_stop_early",
        [](std::vector<double> history, std::size_t patience) { return should_stop_early(history, patience); },
        py::arg("history"), py::arg("patience") = 15);

  // Models
  py::class_<Checkpoint>(m, "Checkpoint")
      .def_static("load", [](const std::filesystem::path& p) { return load_checkpoint(p); }, py::arg("path"))
      .def("save", [](const Checkpoint& c, const std::filesystem::path& p) { save_checkpoint(c, p); }, py::arg("path"))
      .def_property_readonly("epoch", [](const Checkpoint& c) { return c.epoch; })
      .def_property_readonly("validation_loss", [](const Checkpoint& c) { return c.validation_loss; })
      .def_property_readonly("loss", [](const Checkpoint& c) { return loss_name(c.loss); })
      .def_property_readonly("train_max", [](const Checkpoint& c) { return c.stats.train_max; })
      .def_property_readonly("quantiles",
                             [](const Checkpoint& c) {
                               return c.model.quantiles ? c.model.quantiles->levels : std::vector<double>{};
                             })
      .def_property_readonly("parameter_count", [](const Checkpoint& c) { return c.params.total_count(); })
      .def("forward",
           [](const Checkpoint& c, const FloatArray& inputs) {
             Tape<float> tape(false);
             return to_array(forward(tape, c.params, c.model, to_tensor(inputs)));
           },
           py::arg("inputs"), "Normalized inputs [B, m, H, W] to outputs [B, L*|Q|, H, W].");

  // Experiment commands; the config is the JSON document the CLI reads.
  m.def("default_config", [] { return ExperimentConfig{}.to_json().dump(2); });
  m.def("cmd_generate",
        [](const std::string& config, const std::optional<std::string>& out) {
          const Dataset d = cmd_generate(make_config(config, out));
          return py::make_tuple(d.splits.train.size(), d.splits.validation.size(), d.splits.test.size());
        },
        py::arg("config") = "", py::arg("out") = py::none(), "Writes the dataset; returns split sizes.");
  m.def("cmd_train",
        [](const std::string& config, const std::string& loss, const std::optional<std::string>& out) {
          const TrainOutcome o = cmd_train(make_config(config, out), loss);
          return o.checkpoint;
        },
        py::arg("config") = "", py::arg("loss") = "quantile", py::arg("out") = py::none(),
        "Trains best-of-n and returns the checkpoint path.");
  m.def("cmd_evaluate",
        [](const std::string& config, const std::optional<std::string>& out) {
          const ExperimentConfig c = make_config(config, out);
          return summary_rows(cmd_evaluate(c, trained_checkpoints(Layout{c.out_dir})));
        },
        py::arg("config") = "", py::arg("out") = py::none(), "Evaluates every trained model; returns summary rows.");
}
