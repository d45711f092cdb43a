#pragma once

// Small hand-built datasets for training and evaluation tests.

#include <algorithm>
#include <cmath>
#include <string>
#include <memory>

#include "nwq/data.hpp"
#include "nwq/model.hpp"
#include "nwq/random.hpp"
#include "nwq/training.hpp"

namespace nwq::testing {

// Non-overlapping blocks of m smooth random frames followed by L frames equal to the
// pixelwise mean of the inputs. Windowed at stride m + L, nothing is filtered.
inline Dataset mean_dataset(std::size_t blocks = 60, std::uint32_t hw = 8, std::uint64_t seed = 1) {
  const std::size_t m = 4, l = 3;
  auto a = std::make_shared<FrameArchive>();
  a->n_frames = static_cast<std::uint32_t>(blocks * (m + l));
  a->height = hw;
  a->width = hw;
  const std::size_t plane = static_cast<std::size_t>(hw) * hw;
  Rng rng(seed);
  for (std::size_t b = 0; b < blocks; ++b) {
    std::vector<float> mean(plane, 0.0f);
    for (std::size_t k = 0; k < m; ++k) {
      const double level = rng.uniform(0.0, 1.0), amp = rng.uniform(0.0, 1.0);
      const double phi = rng.uniform(0.0, 6.3), psi = rng.uniform(0.0, 6.3);
      for (std::size_t p = 0; p < plane; ++p) {
        const double i = static_cast<double>(p / hw), j = static_cast<double>(p % hw);
        const auto v = static_cast<float>(level + amp * (1.0 + std::sin(0.6 * i + phi) * std::cos(0.45 * j + psi)));
        a->values.push_back(v);
        mean[p] += v / static_cast<float>(m);
      }
    }
    for (std::size_t k = 0; k < l; ++k) a->values.insert(a->values.end(), mean.begin(), mean.end());
  }
  DatasetManifest manifest;
  manifest.n_frames = a->n_frames;
  manifest.height = hw;
  manifest.width = hw;
  manifest.input_frames = m;
  manifest.lead_times = l;
  manifest.stride = m + l;
  manifest.wet_fraction = 0.0;
  manifest.train_fraction = 0.75;
  manifest.val_fraction = 0.2;
  return prepare_dataset(manifest, a);
}

inline ModelConfig toy_model(const Dataset& d, bool quantile = false) {
  ModelConfig c;
  c.input_frames = d.manifest.input_frames;
  c.lead_times = d.manifest.lead_times;
  c.grid_h = d.manifest.height;
  c.grid_w = d.manifest.width;
  c.base_channels = 8;
  c.depth = 1;
  if (quantile) c.quantiles = QuantileSpec::standard();
  return c;
}

inline TrainConfig toy_train(std::size_t epochs) {
  TrainConfig t;
  t.batch_size = 4;
  t.learning_rate = 3e-3;
  t.max_epochs = epochs;
  t.n_runs = 1;
  t.plateau_patience = 8;
  t.early_stop_patience = 16;
  return t;
}

inline std::size_t count_newlines(const std::string& s) {
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

}  // namespace nwq::testing
