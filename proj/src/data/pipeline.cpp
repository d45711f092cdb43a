#include <algorithm>
#include <cmath>

#include "nwq/data.hpp"
#include "nwq/error.hpp"

namespace nwq {

std::span<const float> FrameArchive::frame(std::size_t index) const { return frames(index, 1); }

std::span<const float> FrameArchive::frames(std::size_t first, std::size_t count) const {
  if (first + count > n_frames) {
    throw ContractError("frame range [" + std::to_string(first) + ", " +
                        std::to_string(first + count) + ") outside archive of " +
                        std::to_string(n_frames) + " frames");
  }
  return std::span<const float>(values).subspan(first * frame_size(), count * frame_size());
}

RadarSequence::RadarSequence(std::shared_ptr<const FrameArchive> archive, std::size_t timestamp_index,
                             std::size_t input_frames, std::size_t lead_times)
    : archive_(std::move(archive)), start_(timestamp_index), m_(input_frames), l_(lead_times) {
  if (!archive_) throw ContractError("RadarSequence: null archive");
  if (m_ == 0 || l_ == 0) throw ContractError("RadarSequence: m and L must be positive");
  if (start_ + m_ + l_ > archive_->n_frames) {
    throw DataError("RadarSequence: window at " + std::to_string(start_) + " runs past the archive");
  }
}

std::span<const float> RadarSequence::inputs() const { return archive_->frames(start_, m_); }
std::span<const float> RadarSequence::targets() const { return archive_->frames(start_ + m_, l_); }

std::span<const float> RadarSequence::target_frame(std::size_t lead) const {
  if (lead >= l_) throw ContractError("RadarSequence: lead index out of range");
  return archive_->frame(start_ + m_ + lead);
}

Sequences window_archive(std::shared_ptr<const FrameArchive> archive, std::size_t input_frames,
                         std::size_t lead_times, std::size_t stride) {
  if (!archive) throw ContractError("window_archive: null archive");
  if (input_frames == 0 || lead_times == 0 || stride == 0) {
    throw ConfigError("window_archive: m, L and stride must be positive");
  }
  const std::size_t span = input_frames + lead_times;
  if (archive->n_frames < span) {
    throw DataError("window_archive: archive has " + std::to_string(archive->n_frames) +
                    " frames, a window needs " + std::to_string(span));
  }
  const std::size_t count = (archive->n_frames - span) / stride + 1;
  Sequences out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) out.emplace_back(archive, k * stride, input_frames, lead_times);
  return out;
}

Sequences filter_wet(const Sequences& sequences, double wet_fraction) {
  if (!(wet_fraction >= 0.0 && wet_fraction <= 1.0)) {
    throw ConfigError("filter_wet: wet_fraction outside [0, 1]");
  }
  Sequences out;
  for (const auto& s : sequences) {
    const auto last = s.target_frame(s.lead_times() - 1);
    const auto wet = static_cast<std::size_t>(std::count_if(last.begin(), last.end(), [](float v) { return v > 0.0f; }));
    if (static_cast<double>(wet) / static_cast<double>(last.size()) >= wet_fraction) out.push_back(s);
  }
  return out;
}

Splits split_chronological(const Sequences& sequences, double train_fraction, double val_fraction) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0) || !(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw ConfigError("split_chronological: fractions must lie in (0, 1)");
  }
  for (std::size_t i = 1; i < sequences.size(); ++i) {
    if (sequences[i].timestamp_index() <= sequences[i - 1].timestamp_index()) {
      throw ContractError("split_chronological: windows are not ordered by timestamp");
    }
  }
  const std::size_t n = sequences.size();
  const auto block = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(block)));
  if (block == 0 || n_val == 0 || n_val >= block || block >= n) {
    throw ConfigError("split_chronological: " + std::to_string(n) +
                      " windows leave an empty train, validation or test split");
  }
  const std::size_t val_begin = block - n_val;
  const std::size_t val_first_frame = sequences[val_begin].first_frame();
  const std::size_t test_first_frame = sequences[block].first_frame();

  Splits out;
  for (std::size_t i = 0; i < val_begin; ++i) {
    if (sequences[i].last_frame() < val_first_frame) out.train.push_back(sequences[i]);
  }
  for (std::size_t i = val_begin; i < block; ++i) {
    if (sequences[i].last_frame() < test_first_frame) out.validation.push_back(sequences[i]);
  }
  out.test.assign(sequences.begin() + static_cast<std::ptrdiff_t>(block), sequences.end());
  if (out.train.empty() || out.validation.empty()) {
    throw ConfigError("split_chronological: boundary drops left an empty train or validation split");
  }
  return out;
}

NormalizationStats fit_normalization(const Sequences& train) {
  if (train.empty()) throw DataError("fit_normalization: empty train split");
  float max_value = 0.0f;
  for (const auto& s : train) {
    for (float v : s.inputs()) max_value = std::max(max_value, v);
    for (float v : s.targets()) max_value = std::max(max_value, v);
  }
  if (!(max_value > 0.0f)) throw DataError("fit_normalization: train split is all zero");
  return NormalizationStats{max_value};
}

Batch make_batch(const Sequences& sequences, std::span<const std::size_t> indices,
                 const NormalizationStats& stats) {
  if (indices.empty()) throw ContractError("make_batch: no indices");
  const auto& first = sequences.at(indices[0]);
  const std::size_t m = first.input_frames(), l = first.lead_times();
  const std::size_t h = first.archive().height, w = first.archive().width;
  const std::size_t plane = h * w;
  std::vector<float> inputs(indices.size() * m * plane), targets(indices.size() * l * plane);
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const auto& s = sequences.at(indices[b]);
    if (s.input_frames() != m || s.lead_times() != l || s.archive().frame_size() != plane) {
      throw DimensionError("make_batch: sequences have different shapes");
    }
    std::ranges::transform(s.inputs(), inputs.begin() + static_cast<std::ptrdiff_t>(b * m * plane),
                           [&](float v) { return stats.normalize(v); });
    std::ranges::transform(s.targets(), targets.begin() + static_cast<std::ptrdiff_t>(b * l * plane),
                           [&](float v) { return stats.normalize(v); });
  }
  return Batch{Tensor<float>({indices.size(), m, h, w}, std::move(inputs)),
               Tensor<float>({indices.size(), l, h, w}, std::move(targets))};
}

Dataset prepare_dataset(DatasetManifest manifest, std::shared_ptr<const FrameArchive> archive) {
  manifest.validate();
  if (!archive) throw ContractError("prepare_dataset: null archive");
  auto windows = window_archive(archive, manifest.input_frames, manifest.lead_times, manifest.stride);
  auto wet = filter_wet(windows, manifest.wet_fraction);
  Dataset ds;
  ds.splits = split_chronological(wet, manifest.train_fraction, manifest.val_fraction);
  ds.stats = fit_normalization(ds.splits.train);
  manifest.train_count = ds.splits.train.size();
  manifest.validation_count = ds.splits.validation.size();
  manifest.test_count = ds.splits.test.size();
  ds.manifest = std::move(manifest);
  ds.archive = std::move(archive);
  return ds;
}

Dataset build_dataset(const DatasetManifest& manifest) {
  manifest.validate();
  auto archive = std::make_shared<const FrameArchive>(
      generate_archive(manifest.seed, manifest.n_frames, manifest.height, manifest.width, manifest.storm));
  return prepare_dataset(manifest, std::move(archive));
}

}  // namespace nwq
