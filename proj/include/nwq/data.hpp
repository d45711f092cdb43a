#pragma once

// Radar-like frame archives, sample windows and the preprocessing pipeline:
// generate/read -> window -> wet filter -> chronological split -> normalization.
// Raw values are precipitation accumulations in mm per time step.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "nwq/tensor.hpp"

namespace nwq {

/// Contiguous sequence of frames, frame-major then row-major, mm per step.
struct FrameArchive {
  std::uint32_t n_frames = 0;
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::uint32_t steps_per_hour = 12;
  std::vector<float> values;

  std::size_t frame_size() const { return static_cast<std::size_t>(height) * width; }
  std::span<const float> frame(std::size_t index) const;
  std::span<const float> frames(std::size_t first, std::size_t count) const;

  bool operator==(const FrameArchive&) const = default;
};

/// Knobs of the synthetic storm generator. Defaults produce the desk-scale dataset.
struct StormParams {
  std::uint32_t steps_per_hour = 12;

  // Mean shared advection velocity (pixels per step) and its slow random drift.
  double velocity_x = 0.8;
  double velocity_y = 0.4;
  double velocity_jitter = 0.05;     // OU innovation std per step
  double velocity_reversion = 0.02;  // OU pull towards the mean per step

  // Alternating wet episodes and dry spells.
  double dry_fraction = 0.4;          // expected share of fully dry frames
  double mean_wet_episode = 60.0;     // frames
  std::uint32_t ramp_frames = 3;      // fade in/out of an episode

  // Widespread background rain, a smooth advecting field.
  double background_log_median = -3.0;  // log(mm/step) of the episode level
  double background_log_sigma = 0.35;
  double background_modulation = 0.6;   // relative amplitude of the spatial pattern

  // Convective cells: anisotropic Gaussians with log-normal peaks.
  double cell_birth_rate = 0.35;     // expected births per frame in an active episode
  double cell_log_peak_median = 0.2;  // log(mm/step)
  double cell_log_peak_sigma = 0.5;
  double cell_sigma_min = 1.5;       // pixels
  double cell_sigma_max = 3.5;
  double cell_max_aspect = 2.2;
  double cell_growth = 0.12;         // log-intensity drift per step while growing
  double cell_decay = 0.06;          // log-intensity drift per step while decaying
  double cell_noise = 0.04;          // log-intensity noise per step
  std::uint32_t cell_max_age = 40;

  // Values below this are reported as exactly zero.
  double dry_cutoff = 0.004;

  nlohmann::json to_json() const;
  static StormParams from_json(const nlohmann::json& j);
  void validate() const;
};

FrameArchive generate_archive(std::uint64_t seed, std::uint32_t n_frames, std::uint32_t height,
                              std::uint32_t width, const StormParams& params = {});

/// One sample: m input frames followed by L target frames, starting at timestamp_index.
/// Views into a shared archive.
class RadarSequence {
 public:
  RadarSequence(std::shared_ptr<const FrameArchive> archive, std::size_t timestamp_index,
                std::size_t input_frames, std::size_t lead_times);

  std::size_t timestamp_index() const { return start_; }
  std::size_t input_frames() const { return m_; }
  std::size_t lead_times() const { return l_; }
  std::size_t first_frame() const { return start_; }
  std::size_t last_frame() const { return start_ + m_ + l_ - 1; }

  std::span<const float> inputs() const;   // [m, H, W]
  std::span<const float> targets() const;  // [L, H, W]
  std::span<const float> target_frame(std::size_t lead) const;
  const FrameArchive& archive() const { return *archive_; }

 private:
  std::shared_ptr<const FrameArchive> archive_;
  std::size_t start_, m_, l_;
};

using Sequences = std::vector<RadarSequence>;

/// Windows at `stride`; count = floor((n_frames - m - L) / stride) + 1.
Sequences window_archive(std::shared_ptr<const FrameArchive> archive, std::size_t input_frames,
                         std::size_t lead_times, std::size_t stride = 1);

/// Keeps sequences whose final target frame has a wet (> 0) pixel share >= wet_fraction.
Sequences filter_wet(const Sequences& sequences, double wet_fraction);

struct Splits {
  Sequences train, validation, test;
};

/// Chronological split. The first floor(train_fraction*n) windows form the train block,
/// whose last round(val_fraction * block) windows become validation; the rest is test.
/// Windows that share frames with a later split are dropped.
Splits split_chronological(const Sequences& sequences, double train_fraction, double val_fraction);

struct NormalizationStats {
  float train_max = 1.0f;  // mm per step

  float normalize(float raw) const { return raw / train_max; }
  float denormalize(float value) const { return value * train_max; }
  bool operator==(const NormalizationStats&) const = default;
};

/// Maximum over every input and target pixel of the training windows.
NormalizationStats fit_normalization(const Sequences& train);

/// mm per step -> mm/h.
inline float to_rate(float value_mm_per_step, std::uint32_t steps_per_hour) {
  return value_mm_per_step * static_cast<float>(steps_per_hour);
}

/// Stacks normalized inputs [B, m, H, W] and targets [B, L, H, W].
struct Batch {
  Tensor<float> inputs;
  Tensor<float> targets;
};
Batch make_batch(const Sequences& sequences, std::span<const std::size_t> indices,
                 const NormalizationStats& stats);

// --- NWQ1 archive files ---------------------------------------------------------

void write_archive(const FrameArchive& archive, const std::filesystem::path& path);
FrameArchive read_archive(const std::filesystem::path& path);
/// Parses an in-memory NWQ1 image; read_archive is a thin wrapper.
FrameArchive parse_archive(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> serialize_archive(const FrameArchive& archive);

// --- Manifest --------------------------------------------------------------------

/// Everything that determines a dataset, plus the resulting split sizes.
struct DatasetManifest {
  std::uint64_t seed = 0;
  std::uint32_t n_frames = 5000;
  std::uint32_t height = 32;
  std::uint32_t width = 32;
  StormParams storm;
  std::string source;  // archive path when ingested instead of generated

  std::size_t input_frames = 4;
  std::size_t lead_times = 3;
  std::size_t stride = 1;
  double wet_fraction = 0.5;
  double train_fraction = 0.75;
  double val_fraction = 0.10;

  std::size_t train_count = 0;
  std::size_t validation_count = 0;
  std::size_t test_count = 0;

  std::uint32_t steps_per_hour() const { return storm.steps_per_hour; }
  nlohmann::json to_json() const;
  static DatasetManifest from_json(const nlohmann::json& j);
  void validate() const;
};

/// A fully prepared dataset.
struct Dataset {
  DatasetManifest manifest;
  std::shared_ptr<const FrameArchive> archive;
  Splits splits;
  NormalizationStats stats;
};

/// Runs window -> filter -> split -> normalize on an archive and fills the manifest counts.
Dataset prepare_dataset(DatasetManifest manifest, std::shared_ptr<const FrameArchive> archive);
/// Generates the archive described by the manifest, then prepare_dataset.
Dataset build_dataset(const DatasetManifest& manifest);

}  // namespace nwq
