#include <algorithm>
#include <cmath>
#include <numbers>

#include "nwq/data.hpp"
#include "nwq/error.hpp"
#include "nwq/random.hpp"

namespace nwq {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr int kWaves = 3;
constexpr double kSpawnMargin = 6.0;

struct Wave {
  double kx, ky, phase, drift, amplitude;
};

struct Cell {
  double x, y;
  double cos_t, sin_t;
  double inv_major2, inv_minor2;  // 1 / (2 sigma^2)
  double reach;                   // render radius
  double log_intensity;
  std::uint32_t age = 0;
  std::uint32_t grow_steps = 0;
};

// Smooth periodic field with unit mean; the episode level scales it.
struct Background {
  double level = 0.0;
  Wave waves[kWaves]{};
  double amplitude_sum = 1.0;

  void draw(Rng& rng, const StormParams& p) {
    level = rng.lognormal(p.background_log_median, p.background_log_sigma);
    amplitude_sum = 0.0;
    for (auto& w : waves) {
      const double wavelength = rng.uniform(12.0, 40.0);
      const double dir = rng.uniform(0.0, kTwoPi);
      w.kx = kTwoPi / wavelength * std::cos(dir);
      w.ky = kTwoPi / wavelength * std::sin(dir);
      w.phase = rng.uniform(0.0, kTwoPi);
      w.drift = rng.normal(0.0, 0.02);
      w.amplitude = rng.uniform(0.5, 1.0);
      amplitude_sum += w.amplitude;
    }
  }

  double at(double x, double y, double modulation) const {
    double s = 0.0;
    for (const auto& w : waves) s += w.amplitude * std::cos(w.kx * x + w.ky * y + w.phase);
    return level * (1.0 + modulation * s / amplitude_sum);
  }
};

Cell spawn_cell(Rng& rng, const StormParams& p, std::uint32_t height, std::uint32_t width) {
  // Cells live for up to cell_max_age steps while drifting, so spawn upwind as well.
  const double travel_x = -p.velocity_x * p.cell_max_age * 0.5;
  const double travel_y = -p.velocity_y * p.cell_max_age * 0.5;
  Cell c;
  c.x = rng.uniform(std::min(0.0, travel_x) - kSpawnMargin, width + std::max(0.0, travel_x) + kSpawnMargin);
  c.y = rng.uniform(std::min(0.0, travel_y) - kSpawnMargin, height + std::max(0.0, travel_y) + kSpawnMargin);
  const double major = rng.uniform(p.cell_sigma_min, p.cell_sigma_max);
  const double minor = major / rng.uniform(1.0, p.cell_max_aspect);
  const double theta = rng.uniform(0.0, std::numbers::pi);
  c.cos_t = std::cos(theta);
  c.sin_t = std::sin(theta);
  c.inv_major2 = 1.0 / (2.0 * major * major);
  c.inv_minor2 = 1.0 / (2.0 * minor * minor);
  c.reach = 4.0 * major;
  c.grow_steps = 2 + static_cast<std::uint32_t>(rng.below(6));
  const double peak = rng.normal(p.cell_log_peak_median, p.cell_log_peak_sigma);
  c.log_intensity = peak - p.cell_growth * c.grow_steps;
  return c;
}

void render_cell(const Cell& c, std::vector<double>& field, std::uint32_t height, std::uint32_t width) {
  const double peak = std::exp(c.log_intensity);
  const long y0 = std::max<long>(0, static_cast<long>(std::floor(c.y - c.reach)));
  const long y1 = std::min<long>(height - 1, static_cast<long>(std::ceil(c.y + c.reach)));
  const long x0 = std::max<long>(0, static_cast<long>(std::floor(c.x - c.reach)));
  const long x1 = std::min<long>(width - 1, static_cast<long>(std::ceil(c.x + c.reach)));
  for (long i = y0; i <= y1; ++i) {
    const double dy = i + 0.5 - c.y;
    for (long j = x0; j <= x1; ++j) {
      const double dx = j + 0.5 - c.x;
      const double u = c.cos_t * dx + c.sin_t * dy;
      const double v = -c.sin_t * dx + c.cos_t * dy;
      field[static_cast<std::size_t>(i) * width + j] +=
          peak * std::exp(-(u * u * c.inv_major2 + v * v * c.inv_minor2));
    }
  }
}

}  // namespace

void StormParams::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(std::string("storm parameters: ") + what);
  };
  require(steps_per_hour >= 1, "steps_per_hour must be >= 1");
  require(std::isfinite(velocity_x) && std::isfinite(velocity_y), "velocity must be finite");
  require(velocity_jitter >= 0.0, "velocity_jitter must be >= 0");
  require(velocity_reversion >= 0.0 && velocity_reversion <= 1.0, "velocity_reversion outside [0, 1]");
  require(dry_fraction >= 0.0 && dry_fraction < 1.0, "dry_fraction outside [0, 1)");
  require(mean_wet_episode >= 1.0, "mean_wet_episode must be >= 1");
  require(background_log_sigma >= 0.0 && cell_log_peak_sigma >= 0.0, "log sigmas must be >= 0");
  require(background_modulation >= 0.0 && background_modulation < 1.0,
          "background_modulation outside [0, 1)");
  require(cell_birth_rate >= 0.0 && cell_birth_rate <= 50.0, "cell_birth_rate outside [0, 50]");
  require(cell_sigma_min > 0.0 && cell_sigma_max >= cell_sigma_min, "cell sigma range invalid");
  require(cell_max_aspect >= 1.0, "cell_max_aspect must be >= 1");
  require(cell_growth >= 0.0 && cell_decay >= 0.0 && cell_noise >= 0.0,
          "cell growth, decay and noise must be >= 0");
  require(cell_max_age >= 1, "cell_max_age must be >= 1");
  require(dry_cutoff >= 0.0, "dry_cutoff must be >= 0");
}

FrameArchive generate_archive(std::uint64_t seed, std::uint32_t n_frames, std::uint32_t height,
                              std::uint32_t width, const StormParams& p) {
  if (n_frames == 0 || height == 0 || width == 0) {
    throw ConfigError("generate_archive: frame count and grid size must be positive");
  }
  p.validate();

  FrameArchive archive;
  archive.n_frames = n_frames;
  archive.height = height;
  archive.width = width;
  archive.steps_per_hour = p.steps_per_hour;
  archive.values.assign(static_cast<std::size_t>(n_frames) * height * width, 0.0f);

  Rng rng(seed);
  const double mean_dry = p.mean_wet_episode * p.dry_fraction / (1.0 - p.dry_fraction);
  bool wet = rng.uniform() >= p.dry_fraction;
  std::uint32_t remaining = 0;
  auto episode_length = [&](bool is_wet) {
    return rng.geometric(1.0 / (is_wet ? p.mean_wet_episode : std::max(1.0, mean_dry)));
  };
  Background background;
  if (wet) {
    remaining = episode_length(true);
    background.draw(rng, p);
  } else {
    remaining = p.dry_fraction > 0.0 ? episode_length(false) : 1;
  }

  double activity = wet ? 1.0 : 0.0;
  const double ramp_step = p.ramp_frames == 0 ? 1.0 : 1.0 / p.ramp_frames;
  double vx = p.velocity_x, vy = p.velocity_y;
  double ox = 0.0, oy = 0.0;  // accumulated advection of the background
  std::vector<Cell> cells;
  std::vector<double> field(static_cast<std::size_t>(height) * width);
  const double log_floor = std::log(std::max(p.dry_cutoff, 1e-6)) - 2.0;

  for (std::uint32_t t = 0; t < n_frames; ++t) {
    if (remaining == 0) {
      const bool next_wet = p.dry_fraction == 0.0 ? true : !wet;
      if (next_wet && !wet) background.draw(rng, p);
      wet = next_wet;
      remaining = episode_length(wet);
    }
    --remaining;
    activity = wet ? std::min(1.0, activity + ramp_step) : std::max(0.0, activity - ramp_step);

    vx += p.velocity_reversion * (p.velocity_x - vx) + p.velocity_jitter * rng.normal();
    vy += p.velocity_reversion * (p.velocity_y - vy) + p.velocity_jitter * rng.normal();
    ox += vx;
    oy += vy;
    for (auto& w : background.waves) w.phase += w.drift;

    for (auto& c : cells) {
      c.x += vx;
      c.y += vy;
      c.log_intensity += (c.age < c.grow_steps ? p.cell_growth : -p.cell_decay) +
                         p.cell_noise * rng.normal();
      ++c.age;
    }
    std::erase_if(cells, [&](const Cell& c) {
      return c.age >= p.cell_max_age || (c.age > c.grow_steps && c.log_intensity < log_floor) ||
             c.x < -c.reach - 40.0 || c.x > width + c.reach + 40.0 ||
             c.y < -c.reach - 40.0 || c.y > height + c.reach + 40.0;
    });
    if (activity == 0.0) cells.clear();
    if (wet) {
      const std::uint32_t births = rng.poisson(p.cell_birth_rate);
      for (std::uint32_t k = 0; k < births; ++k) cells.push_back(spawn_cell(rng, p, height, width));
    }

    if (activity == 0.0) continue;  // frame stays exactly zero
    for (std::uint32_t i = 0; i < height; ++i) {
      for (std::uint32_t j = 0; j < width; ++j) {
        field[static_cast<std::size_t>(i) * width + j] =
            background.at(j + 0.5 - ox, i + 0.5 - oy, p.background_modulation);
      }
    }
    for (const auto& c : cells) render_cell(c, field, height, width);
    float* out = archive.values.data() + static_cast<std::size_t>(t) * height * width;
    for (std::size_t k = 0; k < field.size(); ++k) {
      const double v = activity * field[k];
      out[k] = v < p.dry_cutoff ? 0.0f : static_cast<float>(v);
    }
  }
  return archive;
}

}  // namespace nwq
