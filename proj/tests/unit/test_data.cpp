#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <memory>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "nwq/data.hpp"
#include "nwq/error.hpp"

using namespace nwq;

namespace {

std::shared_ptr<const FrameArchive> constant_archive(std::uint32_t n, std::uint32_t hw, float value) {
  auto a = std::make_shared<FrameArchive>();
  a->n_frames = n;
  a->height = hw;
  a->width = hw;
  a->values.assign(static_cast<std::size_t>(n) * hw * hw, value);
  return a;
}

// Archive whose frame t holds the value t + 1 in every pixel (never dry).
std::shared_ptr<const FrameArchive> counting_archive(std::uint32_t n, std::uint32_t hw = 2) {
  auto a = std::make_shared<FrameArchive>();
  a->n_frames = n;
  a->height = hw;
  a->width = hw;
  for (std::uint32_t t = 0; t < n; ++t) {
    for (std::uint32_t i = 0; i < hw * hw; ++i) a->values.push_back(static_cast<float>(t + 1));
  }
  return a;
}

const FrameArchive& seed0_archive() {
  static const FrameArchive a = generate_archive(0, 5000, 32, 32);
  return a;
}

}  // namespace

TEST_SUITE("data") {

TEST_CASE("generator is deterministic and seed-dependent") {
  const auto a = generate_archive(3, 200, 16, 16);
  const auto b = generate_archive(3, 200, 16, 16);
  const auto c = generate_archive(4, 200, 16, 16);
  CHECK(a == b);
  CHECK_FALSE(a == c);
  CHECK(a.values.size() == 200u * 16 * 16);
  CHECK(std::ranges::all_of(a.values, [](float v) { return v >= 0.0f && std::isfinite(v); }));
  CHECK_THROWS_AS(generate_archive(0, 0, 16, 16), ConfigError);
}

TEST_CASE("storm parameters validate and round-trip") {
  StormParams p;
  CHECK_NOTHROW(p.validate());
  CHECK(StormParams::from_json(p.to_json()).to_json() == p.to_json());
  p.dry_fraction = 1.5;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  auto j = StormParams{}.to_json();
  j["bogus"] = 1;
  CHECK_THROWS_AS(StormParams::from_json(j), ConfigError);
}

TEST_CASE("seed-0 archive is zero-inflated") {
  const auto& a = seed0_archive();
  const auto zeros = std::ranges::count(a.values, 0.0f);
  const double fraction = static_cast<double>(zeros) / static_cast<double>(a.values.size());
  CHECK(fraction >= 0.30);
  // Regression value measured once on this generator.
  CHECK(fraction == doctest::Approx(0.430630).epsilon(1e-5));
}

TEST_CASE("consecutive frames are displaced by the advection velocity") {
  const auto& a = seed0_archive();
  const StormParams p;
  const int hw = 32, r = 3;
  std::map<std::pair<int, int>, int> votes;
  for (std::size_t t = 0; t + 1 < a.n_frames; t += 7) {
    const auto f0 = a.frame(t), f1 = a.frame(t + 1);
    if (std::ranges::count_if(f0, [](float v) { return v > 0.0f; }) < hw * hw / 2) continue;
    double best = -1.0;
    std::pair<int, int> arg{0, 0};
    for (int dy = -r; dy <= r; ++dy) {
      for (int dx = -r; dx <= r; ++dx) {
        double s = 0.0, n0 = 0.0, n1 = 0.0;
        for (int i = r; i < hw - r; ++i) {
          for (int j = r; j < hw - r; ++j) {
            const double u = f0[i * hw + j], v = f1[(i + dy) * hw + (j + dx)];
            s += u * v;
            n0 += u * u;
            n1 += v * v;
          }
        }
        const double c = n0 > 0 && n1 > 0 ? s / std::sqrt(n0 * n1) : 0.0;
        if (c > best) {
          best = c;
          arg = {dx, dy};
        }
      }
    }
    ++votes[arg];
  }
  REQUIRE_FALSE(votes.empty());
  const auto mode = std::ranges::max_element(votes, {}, [](const auto& kv) { return kv.second; })->first;
  CHECK(std::abs(mode.first - p.velocity_x) <= 1.0);
  CHECK(std::abs(mode.second - p.velocity_y) <= 1.0);
}

TEST_CASE("window counts") {
  CHECK(window_archive(counting_archive(7), 4, 3).size() == 1);
  const auto w = window_archive(counting_archive(8), 4, 3);
  REQUIRE(w.size() == 2);
  CHECK(w[1].timestamp_index() == 1);
  CHECK(w[1].inputs()[0] == 2.0f);
  CHECK(w[1].target_frame(0)[0] == 6.0f);
  CHECK(window_archive(counting_archive(20), 4, 3, 5).size() == 3);
  CHECK_THROWS_AS(window_archive(counting_archive(6), 4, 3), DataError);
}

TEST_CASE("wet filter") {
  const auto w = window_archive(counting_archive(30), 4, 3);
  CHECK(filter_wet(w, 0.0).size() == w.size());
  CHECK(filter_wet(window_archive(constant_archive(10, 4, 0.0f), 4, 3), 0.5).empty());
  CHECK_THROWS_AS(filter_wet(w, 1.5), ConfigError);

  auto a = std::make_shared<FrameArchive>(seed0_archive());
  const auto all = window_archive(a, 4, 3);
  std::size_t recount = 0;
  for (std::size_t s = 0; s + 7 <= a->n_frames; ++s) {
    const auto last = a->frame(s + 6);
    std::size_t wet = 0;
    for (float v : last) wet += v > 0.0f ? 1 : 0;
    if (static_cast<double>(wet) >= 0.5 * static_cast<double>(last.size())) ++recount;
  }
  CHECK(filter_wet(all, 0.5).size() == recount);
  CHECK(recount == 2847);
}

TEST_CASE("chronological split of 100 windows") {
  const auto w = window_archive(counting_archive(106), 4, 3);
  REQUIRE(w.size() == 100);
  const auto s = split_chronological(w, 0.75, 0.10);
  // block 75, validation round(7.5) = 8 windows from 67; straddlers dropped
  CHECK(s.train.size() == 61);
  CHECK(s.validation.size() == 2);
  CHECK(s.test.size() == 25);
  CHECK(s.train.back().last_frame() < s.validation.front().first_frame());
  CHECK(s.validation.back().last_frame() < s.test.front().first_frame());
  CHECK_THROWS_AS(split_chronological(window_archive(counting_archive(10), 4, 3), 0.75, 0.10), ConfigError);
  CHECK_THROWS_AS(split_chronological(w, 1.0, 0.1), ConfigError);
}

TEST_CASE("normalization statistics") {
  auto a = std::make_shared<FrameArchive>(*counting_archive(10));
  a->values[5 * 4 + 2] = 40.0f;
  const auto w = window_archive(a, 4, 3);
  CHECK(fit_normalization(w).train_max == 40.0f);

  const auto c = window_archive(constant_archive(8, 2, 4.0f), 4, 3);
  const auto stats = fit_normalization(c);
  CHECK(stats.train_max == 4.0f);
  const std::size_t idx[] = {0, 1};
  const auto batch = make_batch(c, idx, stats);
  CHECK(batch.inputs.shape() == Shape{2, 4, 2, 2});
  CHECK(batch.targets.shape() == Shape{2, 3, 2, 2});
  CHECK(*std::ranges::max_element(batch.inputs.values()) == 1.0f);
  CHECK_THROWS_AS(fit_normalization(window_archive(constant_archive(8, 2, 0.0f), 4, 3)), DataError);
  CHECK_THROWS_AS(make_batch(c, std::span<const std::size_t>{}, stats), ContractError);
}

TEST_CASE("rate conversion") {
  CHECK(to_rate(0.5f, 12) == 6.0f);
  CHECK(to_rate(0.0f, 12) == 0.0f);
  // exact whenever 12x is representable; otherwise within one rounding step
  for (float x : {0.5f, 0.125f, 3.0f, 0.75f}) CHECK(to_rate(x, 12) / 12.0f == x);
  for (float x : {0.004f, 0.37f, 1.9f, 6.3f}) {
    CHECK(std::abs(to_rate(x, 12) / 12.0f - x) <= std::nextafter(x, 100.0f) - x);
  }
}

TEST_CASE("NWQ1 round trip and corruption") {
  const auto a = generate_archive(1, 20, 8, 8);
  const auto bytes = serialize_archive(a);
  CHECK(bytes.size() == 24 + 4 * a.values.size());
  CHECK(parse_archive(bytes) == a);

  const auto path = std::filesystem::temp_directory_path() / "nwq_unit_archive.nwq1";
  write_archive(a, path);
  CHECK(read_archive(path) == a);
  std::filesystem::remove(path);

  auto bad = bytes;
  bad[0] = 'X';
  try {
    parse_archive(bad);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(e.offset() == 0);
  }
  auto truncated = bytes;
  truncated.resize(bytes.size() - 4);
  CHECK_THROWS_AS(parse_archive(truncated), FormatError);
  auto dims = bytes;
  dims[8] = 9;  // height 9 no longer matches the payload
  CHECK_THROWS_AS(parse_archive(dims), FormatError);
  auto overflow = bytes;
  for (int k = 4; k < 16; ++k) overflow[k] = 0xFF;
  CHECK_THROWS_AS(parse_archive(overflow), FormatError);
  CHECK_THROWS_AS(read_archive("/nonexistent/archive.nwq1"), DataError);
}

TEST_CASE("manifest JSON is strict and round-trips") {
  DatasetManifest m;
  m.seed = 9;
  m.stride = 2;
  const auto back = DatasetManifest::from_json(m.to_json());
  CHECK(back.to_json() == m.to_json());
  auto j = m.to_json();
  j["extra"] = true;
  CHECK_THROWS_AS(DatasetManifest::from_json(j), ConfigError);
  j = m.to_json();
  j["rate_factor"] = 6;
  CHECK_THROWS_AS(DatasetManifest::from_json(j), ConfigError);
  m.n_frames = 5;
  CHECK_THROWS_AS(m.validate(), ConfigError);
}

TEST_CASE("pipeline is a pure function of the manifest") {
  DatasetManifest m;
  m.n_frames = 5000;
  const auto a = build_dataset(m);
  CHECK(a.manifest.train_count == 1920);
  CHECK(a.manifest.validation_count == 208);
  CHECK(a.manifest.test_count == 712);
  CHECK(a.stats.train_max == 6.30333853f);

  m.n_frames = 1500;
  const auto b1 = build_dataset(m), b2 = build_dataset(m);
  CHECK(*b1.archive == *b2.archive);
  CHECK(b1.stats == b2.stats);
  CHECK(b1.manifest.to_json() == b2.manifest.to_json());
  // Windows never share frames across splits.
  CHECK(b1.splits.train.back().last_frame() < b1.splits.validation.front().first_frame());
  CHECK(b1.splits.validation.back().last_frame() < b1.splits.test.front().first_frame());
}

}  // TEST_SUITE
