#include <vector>

#include "doctest.h"
#include "nwq/error.hpp"
#include "nwq/model.hpp"
#include "nwq/random.hpp"
#include "suites.hpp"

using namespace nwq;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.input_frames = 4;
  c.lead_times = 3;
  c.base_channels = 8;
  c.depth = 2;
  c.grid_h = 16;
  c.grid_w = 16;
  return c;
}

bool params_identical(const Parameters<float>& a, const Parameters<float>& b) {
  if (a.size() != b.size()) return false;
  auto ia = a.begin();
  for (auto ib = b.begin(); ib != b.end(); ++ia, ++ib) {
    if (ia->first != ib->first || ia->second.shape() != ib->second.shape()) return false;
    auto va = ia->second.values();
    auto vb = ib->second.values();
    if (!std::equal(va.begin(), va.end(), vb.begin())) return false;
  }
  return true;
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("quantile spec validation") {
  CHECK_NOTHROW(QuantileSpec::standard().validate());
  CHECK(QuantileSpec::standard().weights == std::vector<double>{1.0, 0.5, 0.5});
  CHECK(QuantileSpec::with_upper_weight(0.25).weights == std::vector<double>{1.0, 0.25, 0.25});
  CHECK(QuantileSpec::standard().find(0.9) == 1u);
  CHECK_FALSE(QuantileSpec::standard().find(0.7).has_value());
  CHECK_THROWS_AS((QuantileSpec{{0.9, 0.5}, {1, 1}}.validate()), ConfigError);
  CHECK_THROWS_AS((QuantileSpec{{0.5, 1.0}, {1, 1}}.validate()), ConfigError);
  CHECK_THROWS_AS((QuantileSpec{{0.5}, {0.0}}.validate()), ConfigError);
  CHECK_THROWS_AS((QuantileSpec{{0.5}, {1, 1}}.validate()), ConfigError);
}

TEST_CASE("model config validation") {
  auto c = small_config();
  CHECK_NOTHROW(c.validate());
  c.grid_h = 18;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small_config();
  c.base_channels = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small_config();
  c.quantiles = QuantileSpec::standard();
  CHECK(c.output_channels() == 9);
  c.lead_times = 12;
  CHECK(c.output_channels() == 36);
}

TEST_CASE("initialization is a pure function of the config") {
  auto c = small_config();
  CHECK(params_identical(init_parameters(c), init_parameters(c)));
  c.seed = 1;
  CHECK_FALSE(params_identical(init_parameters(small_config()), init_parameters(c)));
  for (const auto& [name, t] : init_parameters(c)) CHECK(t.requires_grad());
}

TEST_CASE("head width and hand-counted parameter total") {
  auto c = small_config();
  c.quantiles = QuantileSpec::standard();
  const auto p = init_parameters(c);
  CHECK(p.at("head.weight").dim(0) == 9);
  // Per-layer sums for base 8, depth 2, m=4, 9 outputs, attention on.
  const std::size_t enc = 232 + 656 + 2080, att = 141 + 247 + 651, dec = 1696 + 592, head = 81;
  CHECK(p.total_count() == enc + att + dec + head);
  const auto table = architecture_table(c);
  CHECK(table.find("total") != std::string::npos);
  CHECK(table.find(std::to_string(enc + att + dec + head)) != std::string::npos);

  c.attention_enabled = false;
  CHECK(init_parameters(c).total_count() == enc + dec + head);
}

TEST_CASE("forward shapes and errors") {
  auto c = small_config();
  const auto p = init_parameters(c);
  Tape<float> tape(false);
  auto x = Tensor<float>::full({2, 4, 16, 16}, 0.3f);
  auto y = forward(tape, p, c, x);
  CHECK(y.shape() == Shape{2, 3, 16, 16});
  for (float v : y.values()) CHECK(v >= 0.0f);
  CHECK_THROWS_AS(forward(tape, p, c, Tensor<float>::zeros({0, 4, 16, 16})), ContractError);
  CHECK_THROWS_AS(forward(tape, p, c, Tensor<float>::zeros({1, 3, 16, 16})), DimensionError);

  auto q = c;
  q.quantiles = QuantileSpec::standard();
  q.lead_times = 12;
  q.input_frames = 12;
  CHECK(forward(tape, init_parameters(q), q, Tensor<float>::zeros({1, 12, 16, 16})).dim(1) == 36);
}

TEST_CASE("zero input with a zeroed head gives zeros") {
  auto c = small_config();
  auto p = init_parameters(c);
  for (auto& v : p.at("head.weight").mutable_values()) v = 0.0f;
  Tape<float> tape(false);
  auto y = forward(tape, p, c, Tensor<float>::zeros({1, 4, 16, 16}));
  for (float v : y.values()) CHECK(v == 0.0f);
}

TEST_CASE("extract_quantile uses the lead-major layout") {
  const auto spec = QuantileSpec::standard();
  std::vector<float> v(9 * 4);
  for (std::size_t ch = 0; ch < 9; ++ch) {
    for (std::size_t i = 0; i < 4; ++i) v[ch * 4 + i] = static_cast<float>(ch);
  }
  Tensor<float> out({1, 9, 2, 2}, v);
  auto q0 = extract_quantile(out, 0, spec);
  CHECK(q0.shape() == Shape{1, 3, 2, 2});
  CHECK(q0.values()[0] == 0.0f);
  CHECK(q0.values()[4] == 3.0f);
  CHECK(q0.values()[8] == 6.0f);
  CHECK(extract_quantile(out, 2, spec).values()[4] == 5.0f);
  CHECK_THROWS_AS(extract_quantile(out, 3, spec), ContractError);

  const QuantileSpec one{{0.5}, {1.0}};
  Tensor<float> single({1, 3, 2, 2}, std::vector<float>(12, 1.5f));
  auto same = extract_quantile(single, 0, one);
  CHECK(std::vector<float>(same.values().begin(), same.values().end()) ==
        std::vector<float>(single.values().begin(), single.values().end()));
}

TEST_CASE("attention gate saturation and zero input") {
  const std::size_t c = 4, h = attention_hidden(c);
  Parameters<double> p;
  p.add("a.fc1.weight", Tensor<double>::zeros({h, c, 1, 1}));
  p.add("a.fc1.bias", Tensor<double>::zeros({h}));
  p.add("a.fc2.weight", Tensor<double>::zeros({c, h, 1, 1}));
  p.add("a.fc2.bias", Tensor<double>::full({c}, 40.0));
  p.add("a.spatial.weight", Tensor<double>::zeros({1, 2, 7, 7}));
  p.add("a.spatial.bias", Tensor<double>::full({1}, 40.0));
  const auto gp = AttentionParams<double>::from(p, "a");
  Rng rng(3);
  auto x = testing::random_tensor<double>({2, c, 5, 5}, rng, -2, 2, false);
  Tape<double> tape(false);
  auto y = attention_gate(tape, x, gp);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(y.values()[i] == doctest::Approx(x.values()[i]).epsilon(1e-3));

  for (auto& v : p.at("a.fc1.weight").mutable_values()) v = rng.uniform(-1, 1);
  auto z = attention_gate(tape, Tensor<double>::zeros({1, c, 5, 5}), AttentionParams<double>::from(p, "a"));
  for (double v : z.values()) CHECK(v == 0.0);
}

TEST_CASE("parameters: lookup, clone and cast") {
  auto p = init_parameters(small_config());
  CHECK(p.contains("enc0.conv1.dw.weight"));
  CHECK_THROWS_AS(p.at("nope"), ContractError);
  CHECK_THROWS_AS(p.add("head.bias", Tensor<float>::zeros({1})), ContractError);
  auto copy = p.clone();
  copy.at("head.bias").mutable_values()[0] = 1.0f;
  CHECK(p.at("head.bias").values()[0] == 0.0f);
  auto d = cast_parameters<double>(p);
  CHECK(d.total_count() == p.total_count());
}

TEST_CASE("backbone gradients match finite differences") {
  for (const auto& row : testing::run_backbone_suite<double>(1, 77)) {
    INFO(row.name << " worst " << row.report.worst);
    CHECK(row.report.max_rel < 1e-4);
  }
  for (const auto& row : testing::run_backbone_suite<float>(1, 78)) {
    INFO(row.name << " worst " << row.report.worst);
    CHECK(row.report.max_rel < 1e-2);
  }
}

}  // TEST_SUITE
