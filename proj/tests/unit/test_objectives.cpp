#include <vector>

#include "doctest.h"
#include "nwq/error.hpp"
#include "nwq/objectives.hpp"
#include "nwq/ops.hpp"
#include "nwq/random.hpp"
#include "suites.hpp"

using namespace nwq;

namespace {

Tensor<double> px(std::vector<double> v) {
  const std::size_t n = v.size();
  return Tensor<double>({1, n, 1, 1}, std::move(v), true);
}

}  // namespace

TEST_SUITE("objectives") {

TEST_CASE("pinball values") {
  CHECK(pinball_value(3, 1, 0.9) == doctest::Approx(1.8));
  CHECK(pinball_value(1, 3, 0.9) == doctest::Approx(0.2));
  for (double q : {0.1, 0.5, 0.95}) CHECK(pinball_value(2, 2, q) == 0.0);

  Tape<double> tape(false);
  CHECK(pinball(tape, px({3}), px({1}), 0.9).item() == doctest::Approx(1.8));
  CHECK(pinball(tape, px({3, 1}), px({1, 3}), 0.9).item() == doctest::Approx(2.0));
  CHECK_THROWS_AS(pinball(tape, px({1, 2}), px({1}), 0.5), DimensionError);
}

TEST_CASE("pinball derivative, right derivative at zero error") {
  Tape<double> tape;
  auto y = px({2, 0, 1});
  auto yh = px({1, 1, 1});
  backward(pinball(tape, y, yh, 0.9), tape);
  CHECK(yh.grad()[0] == doctest::Approx(-0.9));
  CHECK(yh.grad()[1] == doctest::Approx(0.1));
  CHECK(yh.grad()[2] == doctest::Approx(-0.9));
}

TEST_CASE("weighted multi-quantile worked example") {
  Tape<double> tape(false);
  const auto y = Tensor<double>({1, 1, 1, 1}, {2.0});
  const auto yh = Tensor<double>({1, 3, 1, 1}, {1.0, 3.0, 4.0});
  CHECK(multi_quantile_loss(tape, y, yh, QuantileSpec::standard()).item() == doctest::Approx(0.6).epsilon(1e-12));
  CHECK_THROWS_AS(multi_quantile_loss(tape, y, Tensor<double>({1, 2, 1, 1}, {1.0, 2.0}), QuantileSpec::standard()),
                  DimensionError);
}

TEST_CASE("multi-quantile normalizes by the batch only") {
  Tape<double> tape(false);
  const QuantileSpec spec{{0.5}, {1.0}};
  const auto y = Tensor<double>({2, 1, 1, 2}, {1, 1, 1, 1});
  const auto yh = Tensor<double>({2, 1, 1, 2}, {0, 0, 0, 0});
  // four pixels at 0.5 each, divided by B = 2
  CHECK(multi_quantile_loss(tape, y, yh, spec).item() == doctest::Approx(1.0));
}

TEST_CASE("mse and mae examples") {
  Tape<double> tape(false);
  CHECK(mse_loss(tape, px({1, 2}), px({1, 2})).item() == 0.0);
  CHECK(mse_loss(tape, px({3}), px({0})).item() == 9.0);
  CHECK(mae_loss(tape, px({1, 2}), px({1, 2})).item() == 0.0);
  const auto y = Tensor<double>({2, 1, 1, 1}, {1.0, 0.0});
  const auto yh = Tensor<double>({2, 1, 1, 1}, {0.0, 1.0});
  CHECK(mae_loss(tape, y, yh).item() == 1.0);
  CHECK_THROWS_AS(mse_loss(tape, px({1, 2}), px({1})), DimensionError);
  CHECK_THROWS_AS(mae_loss(tape, px({1, 2}), px({1})), DimensionError);
}

TEST_CASE("mse gradient is 2e/B") {
  Rng rng(4);
  auto y = testing::random_tensor<double>({3, 2, 4, 4}, rng, 0, 1, false);
  auto yh = testing::random_tensor<double>({3, 2, 4, 4}, rng, 0, 1, true);
  Tape<double> tape;
  backward(mse_loss(tape, y, yh), tape);
  for (std::size_t i = 0; i < y.size(); ++i) {
    CHECK(yh.grad()[i] == doctest::Approx(2.0 * (yh.values()[i] - y.values()[i]) / 3.0));
  }
}

TEST_CASE("twice the median pinball equals the MAE exactly") {
  Rng rng(8);
  for (int k = 0; k < 50; ++k) {
    auto y = testing::random_tensor<float>({2, 3, 4, 4}, rng, 0, 2, false);
    auto yh = testing::random_tensor<float>({2, 3, 4, 4}, rng, 0, 2, false);
    Tape<float> tape(false);
    const QuantileSpec median{{0.5}, {1.0}};
    CHECK(2.0f * multi_quantile_loss(tape, y, yh, median).item() == mae_loss(tape, y, yh).item());
  }
}

TEST_CASE("loss names and dispatch") {
  CHECK(loss_name(MseLoss{}) == "mse");
  CHECK(loss_name(parse_loss("mae")) == "mae");
  CHECK(std::holds_alternative<MultiQuantileLoss>(parse_loss("quantile")));
  CHECK_THROWS_AS(parse_loss("huber"), ConfigError);
  Tape<double> tape(false);
  CHECK(compute_loss(tape, MseLoss{}, px({3}), px({0})).item() == 9.0);
}

}  // TEST_SUITE
