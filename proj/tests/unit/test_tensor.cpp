#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "doctest.h"
#include "nwq/error.hpp"
#include "nwq/ops.hpp"
#include "nwq/random.hpp"
#include "nwq/tensor.hpp"
#include "suites.hpp"

using namespace nwq;

namespace {

template <typename T>
std::vector<T> vals(const Tensor<T>& t) {
  return {t.values().begin(), t.values().end()};
}

Tensor<float> ramp(Shape shape, float start = 0.0f, float step = 1.0f) {
  std::vector<float> v(shape_numel(shape));
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = start + step * static_cast<float>(i);
  return Tensor<float>(std::move(shape), std::move(v));
}

}  // namespace

TEST_SUITE("tensor") {

TEST_CASE("construction checks the element count") {
  CHECK_THROWS_AS(Tensor<float>({2, 3}, std::vector<float>(5)), DimensionError);
  Tensor<float> t({2, 3}, std::vector<float>(6, 1.0f));
  CHECK(t.size() == 6);
  CHECK(t.dim(1) == 3);
  CHECK(shape_string(t.shape()) == "(2,3)");
}

TEST_CASE("copies share storage, clone does not") {
  auto a = Tensor<float>::zeros({3});
  auto b = a;
  auto c = a.clone();
  a.mutable_values()[0] = 7.0f;
  CHECK(b.values()[0] == 7.0f);
  CHECK(c.values()[0] == 0.0f);
  CHECK(a.same_storage(b));
  CHECK_FALSE(a.same_storage(c));
}

TEST_CASE("item requires one element") {
  CHECK(Tensor<double>::scalar(2.5).item() == 2.5);
  CHECK_THROWS_AS(Tensor<double>::zeros({2}).item(), ContractError);
}

TEST_CASE("backward of sum(x) is ones, of sum(x^2) is 2x") {
  Tape<double> tape;
  Tensor<double> x({4}, {1.0, -2.0, 0.5, 3.0}, true);
  backward(sum(tape, x), tape);
  for (double g : x.grad()) CHECK(g == 1.0);

  Tape<double> tape2;
  x.zero_grad();
  backward(sum(tape2, square(tape2, x)), tape2);
  for (std::size_t i = 0; i < 4; ++i) CHECK(x.grad()[i] == 2.0 * x.values()[i]);
}

TEST_CASE("leaf gradients accumulate until zero_grad") {
  Tensor<double> x({2}, {1.0, 2.0}, true);
  for (int k = 0; k < 2; ++k) {
    Tape<double> tape;
    backward(sum(tape, x), tape);
  }
  CHECK(x.grad()[0] == 2.0);
  x.zero_grad();
  CHECK(std::ranges::all_of(x.grad(), [](double g) { return g == 0.0; }));
}

TEST_CASE("backward rejects a non-scalar loss") {
  Tape<float> tape;
  auto x = Tensor<float>::full({3}, 1.0f, true);
  auto y = square(tape, x);
  CHECK_THROWS_AS(backward(y, tape), ContractError);
}

TEST_CASE("nothing is recorded without a gradient or with recording off") {
  Tape<float> tape;
  auto x = Tensor<float>::full({3}, 1.0f);
  auto y = square(tape, x);
  CHECK(tape.size() == 0);
  CHECK_FALSE(y.requires_grad());
  Tape<float> off(false);
  auto z = square(off, Tensor<float>::full({3}, 1.0f, true));
  CHECK(off.size() == 0);
}

TEST_CASE("check_finite names the op") {
  Tensor<float> t({2}, {1.0f, std::numeric_limits<float>::quiet_NaN()});
  try {
    check_finite(t, "probe");
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("probe") != std::string::npos);
  }
}

TEST_CASE("tensor_cast keeps values and the gradient flag") {
  Tensor<float> f({2}, {0.1f, -3.0f}, true);
  auto d = tensor_cast<double>(f);
  CHECK(d.requires_grad());
  CHECK(d.values()[0] == static_cast<double>(0.1f));
}

}  // TEST_SUITE

TEST_SUITE("ops") {

TEST_CASE("conv2d of ones with a 3x3 ones kernel") {
  Tape<float> tape(false);
  auto x = Tensor<float>::full({1, 1, 3, 3}, 1.0f);
  auto w = Tensor<float>::full({1, 1, 3, 3}, 1.0f);
  auto y = conv2d(tape, x, w, Tensor<float>::zeros({1}), 1);
  CHECK(y.shape() == Shape{1, 1, 3, 3});
  CHECK(y.values()[4] == 9.0f);
  CHECK(y.values()[0] == 4.0f);
}

TEST_CASE("conv2d identity kernel, stride and channel checks") {
  Tape<float> tape(false);
  auto x = ramp({1, 1, 4, 4});
  std::vector<float> k(9, 0.0f);
  k[4] = 1.0f;
  auto w = Tensor<float>({1, 1, 3, 3}, k);
  CHECK(vals(conv2d(tape, x, w, Tensor<float>::zeros({1}), 1)) == vals(x));

  auto s2 = conv2d(tape, x, w, Tensor<float>::zeros({1}), 1, 2);
  CHECK(s2.shape() == Shape{1, 1, 2, 2});
  CHECK(vals(s2) == std::vector<float>{0, 2, 8, 10});

  CHECK_THROWS_AS(conv2d(tape, Tensor<float>::zeros({1, 2, 4, 4}), w, Tensor<float>::zeros({1}), 1),
                  DimensionError);
}

TEST_CASE("depthwise conv: zero channel gives the bias, identity kernel adds it") {
  Tape<float> tape(false);
  auto x = ramp({1, 2, 3, 3});
  for (std::size_t i = 9; i < 18; ++i) x.mutable_values()[i] = 0.0f;
  std::vector<float> k(18, 0.0f);
  k[4] = 1.0f;
  k[13] = 1.0f;
  auto w = Tensor<float>({2, 1, 3, 3}, k);
  auto b = Tensor<float>({2}, {0.5f, -1.5f});
  auto y = depthwise_conv2d(tape, x, w, b, 1);
  for (std::size_t i = 0; i < 9; ++i) {
    CHECK(y.values()[i] == x.values()[i] + 0.5f);
    CHECK(y.values()[9 + i] == -1.5f);
  }
  CHECK_THROWS_AS(depthwise_conv2d(tape, x, Tensor<float>::zeros({3, 1, 3, 3}), Tensor<float>::zeros({3}), 1),
                  DimensionError);
}

TEST_CASE("pointwise conv: identity, channel sum, bit match with conv2d") {
  Tape<float> tape(false);
  auto x = ramp({2, 3, 2, 2}, -1.0f, 0.37f);
  std::vector<float> eye(9, 0.0f);
  for (int i = 0; i < 3; ++i) eye[i * 3 + i] = 1.0f;
  CHECK(vals(pointwise_conv2d(tape, x, Tensor<float>({3, 3, 1, 1}, eye), Tensor<float>::zeros({3}))) == vals(x));

  auto s = pointwise_conv2d(tape, x, Tensor<float>::full({1, 3, 1, 1}, 1.0f), Tensor<float>::zeros({1}));
  for (std::size_t n = 0; n < 2; ++n) {
    for (std::size_t p = 0; p < 4; ++p) {
      const float expect = x.values()[n * 12 + p] + x.values()[n * 12 + 4 + p] + x.values()[n * 12 + 8 + p];
      CHECK(s.values()[n * 4 + p] == doctest::Approx(expect));
    }
  }

  Rng rng(11);
  auto xr = testing::random_tensor<float>({3, 5, 6, 6}, rng, -1, 1, false);
  auto wr = testing::random_tensor<float>({7, 5, 1, 1}, rng, -1, 1, false);
  auto br = testing::random_tensor<float>({7}, rng, -1, 1, false);
  CHECK(vals(pointwise_conv2d(tape, xr, wr, br)) == vals(conv2d(tape, xr, wr, br, 0)));
}

TEST_CASE("max_pool2: window max and first-position tie break") {
  Tape<float> tape;
  auto w = Tensor<float>({1, 1, 2, 2}, {1, 2, 3, 4});
  CHECK(max_pool2(tape, w).item() == 4.0f);

  auto c = Tensor<float>::full({1, 1, 4, 4}, 2.0f, true);
  auto y = max_pool2(tape, c);
  for (float v : y.values()) CHECK(v == 2.0f);
  backward(sum(tape, y), tape);
  const std::vector<float> expect = {1, 0, 1, 0, 0, 0, 0, 0, 1, 0, 1, 0, 0, 0, 0, 0};
  CHECK(std::vector<float>(c.grad().begin(), c.grad().end()) == expect);

  CHECK_THROWS_AS(max_pool2(tape, Tensor<float>::zeros({1, 1, 3, 4})), DimensionError);
}

TEST_CASE("bilinear upsample of constants") {
  Tape<float> tape(false);
  auto one = bilinear_upsample2(tape, Tensor<float>::full({1, 1, 1, 1}, 3.5f));
  CHECK(one.shape() == Shape{1, 1, 2, 2});
  for (float v : one.values()) CHECK(v == 3.5f);
  auto c = bilinear_upsample2(tape, Tensor<float>::full({2, 3, 4, 5}, -0.25f));
  CHECK(c.shape() == Shape{2, 3, 8, 10});
  for (float v : c.values()) CHECK(v == -0.25f);
}

TEST_CASE("concat shapes and empty operand") {
  Tape<float> tape(false);
  auto a = ramp({1, 2, 4, 4});
  auto b = ramp({1, 3, 4, 4}, 100.0f);
  auto y = concat_channels(tape, a, b);
  CHECK(y.shape() == Shape{1, 5, 4, 4});
  CHECK(y.values()[32] == 100.0f);
  CHECK(vals(concat_channels(tape, a, Tensor<float>::zeros({1, 0, 4, 4}))) == vals(a));
  CHECK_THROWS_AS(concat_channels(tape, a, Tensor<float>::zeros({1, 1, 2, 4})), DimensionError);
}

TEST_CASE("activations") {
  Tape<double> tape(false);
  auto l = leaky_relu(tape, Tensor<double>({2}, {5.0, -2.0}));
  CHECK(l.values()[0] == 5.0);
  CHECK(l.values()[1] == doctest::Approx(-0.02).epsilon(1e-12));
  CHECK(sigmoid(tape, Tensor<double>::scalar(0.0)).item() == 0.5);
  auto big = sigmoid(tape, Tensor<double>({2}, {1e6, -1e6}));
  CHECK(big.values()[0] < 1.0);
  CHECK(big.values()[1] > 0.0);
  Tape<float> tf(false);
  auto bigf = sigmoid(tf, Tensor<float>({2}, {1e30f, -1e30f}));
  CHECK(bigf.values()[0] < 1.0f);
  CHECK(std::isfinite(bigf.values()[1]));
  CHECK(relu(tape, Tensor<double>({2}, {-1.0, 2.0})).values()[0] == 0.0);
}

TEST_CASE("derivative conventions at zero") {
  Tape<double> tape;
  Tensor<double> x({1}, {0.0}, true);
  backward(sum(tape, leaky_relu(tape, x)), tape);
  CHECK(x.grad()[0] == doctest::Approx(kDefaultLeakySlope));
  Tape<double> t2;
  x.zero_grad();
  backward(sum(t2, relu(t2, x)), t2);
  CHECK(x.grad()[0] == 0.0);
}

TEST_CASE("channel statistics and broadcasting") {
  Tape<float> tape(false);
  auto x = Tensor<float>({1, 2, 1, 2}, {1, 4, 3, 2});
  auto g = global_avg_pool(tape, x);
  CHECK(vals(g) == std::vector<float>{2.5f, 2.5f});
  auto am = channel_avg_max(tape, x);
  CHECK(vals(am) == std::vector<float>{2, 3, 3, 4});
  auto sc = scale_channels(tape, x, Tensor<float>({1, 2, 1, 1}, {2, 0}));
  CHECK(vals(sc) == std::vector<float>{2, 8, 0, 0});
  auto ss = scale_spatial(tape, x, Tensor<float>({1, 1, 1, 2}, {1, -1}));
  CHECK(vals(ss) == std::vector<float>{1, -4, 3, -2});
  const std::size_t idx[] = {1};
  CHECK(vals(select_channels(tape, x, idx)) == std::vector<float>{3, 2});
  const std::size_t bad[] = {2};
  CHECK_THROWS(select_channels(tape, x, bad));
}

TEST_CASE("repeated ops are bit-identical") {
  Rng rng(5);
  auto x = testing::random_tensor<float>({2, 4, 8, 8}, rng, -1, 1, false);
  auto w = testing::random_tensor<float>({6, 4, 3, 3}, rng, -1, 1, false);
  auto b = testing::random_tensor<float>({6}, rng, -1, 1, false);
  Tape<float> tape(false);
  CHECK(vals(conv2d(tape, x, w, b, 1)) == vals(conv2d(tape, x, w, b, 1)));
}

TEST_CASE("every op matches finite differences in double") {
  for (const auto& row : testing::run_op_suite<double>(3, 101)) {
    INFO(row.name << " worst " << row.report.worst);
    CHECK(row.report.max_rel < 1e-4);
  }
}

TEST_CASE("every op matches finite differences in float") {
  for (const auto& row : testing::run_op_suite<float>(3, 202)) {
    INFO(row.name << " worst " << row.report.worst);
    CHECK(row.report.max_rel < 1e-3);
  }
}

}  // TEST_SUITE

namespace {

// Direct loops over the definition, used as an independent oracle.
std::vector<double> naive_conv(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>& b,
                               std::size_t pad, std::size_t stride, bool depthwise) {
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::size_t k = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const std::size_t oh = (h + 2 * pad - kh) / stride + 1, ow = (wd + 2 * pad - kw) / stride + 1;
  std::vector<double> out(n * k * oh * ow);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t o = 0; o < k; ++o) {
      for (std::size_t i = 0; i < oh; ++i) {
        for (std::size_t j = 0; j < ow; ++j) {
          double acc = b.values()[o];
          for (std::size_t ci = 0; ci < c; ++ci) {
            if (depthwise && ci != o) continue;
            const std::size_t wc = depthwise ? 0 : ci;
            for (std::size_t u = 0; u < kh; ++u) {
              for (std::size_t v = 0; v < kw; ++v) {
                const long yi = static_cast<long>(i * stride + u) - static_cast<long>(pad);
                const long xj = static_cast<long>(j * stride + v) - static_cast<long>(pad);
                if (yi < 0 || xj < 0 || yi >= static_cast<long>(h) || xj >= static_cast<long>(wd)) continue;
                acc += x.values()[((s * c + ci) * h + static_cast<std::size_t>(yi)) * wd + static_cast<std::size_t>(xj)] *
                       w.values()[((o * (depthwise ? 1 : c) + wc) * kh + u) * kw + v];
              }
            }
          }
          out[((s * k + o) * oh + i) * ow + j] = acc;
        }
      }
    }
  }
  return out;
}

void check_close(const Tensor<double>& got, const std::vector<double>& want) {
  REQUIRE(got.size() == want.size());
  for (std::size_t i = 0; i < want.size(); ++i) CHECK(got.values()[i] == doctest::Approx(want[i]).epsilon(1e-12));
}

}  // namespace

TEST_SUITE("ops") {

TEST_CASE("convolutions match direct loops") {
  Rng rng(21);
  Tape<double> tape(false);
  struct Geo {
    std::size_t n, c, k, h, w, kh, kw, pad, stride;
  };
  for (const Geo& g : {Geo{2, 3, 4, 5, 7, 3, 3, 1, 1}, Geo{1, 2, 3, 9, 6, 7, 7, 3, 2}, Geo{2, 5, 2, 6, 6, 1, 1, 0, 1},
                       Geo{1, 3, 2, 8, 5, 3, 5, 2, 1}, Geo{1, 1, 1, 4, 4, 3, 3, 0, 1}}) {
    auto x = testing::random_tensor<double>({g.n, g.c, g.h, g.w}, rng, -1, 1, false);
    auto w = testing::random_tensor<double>({g.k, g.c, g.kh, g.kw}, rng, -1, 1, false);
    auto b = testing::random_tensor<double>({g.k}, rng, -1, 1, false);
    check_close(conv2d(tape, x, w, b, g.pad, g.stride), naive_conv(x, w, b, g.pad, g.stride, false));
    auto wd = testing::random_tensor<double>({g.c, 1, 3, 3}, rng, -1, 1, false);
    auto bd = testing::random_tensor<double>({g.c}, rng, -1, 1, false);
    check_close(depthwise_conv2d(tape, x, wd, bd, 1), naive_conv(x, wd, bd, 1, 1, true));
  }
}

TEST_CASE("bilinear upsample matches half-pixel interpolation") {
  Rng rng(22);
  Tape<double> tape(false);
  const std::size_t h = 3, w = 5;
  auto x = testing::random_tensor<double>({1, 1, h, w}, rng, -1, 1, false);
  auto y = bilinear_upsample2(tape, x);
  auto at = [&](long i, long j) {
    i = std::clamp<long>(i, 0, h - 1);
    j = std::clamp<long>(j, 0, w - 1);
    return x.values()[static_cast<std::size_t>(i) * w + static_cast<std::size_t>(j)];
  };
  for (std::size_t i = 0; i < 2 * h; ++i) {
    for (std::size_t j = 0; j < 2 * w; ++j) {
      const double si = std::max(0.0, (static_cast<double>(i) + 0.5) / 2.0 - 0.5);
      const double sj = std::max(0.0, (static_cast<double>(j) + 0.5) / 2.0 - 0.5);
      const long i0 = static_cast<long>(std::floor(si)), j0 = static_cast<long>(std::floor(sj));
      const double fi = si - static_cast<double>(i0), fj = sj - static_cast<double>(j0);
      const double want = (1 - fi) * ((1 - fj) * at(i0, j0) + fj * at(i0, j0 + 1)) +
                          fi * ((1 - fj) * at(i0 + 1, j0) + fj * at(i0 + 1, j0 + 1));
      CHECK(y.values()[i * 2 * w + j] == doctest::Approx(want).epsilon(1e-12));
    }
  }
}

}  // TEST_SUITE
