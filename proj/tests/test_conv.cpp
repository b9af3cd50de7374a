#include <random>

#include "doctest.h"

#include "atom/nn.hpp"
#include "atom/ops.hpp"
#include "testutil.hpp"

using namespace atom;
using testutil::check_gradient;
using testutil::random_tensor;
using testutil::rel_err;

TEST_CASE("1x1 identity kernel reproduces the input") {
  std::mt19937_64 rng(2);
  Tensor<double> x = random_tensor(rng, {5, 4, 1});
  Tensor<double> k({1, 1, 1, 1}, {1.0});
  auto y = conv2d(Var<double>::constant(x), Var<double>::constant(k), 1, 0);
  CHECK(rel_err(y.value(), x) == 0.0);
}

TEST_CASE("hand-summed 2x2 convolution") {
  Tensor<double> x({2, 2, 1}, {1, 2, 3, 4});
  Tensor<double> k = Tensor<double>::full({2, 2, 1, 1}, 1.0);
  auto y = conv2d(Var<double>::constant(x), Var<double>::constant(k), 1, 0);
  CHECK(y.shape() == std::vector<int>{1, 1, 1});
  CHECK(y.value()[0] == doctest::Approx(10.0));
}

TEST_CASE("output size formula and kernel bounds") {
  std::mt19937_64 rng(3);
  // H' = floor((H + 2p - k) / s) + 1
  auto x = Var<double>::constant(random_tensor(rng, {7, 9, 2}));
  auto w = Var<double>::constant(random_tensor(rng, {3, 3, 2, 4}));
  auto y = conv2d(x, w, 2, 1);
  CHECK(y.shape()[0] == (7 + 2 - 3) / 2 + 1);
  CHECK(y.shape()[1] == (9 + 2 - 3) / 2 + 1);
  CHECK(y.shape()[2] == 4);

  auto small = Var<double>::constant(random_tensor(rng, {2, 2, 2}));
  CHECK_THROWS_AS(conv2d(small, w, 1, 0), Error);
}

TEST_CASE("convolution gradients match finite differences") {
  std::mt19937_64 rng(4);
  struct Case {
    std::vector<int> xs, ws;
    int stride;
    Pad pad;
  };
  const std::vector<Case> cases = {
      {{5, 5, 2}, {3, 3, 2, 3}, 1, Pad::uniform(1)},
      {{6, 5, 3}, {2, 2, 3, 2}, 1, Pad::same(2, 2)},
      {{7, 7, 2}, {3, 3, 2, 2}, 2, Pad::uniform(1)},
      {{2, 6, 6, 2}, {4, 4, 2, 1}, 1, Pad::same(4, 4)},  // batched
      {{5, 5, 1}, {1, 1, 1, 4}, 1, Pad::uniform(0)},
  };
  for (const auto& c : cases) {
    check_gradient(
        [&](const std::vector<Var<double>>& v) {
          return conv2d(v[0], v[1], c.stride, c.pad);
        },
        {random_tensor(rng, c.xs), random_tensor(rng, c.ws)}, 1e-5);
  }
}

TEST_CASE("modulate examples") {
  std::mt19937_64 rng(5);
  Tensor<double> z = random_tensor(rng, {3, 3, 4});
  auto zv = Var<double>::constant(z);

  auto ones = Var<double>::constant(Tensor<double>::full({4}, 1.0));
  CHECK(rel_err(modulate(zv, ones).value(), z) == 0.0);

  auto zeros = Var<double>::constant(Tensor<double>({1, 1, 4}));
  auto out0 = modulate(zv, zeros);
  for (int64_t i = 0; i < out0.size(); ++i) CHECK(out0.value()[i] == 0.0);

  auto twos = Var<double>::constant(Tensor<double>::full({4}, 2.0));
  auto out2 = modulate(zv, twos);
  for (int64_t i = 0; i < out2.size(); ++i) {
    CHECK(out2.value()[i] == doctest::Approx(2.0 * z[i]));
  }

  auto bad = Var<double>::constant(Tensor<double>({3}));
  CHECK_THROWS_AS(modulate(zv, bad), Error);
}

TEST_CASE("batchnorm eval is identity with unit running stats") {
  BatchNorm<double> bn(3);
  std::mt19937_64 rng(6);
  Tensor<double> x = random_tensor(rng, {4, 4, 3});
  auto y = bn.forward(Var<double>::constant(x), /*training=*/false);
  // Identity up to the epsilon guard inside 1/sqrt(var + eps).
  CHECK(rel_err(y.value(), x) < 1e-4);
}

TEST_CASE("batchnorm train on a constant batch returns the shift") {
  BatchNorm<double> bn(2);
  std::mt19937_64 rng(7);
  Tensor<double> shift = random_tensor(rng, {2});
  bn.shift = Var<double>::leaf(shift, true);
  Tensor<double> x({5, 2});
  for (int i = 0; i < 5; ++i) {
    x.at(i, 0) = 3.7;
    x.at(i, 1) = -1.2;
  }
  auto y = bn.forward(Var<double>::constant(x), /*training=*/true);
  for (int i = 0; i < 5; ++i) {
    CHECK(y.value().at(i, 0) == doctest::Approx(shift[0]).epsilon(1e-6));
    CHECK(y.value().at(i, 1) == doctest::Approx(shift[1]).epsilon(1e-6));
  }
}

TEST_CASE("batchnorm eval mode is the expected affine map") {
  BatchNorm<double> bn(2);
  std::mt19937_64 rng(8);
  bn.running_mean = Tensor<double>({2}, {0.5, -0.25});
  bn.running_var = Tensor<double>({2}, {4.0, 0.25});
  bn.scale = Var<double>::leaf(Tensor<double>({2}, {2.0, 3.0}), true);
  bn.shift = Var<double>::leaf(Tensor<double>({2}, {1.0, -1.0}), true);
  Tensor<double> x = random_tensor(rng, {6, 2});
  auto y = bn.forward(Var<double>::constant(x), false);
  for (int i = 0; i < 6; ++i) {
    for (int c = 0; c < 2; ++c) {
      const double a = (c == 0 ? 2.0 : 3.0) /
                       std::sqrt(bn.running_var[c] + bn.epsilon);
      const double b = (c == 0 ? 1.0 : -1.0) - bn.running_mean[c] * a;
      CHECK(y.value().at(i, c) == doctest::Approx(a * x.at(i, c) + b));
    }
  }
}

TEST_CASE("batchnorm train-mode gradients match finite differences") {
  std::mt19937_64 rng(9);
  Tensor<double> x = random_tensor(rng, {6, 3});
  Tensor<double> scale = random_tensor(rng, {3}, 0.5, 1.5);
  Tensor<double> shift = random_tensor(rng, {3});
  check_gradient(
      [](const std::vector<Var<double>>& v) {
        BatchNorm<double> bn(3);
        bn.scale = v[1];
        bn.shift = v[2];
        return bn.forward(v[0], true);
      },
      {x, scale, shift}, 1e-5);
}

TEST_CASE("batchnorm channel mismatch is an error") {
  BatchNorm<double> bn(4);
  auto x = Var<double>::constant(Tensor<double>({2, 3}));
  CHECK_THROWS_AS(bn.forward(x, true), Error);
}

TEST_CASE("batchnorm updates running stats in train mode only") {
  BatchNorm<double> bn(1);
  std::mt19937_64 rng(10);
  Tensor<double> x = random_tensor(rng, {8, 1}, 1.0, 2.0);
  const double before = bn.running_mean[0];
  bn.forward(Var<double>::constant(x), false);
  CHECK(bn.running_mean[0] == before);
  bn.forward(Var<double>::constant(x), true);
  CHECK(bn.running_mean[0] != before);
}
