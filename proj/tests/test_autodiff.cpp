#include <random>

#include "doctest.h"

#include "atom/ops.hpp"
#include "testutil.hpp"

using namespace atom;
using testutil::check_gradient;
using testutil::random_tensor;
using testutil::rel_err;

TEST_CASE("gradient examples") {
  // s = w^T w at w = [3] -> gradient [6]
  auto w = Var<double>::leaf(Tensor<double>({1}, {3.0}), true);
  auto g = backprop(dot(w, w), {w})[0];
  CHECK(g[0] == doctest::Approx(6.0));
}

TEST_CASE("linear residual gradient equals A^T u") {
  std::mt19937_64 rng(42);
  Tensor<double> a_t = random_tensor(rng, {4, 3});
  Tensor<double> b_t = random_tensor(rng, {4, 1});
  Tensor<double> u_t = random_tensor(rng, {4, 1});
  auto a = Var<double>::constant(a_t);
  auto w = Var<double>::leaf(random_tensor(rng, {3, 1}), true);
  auto r = sub(matmul(a, w), Var<double>::constant(b_t));
  auto s = dot(flatten(r), Var<double>::constant(u_t.reshaped({4})));
  auto g = backprop(s, {w})[0];

  // Oracle: A^T u assembled by hand.
  Tensor<double> want({3, 1});
  for (int j = 0; j < 3; ++j) {
    for (int i = 0; i < 4; ++i) want.at(j, 0) += a_t.at(i, j) * u_t.at(i, 0);
  }
  CHECK(rel_err(g, want) < 1e-12);
}

TEST_CASE("detach freezes one factor") {
  auto u = Var<double>::leaf(Tensor<double>({1}, {2.0}), true);
  auto s = mul(u.detach(), u);
  auto g = backprop(sum(s), {u})[0];
  CHECK(g[0] == doctest::Approx(2.0));  // not 4

  // Ancestors of a detached branch receive zero gradient.
  auto x = Var<double>::leaf(Tensor<double>({1}, {5.0}), true);
  auto y = mul(x, x);
  auto gz = backprop(sum(mul(y.detach(), u)), {x})[0];
  CHECK(gz[0] == 0.0);
}

TEST_CASE("backprop requires a scalar root") {
  auto x = Var<double>::leaf(Tensor<double>({2}, {1, 2}), true);
  CHECK_THROWS_AS(backprop(mul(x, x), {x}), Error);
}

TEST_CASE("backprop is linear in the output seed") {
  std::mt19937_64 rng(3);
  auto x = Var<double>::leaf(random_tensor(rng, {4}), true);
  auto s1 = sum(mul(x, x));
  auto s2 = sum(pelu(x, 0.5));
  const double a = 1.7, b = -2.3;
  auto combined = add(smul(s1, a), smul(s2, b));
  auto g_combined = backprop(combined, {x})[0];
  auto g1 = backprop(s1, {x})[0];
  auto g2 = backprop(s2, {x})[0];
  Tensor<double> want({4});
  for (int i = 0; i < 4; ++i) want[i] = a * g1[i] + b * g2[i];
  CHECK(rel_err(g_combined, want) < 1e-12);
}

TEST_CASE("repeated backward passes are bit-identical") {
  std::mt19937_64 rng(9);
  auto x = Var<double>::leaf(random_tensor(rng, {3, 3}), true);
  auto w = Var<double>::leaf(random_tensor(rng, {3, 3}), true);
  auto s = sum(pelu(matmul(x, w), 0.25));
  auto g1 = backprop(s, {x, w});
  auto g2 = backprop(s, {x, w});
  for (int k = 0; k < 2; ++k) {
    for (int64_t i = 0; i < g1[k].size(); ++i) {
      CHECK(g1[static_cast<size_t>(k)][i] == g2[static_cast<size_t>(k)][i]);
    }
  }
}

TEST_CASE("pelu values and C1 smoothness") {
  auto v = [](double t, double alpha) {
    auto x = Var<double>::constant(Tensor<double>({1}, {t}));
    return pelu(x, alpha).value()[0];
  };
  CHECK(v(2.0, 0.05) == doctest::Approx(2.0));
  CHECK(v(0.0, 0.05) == doctest::Approx(0.0));
  CHECK(v(-0.05, 0.05) ==
        doctest::Approx(0.05 * (std::exp(-1.0) - 1.0)).epsilon(1e-9));
  CHECK(v(-1.0, 0.05) > -0.05);    // output > -alpha
  CHECK(v(-100.0, 0.05) >= -0.05); // saturates to -alpha in fp

  CHECK_THROWS_AS(pelu(Var<double>::constant(Tensor<double>({1})), 0.0), Error);
  CHECK_THROWS_AS(pelu(Var<double>::constant(Tensor<double>({1})), -1.0), Error);

  // Derivative approaches 1 from both sides of 0.
  auto deriv_at = [](double t, double alpha) {
    auto x = Var<double>::leaf(Tensor<double>({1}, {t}), true);
    return backprop(sum(pelu(x, alpha)), {x})[0][0];
  };
  CHECK(std::abs(deriv_at(-1e-6, 1.0) - deriv_at(1e-6, 1.0)) < 1e-5);
  // Gap shrinks linearly with epsilon for small alpha as well.
  const double gap2 = std::abs(deriv_at(-1e-3, 0.05) - deriv_at(1e-3, 0.05));
  const double gap1 = std::abs(deriv_at(-1e-5, 0.05) - deriv_at(1e-5, 0.05));
  CHECK(gap1 < gap2 / 50.0);
}

TEST_CASE("finite differences validate every basic primitive") {
  std::mt19937_64 rng(11);
  const double tol = 1e-5;

  check_gradient([](const std::vector<Var<double>>& v) { return add(v[0], v[1]); },
                 {random_tensor(rng, {3, 2}), random_tensor(rng, {3, 2})}, tol);
  check_gradient([](const std::vector<Var<double>>& v) { return sub(v[0], v[1]); },
                 {random_tensor(rng, {4}), random_tensor(rng, {4})}, tol);
  check_gradient([](const std::vector<Var<double>>& v) { return mul(v[0], v[1]); },
                 {random_tensor(rng, {5}), random_tensor(rng, {5})}, tol);
  check_gradient([](const std::vector<Var<double>>& v) { return smul(v[0], 2.5); },
                 {random_tensor(rng, {5})}, tol);
  check_gradient([](const std::vector<Var<double>>& v) { return neg(v[0]); },
                 {random_tensor(rng, {5})}, tol);
  check_gradient([](const std::vector<Var<double>>& v) { return sum(v[0]); },
                 {random_tensor(rng, {2, 3})}, tol);
  check_gradient(
      [](const std::vector<Var<double>>& v) { return matmul(v[0], v[1]); },
      {random_tensor(rng, {3, 4}), random_tensor(rng, {4, 2})}, tol);
  check_gradient([](const std::vector<Var<double>>& v) { return transpose(v[0]); },
                 {random_tensor(rng, {3, 4})}, tol);
  check_gradient(
      [](const std::vector<Var<double>>& v) { return reshape(v[0], {6}); },
      {random_tensor(rng, {2, 3})}, tol);
  check_gradient(
      [](const std::vector<Var<double>>& v) {
        return concat1d<double>({flatten(v[0]), flatten(v[1])});
      },
      {random_tensor(rng, {2, 2}), random_tensor(rng, {3})}, tol);
  check_gradient(
      [](const std::vector<Var<double>>& v) { return slice1d(v[0], 1, 3); },
      {random_tensor(rng, {6})}, tol);
  check_gradient(
      [](const std::vector<Var<double>>& v) { return embed1d(v[0], 2, 7); },
      {random_tensor(rng, {3})}, tol);
  check_gradient(
      [](const std::vector<Var<double>>& v) {
        return stack0<double>({v[0], v[1]});
      },
      {random_tensor(rng, {2, 3}), random_tensor(rng, {2, 3})}, tol);
  check_gradient(
      [](const std::vector<Var<double>>& v) { return slice0(v[0], 1); },
      {random_tensor(rng, {3, 2, 2})}, tol);
  check_gradient(
      [](const std::vector<Var<double>>& v) { return sum_channelwise(v[0]); },
      {random_tensor(rng, {3, 2, 4})}, tol);
  check_gradient(
      [](const std::vector<Var<double>>& v) {
        return broadcast_channelwise(v[0], {2, 3, 4});
      },
      {random_tensor(rng, {4})}, tol);
  check_gradient(
      [](const std::vector<Var<double>>& v) {
        return broadcast_fill(sum(v[0]), {3, 3});
      },
      {random_tensor(rng, {2})}, tol);
  // Nonlinearities away from their kinks.
  check_gradient([](const std::vector<Var<double>>& v) { return relu(v[0]); },
                 {random_tensor(rng, {8}, 0.1, 1.0)}, tol);
  check_gradient([](const std::vector<Var<double>>& v) { return relu(v[0]); },
                 {random_tensor(rng, {8}, -1.0, -0.1)}, tol);
  check_gradient(
      [](const std::vector<Var<double>>& v) { return pelu(v[0], 0.25); },
      {random_tensor(rng, {8}, -2.0, -0.01)}, tol);
  check_gradient(
      [](const std::vector<Var<double>>& v) { return pelu(v[0], 0.25); },
      {random_tensor(rng, {8}, 0.01, 2.0)}, tol);
  check_gradient([](const std::vector<Var<double>>& v) { return rsqrt(v[0]); },
                 {random_tensor(rng, {6}, 0.5, 2.0)}, tol);
  check_gradient(
      [](const std::vector<Var<double>>& v) { return modulate(v[0], v[1]); },
      {random_tensor(rng, {3, 3, 4}), random_tensor(rng, {4})}, tol);
}

TEST_CASE("two-layer net gradient matches finite differences") {
  std::mt19937_64 rng(21);
  Tensor<double> x = random_tensor(rng, {6, 6, 3});
  Tensor<double> y = random_tensor(rng, {6, 6, 1});
  Tensor<double> w1_t = random_tensor(rng, {1, 1, 3, 4}, -0.5, 0.5);
  Tensor<double> w2_t = random_tensor(rng, {4, 4, 4, 1}, -0.3, 0.3);

  check_gradient(
      [&](const std::vector<Var<double>>& v) {
        auto z1 = conv2d(Var<double>::constant(x), v[0], 1, Pad{0, 0, 0, 0});
        auto z2 = conv2d(z1, v[1], 1, Pad::same(4, 4));
        auto f = pelu(z2, 0.05);
        auto r = sub(f, Var<double>::constant(y));
        return sum(mul(r, r));
      },
      {w1_t, w2_t}, 1e-5);
}

TEST_CASE("double backprop: BackProp(h^T p, u) equals J p") {
  // Small net r(w) = pelu(A w, alpha); Jacobian assembled row by row.
  std::mt19937_64 rng(33);
  const int m = 5, n = 3;
  Tensor<double> a_t = random_tensor(rng, {m, n});
  Tensor<double> w_t = random_tensor(rng, {n, 1});
  Tensor<double> p_t = random_tensor(rng, {n});

  auto build_r = [&](const Var<double>& w) {
    return flatten(pelu(matmul(Var<double>::constant(a_t), w), 0.3));
  };

  // Explicit Jacobian: one backprop per residual component.
  Tensor<double> jac({m, n});
  {
    auto w = Var<double>::leaf(w_t, true);
    auto r = build_r(w);
    for (int i = 0; i < m; ++i) {
      Tensor<double> e({m});
      e[i] = 1.0;
      auto row = backprop(dot(r, Var<double>::constant(e)), {w})[0];
      for (int j = 0; j < n; ++j) jac.at(i, j) = row[j];
    }
  }
  Tensor<double> want({m});
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) want[i] += jac.at(i, j) * p_t[j];
  }

  auto w = Var<double>::leaf(w_t, true);
  auto r = build_r(w);
  auto u = Var<double>::leaf(r.value(), true);
  auto h = backprop_vars(dot(r, u), {w}, /*create_graph=*/true)[0];
  auto q1 = backprop(
      dot(flatten(h), Var<double>::constant(p_t)), {u})[0];
  CHECK(rel_err(q1, want) < 1e-10);
}

