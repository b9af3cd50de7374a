#include "doctest.h"

#include "atom/ops.hpp"
#include "testutil.hpp"

using namespace atom;

TEST_CASE("tensor construction and invariants") {
  Tensor<double> t({2, 3});
  CHECK(t.size() == 6);
  CHECK(t.rank() == 2);
  for (int64_t i = 0; i < t.size(); ++i) CHECK(t[i] == 0.0);

  CHECK_THROWS_AS(Tensor<double>({2, 2}, {1.0, 2.0, 3.0}), Error);
  CHECK_THROWS_AS(Tensor<double>({2, 3}).reshaped({4, 2}), Error);

  Tensor<double> r = Tensor<double>({2, 3}, {1, 2, 3, 4, 5, 6}).reshaped({3, 2});
  CHECK(r.at(2, 1) == 6.0);

  Tensor<float> f = r.cast<float>();
  CHECK(f.shape() == std::vector<int>{3, 2});
  CHECK(f[0] == 1.0f);
}

TEST_CASE("add componentwise and shape errors") {
  auto a = Var<double>::constant(Tensor<double>({2}, {1, 2}));
  auto b = Var<double>::constant(Tensor<double>({2}, {3, 4}));
  auto c = add(a, b);
  CHECK(c.value()[0] == 4.0);
  CHECK(c.value()[1] == 6.0);

  auto bad = Var<double>::constant(Tensor<double>({3}));
  try {
    add(a, bad);
    FAIL("expected shape mismatch error");
  } catch (const Error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2]") != std::string::npos);
    CHECK(msg.find("[3]") != std::string::npos);
  }
}

TEST_CASE("matmul identity") {
  Tensor<double> eye({3, 3});
  for (int i = 0; i < 3; ++i) eye.at(i, i) = 1.0;
  std::mt19937_64 rng(7);
  Tensor<double> a = testutil::random_tensor(rng, {3, 5});
  auto out = matmul(Var<double>::constant(eye), Var<double>::constant(a));
  CHECK(testutil::rel_err(out.value(), a) == 0.0);
}

TEST_CASE("grad of sum(x*x)") {
  auto x = Var<double>::leaf(Tensor<double>({3}, {1, 2, 3}), true);
  auto s = sum(mul(x, x));
  auto g = backprop(s, {x})[0];
  CHECK(g[0] == doctest::Approx(2.0));
  CHECK(g[1] == doctest::Approx(4.0));
  CHECK(g[2] == doctest::Approx(6.0));
}

TEST_CASE("non-finite results are an error state") {
  auto big = Var<double>::constant(Tensor<double>({1}, {1e308}));
  CHECK_THROWS_AS(mul(big, big), Error);
  CHECK_THROWS_AS(Var<double>::constant(Tensor<double>(
                      {1}, {std::numeric_limits<double>::quiet_NaN()})),
                  Error);
}

TEST_CASE("concat/slice round trip and ordering") {
  auto a = Var<double>::constant(Tensor<double>({2}, {1, 2}));
  auto b = Var<double>::constant(Tensor<double>({3}, {3, 4, 5}));
  auto c = concat1d<double>({a, b});
  CHECK(c.size() == 5);
  CHECK(c.value()[4] == 5.0);
  auto s = slice1d(c, 2, 3);
  CHECK(s.value()[0] == 3.0);
  CHECK_THROWS_AS(slice1d(c, 4, 3), Error);
}

TEST_CASE("stack0/slice0") {
  auto a = Var<double>::constant(Tensor<double>({2, 2}, {1, 2, 3, 4}));
  auto b = Var<double>::constant(Tensor<double>({2, 2}, {5, 6, 7, 8}));
  auto s = stack0<double>({a, b});
  CHECK(s.shape() == std::vector<int>{2, 2, 2});
  auto back = slice0(s, 1);
  CHECK(testutil::rel_err(back.value(), b.value()) == 0.0);
}
