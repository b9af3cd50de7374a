#ifndef ATOM_TESTS_TESTUTIL_HPP_
#define ATOM_TESTS_TESTUTIL_HPP_

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "atom/ops.hpp"

namespace testutil {

using atom::Tensor;
using atom::TensorD;
using atom::Var;

inline TensorD random_tensor(std::mt19937_64& rng, std::vector<int> shape,
                             double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  TensorD t(std::move(shape));
  for (int64_t i = 0; i < t.size(); ++i) t[i] = dist(rng);
  return t;
}

inline double l2(const TensorD& t) {
  double s = 0;
  for (int64_t i = 0; i < t.size(); ++i) s += t[i] * t[i];
  return std::sqrt(s);
}

inline double rel_err(const TensorD& got, const TensorD& want) {
  REQUIRE(got.same_shape(want));
  TensorD diff(got.shape());
  for (int64_t i = 0; i < got.size(); ++i) diff[i] = got[i] - want[i];
  return l2(diff) / std::max(l2(want), 1e-12);
}

// Central finite differences of a scalar function of one flat tensor.
inline TensorD finite_diff(const std::function<double(const TensorD&)>& f,
                           TensorD x, double step = 1e-6) {
  TensorD g(x.shape());
  for (int64_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + step;
    const double fp = f(x);
    x[i] = orig - step;
    const double fm = f(x);
    x[i] = orig;
    g[i] = (fp - fm) / (2 * step);
  }
  return g;
}

// Checks the autodiff gradient of a random projection of fn's output
// against central finite differences, for every input.
inline void check_gradient(
    const std::function<Var<double>(const std::vector<Var<double>>&)>& fn,
    const std::vector<TensorD>& inputs, double tol = 1e-5,
    uint64_t seed = 1234, double step = 1e-6) {
  std::mt19937_64 rng(seed);

  auto make_vars = [&](const std::vector<TensorD>& ins) {
    std::vector<Var<double>> vars;
    for (const auto& t : ins) vars.push_back(Var<double>::leaf(t, true));
    return vars;
  };

  std::vector<Var<double>> vars = make_vars(inputs);
  Var<double> out = fn(vars);
  TensorD proj = random_tensor(rng, out.value().shape(), -1.0, 1.0);

  auto scalar_out = [&](const std::vector<TensorD>& ins) {
    atom::NoGradGuard ng;
    std::vector<Var<double>> vs = make_vars(ins);
    Var<double> o = fn(vs);
    double s = 0;
    for (int64_t i = 0; i < o.size(); ++i) s += o.value()[i] * proj[i];
    return s;
  };

  Var<double> s = atom::dot(atom::flatten(out),
                            Var<double>::constant(proj.reshaped(
                                {static_cast<int>(proj.size())})));
  std::vector<TensorD> grads = atom::backprop(s, vars);

  for (size_t k = 0; k < inputs.size(); ++k) {
    auto fk = [&](const TensorD& x) {
      std::vector<TensorD> ins = inputs;
      ins[k] = x;
      return scalar_out(ins);
    };
    TensorD fd = finite_diff(fk, inputs[k], step);
    const double err = rel_err(grads[k], fd);
    INFO("input " << k << " grad rel err " << err);
    CHECK(err < tol);
  }
}

}  // namespace testutil

#endif  // ATOM_TESTS_TESTUTIL_HPP_
