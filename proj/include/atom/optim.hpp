#ifndef ATOM_OPTIM_HPP_
#define ATOM_OPTIM_HPP_

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "atom/ops.hpp"

namespace atom {

// Nonlinear least-squares problem in residual form: evaluate() builds the
// residual vector r(w) as a recorded graph over the current weight leaves,
// and the loss is ||r(w)||^2.
template <typename T>
struct ResidualProblem {
  std::vector<Var<T>> weights;
  std::function<Var<T>(const std::vector<Var<T>>&)> evaluate;
};

struct TracePoint {
  uint64_t backprop_calls;
  double loss;
};
using LossTrace = std::vector<TracePoint>;

struct GncgOptions {
  int n_gn = 1;
  int n_cg = 5;
};

namespace detail {

template <typename T>
std::vector<T> flatten_values(const std::vector<Var<T>>& vars) {
  std::vector<T> flat;
  int64_t total = 0;
  for (const auto& v : vars) total += v.size();
  flat.reserve(static_cast<size_t>(total));
  for (const auto& v : vars) {
    const Tensor<T>& t = v.value();
    flat.insert(flat.end(), t.vec().begin(), t.vec().end());
  }
  return flat;
}

template <typename T>
std::vector<Var<T>> scatter_values(const std::vector<T>& flat,
                                   const std::vector<Var<T>>& like,
                                   bool requires_grad) {
  std::vector<Var<T>> out;
  out.reserve(like.size());
  size_t offset = 0;
  for (const auto& v : like) {
    std::vector<T> chunk(flat.begin() + offset,
                         flat.begin() + offset + v.size());
    out.push_back(Var<T>::leaf(Tensor<T>(v.shape(), std::move(chunk)),
                               requires_grad));
    offset += static_cast<size_t>(v.size());
  }
  return out;
}

template <typename T>
T vdot(const std::vector<T>& a, const std::vector<T>& b) {
  T acc = 0;
  for (size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

template <typename T>
void vaxpy(std::vector<T>& y, T a, const std::vector<T>& x) {
  for (size_t i = 0; i < y.size(); ++i) y[i] += a * x[i];
}

template <typename T>
Var<T> flat_concat(const std::vector<Var<T>>& vars) {
  if (vars.size() == 1 && vars[0].value().rank() == 1) return vars[0];
  std::vector<Var<T>> parts;
  parts.reserve(vars.size());
  for (const auto& v : vars) parts.push_back(flatten(v));
  return concat1d(parts);
}

template <typename T>
double loss_of(const Var<T>& r) {
  double acc = 0;
  for (int64_t i = 0; i < r.size(); ++i) {
    const double v = r.value()[i];
    acc += v * v;
  }
  return acc;
}

}  // namespace detail

// One evaluation of the squared-norm loss without touching the call budget.
template <typename T>
double residual_loss(ResidualProblem<T>& problem) {
  NoGradGuard ng;
  return detail::loss_of(problem.evaluate(problem.weights));
}

// Gauss-Newton outer iterations with Conjugate-Gradient inner iterations,
// implemented purely through BackProp calls:
//   h  = BackProp(r^T u, w)   once per outer iteration (u = r, constant)
//   q1 = BackProp(h^T p, u)   = J p          (p constant)
//   q2 = BackProp(r^T q1, w)  = J^T J p      (q1 constant)
// The step length alpha and direction mixing beta are computed, never
// configured. Guards: vanishing gradient (rho1) or curvature end the inner
// loop early with the current increment.
template <typename T>
LossTrace gauss_newton_cg(ResidualProblem<T>& problem,
                          const GncgOptions& opt) {
  check(opt.n_gn >= 1 && opt.n_cg >= 1,
        "gauss_newton_cg: iteration counts must be >= 1");
  LossTrace trace;
  Tape& tape = Tape::current();

  for (int i = 0; i < opt.n_gn; ++i) {
    Var<T> r;
    try {
      r = problem.evaluate(problem.weights);
    } catch (const Error& e) {
      fail("gauss_newton_cg: GN iteration ", i + 1, ": ", e.what());
    }
    check(r.value().rank() == 1, "residual must be a vector, got shape ",
          shape_str(r.shape()));
    const double loss = detail::loss_of(r);
    check(std::isfinite(loss), "gauss_newton_cg: non-finite loss at GN iteration ",
          i + 1);
    trace.push_back({tape.backprop_calls(), loss});

    // u = r treated as an independent leaf; h is recorded so that
    // BackProp(h^T p, u) can differentiate through it.
    Var<T> u = Var<T>::leaf(r.value(), /*requires_grad=*/true);
    std::vector<Var<T>> h =
        backprop_vars(dot(r, u), problem.weights, /*create_graph=*/true);
    Var<T> hcat = detail::flat_concat(h);

    std::vector<T> g = detail::flatten_values(h);
    for (T& v : g) v = -v;
    std::vector<T> p(g.size(), T(0));
    std::vector<T> dw(g.size(), T(0));
    T rho1 = 1;

    for (int n = 0; n < opt.n_cg; ++n) {
      const T rho2 = rho1;
      rho1 = detail::vdot(g, g);
      if (!(rho1 > T(1e-12))) break;
      const T beta = rho1 / rho2;
      for (size_t j = 0; j < p.size(); ++j) p[j] = g[j] + beta * p[j];

      Var<T> pc = Var<T>::constant(
          Tensor<T>({static_cast<int>(p.size())}, p));
      Tensor<T> q1 = backprop(dot(hcat, pc), {u})[0];
      Var<T> q1c = Var<T>::constant(q1);
      std::vector<Tensor<T>> q2t = backprop(dot(r, q1c), problem.weights);
      std::vector<T> q2;
      q2.reserve(p.size());
      for (const auto& t : q2t) q2.insert(q2.end(), t.vec().begin(), t.vec().end());

      const T curv = detail::vdot(q2, p);
      if (!(curv > T(1e-12))) break;
      const T alpha = rho1 / curv;
      detail::vaxpy(g, -alpha, q2);
      detail::vaxpy(dw, alpha, p);
    }

    std::vector<T> w_new = detail::flatten_values(problem.weights);
    for (size_t j = 0; j < w_new.size(); ++j) w_new[j] += dw[j];
    problem.weights = detail::scatter_values(w_new, problem.weights, true);
  }

  trace.push_back({tape.backprop_calls(), residual_loss(problem)});
  return trace;
}

// J^T J p evaluated with the same double-backprop sequence the optimizer
// uses; p is flat over the problem weights.
template <typename T>
std::vector<T> jtj_apply(ResidualProblem<T>& problem, const std::vector<T>& p) {
  Var<T> r = problem.evaluate(problem.weights);
  int64_t total = 0;
  for (const auto& w : problem.weights) total += w.size();
  check(static_cast<int64_t>(p.size()) == total,
        "jtj_apply: direction has length ", p.size(), ", weights have ",
        total);
  Var<T> u = Var<T>::leaf(r.value(), true);
  std::vector<Var<T>> h =
      backprop_vars(dot(r, u), problem.weights, /*create_graph=*/true);
  Var<T> hcat = detail::flat_concat(h);
  Var<T> pc = Var<T>::constant(Tensor<T>({static_cast<int>(p.size())}, p));
  Tensor<T> q1 = backprop(dot(hcat, pc), {u})[0];
  Var<T> q1c = Var<T>::constant(q1);
  std::vector<Tensor<T>> q2t = backprop(dot(r, q1c), problem.weights);
  std::vector<T> q2;
  q2.reserve(p.size());
  for (const auto& t : q2t) q2.insert(q2.end(), t.vec().begin(), t.vec().end());
  return q2;
}

// Plain gradient descent with momentum on the same residual problem; one
// BackProp call per step so loss traces are comparable with the
// Gauss-Newton optimizer under a shared call budget.
template <typename T>
LossTrace gradient_descent(ResidualProblem<T>& problem, int steps, T lr,
                           T momentum) {
  check(lr > T(0), "gradient_descent: lr must be positive");
  LossTrace trace;
  Tape& tape = Tape::current();
  std::vector<T> velocity;
  double initial_loss = -1;

  for (int step = 0; step < steps; ++step) {
    Var<T> r = problem.evaluate(problem.weights);
    const double loss = detail::loss_of(r);
    check(std::isfinite(loss), "gradient_descent: non-finite loss at step ",
          step);
    if (step == 0) initial_loss = loss;
    if (loss > 1e3 * initial_loss && loss > 1e-12) {
      fail("gradient_descent: diverged at step ", step, " (loss ", loss,
           " vs initial ", initial_loss, ")");
    }
    trace.push_back({tape.backprop_calls(), loss});

    std::vector<Tensor<T>> grads = backprop(dot(r, r), problem.weights);
    std::vector<T> g;
    for (const auto& t : grads) g.insert(g.end(), t.vec().begin(), t.vec().end());
    if (velocity.empty()) velocity.assign(g.size(), T(0));
    for (size_t j = 0; j < g.size(); ++j) {
      velocity[j] = momentum * velocity[j] + g[j];
    }
    std::vector<T> w = detail::flatten_values(problem.weights);
    detail::vaxpy(w, -lr, velocity);
    problem.weights = detail::scatter_values(w, problem.weights, true);
  }
  trace.push_back({tape.backprop_calls(), residual_loss(problem)});
  return trace;
}

// ---------------------------------------------------------------------------
// ADAM (for offline training)
// ---------------------------------------------------------------------------

template <typename T>
struct AdamState {
  std::vector<T> m, v;
  int64_t t = 0;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Standard first/second-moment update with bias correction, on flat
// parameter/gradient vectors.
template <typename T>
void adam_step(std::vector<T>& params, const std::vector<T>& grads,
               AdamState<T>& state, const AdamConfig& cfg) {
  check(params.size() == grads.size(), "adam: param/grad size mismatch ",
        params.size(), " vs ", grads.size());
  if (state.m.empty()) {
    state.m.assign(params.size(), T(0));
    state.v.assign(params.size(), T(0));
  }
  check(state.m.size() == params.size(), "adam: state size mismatch ",
        state.m.size(), " vs ", params.size());
  state.t += 1;
  const double b1t = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double b2t = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (size_t i = 0; i < params.size(); ++i) {
    state.m[i] = static_cast<T>(cfg.beta1 * state.m[i] +
                                (1.0 - cfg.beta1) * grads[i]);
    state.v[i] = static_cast<T>(cfg.beta2 * state.v[i] +
                                (1.0 - cfg.beta2) * grads[i] * grads[i]);
    const double mhat = state.m[i] / b1t;
    const double vhat = state.v[i] / b2t;
    params[i] -= static_cast<T>(cfg.lr * mhat /
                                (std::sqrt(vhat) + cfg.epsilon));
  }
}

}  // namespace atom

#endif  // ATOM_OPTIM_HPP_
