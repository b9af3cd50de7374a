#ifndef ATOM_AUTODIFF_HPP_
#define ATOM_AUTODIFF_HPP_

#include <algorithm>
#include <functional>
#include <memory>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "atom/common.hpp"
#include "atom/tensor.hpp"

namespace atom {

template <typename T>
class Var;

// Per-thread recording context. Nodes carry monotonically increasing
// sequence ids, so creation order is a valid topological order of the
// graph and reverse sweeps are deterministic. Graphs themselves are owned
// by the Var handles (shared_ptr DAG); the tape only hands out ids, the
// grad-recording flag, and the BackProp call counter used by the
// optimizer budget accounting.
class Tape {
 public:
  static Tape& current() {
    thread_local Tape tape;
    return tape;
  }

  uint64_t next_seq() { return ++seq_; }
  bool grad_enabled() const { return grad_enabled_; }
  void set_grad_enabled(bool on) { grad_enabled_ = on; }

  uint64_t backprop_calls() const { return backprop_calls_; }
  void count_backprop_call() { ++backprop_calls_; }
  void reset_backprop_calls() { backprop_calls_ = 0; }

 private:
  uint64_t seq_ = 0;
  bool grad_enabled_ = true;
  uint64_t backprop_calls_ = 0;
};

// Disables gradient recording for the current scope.
class NoGradGuard {
 public:
  NoGradGuard() : prev_(Tape::current().grad_enabled()) {
    Tape::current().set_grad_enabled(false);
  }
  ~NoGradGuard() { Tape::current().set_grad_enabled(prev_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

template <typename T>
struct Node {
  using BackwardFn = std::function<Var<T>(const Var<T>&)>;

  struct Edge {
    std::shared_ptr<Node> parent;
    BackwardFn backward;
    // True when the backward rule is built from recorded primitives and
    // therefore stays differentiable w.r.t. the incoming gradient. Rules
    // that compute raw tensors (prpool) are marked false and rejected in
    // graph-building backward passes.
    bool graph_safe = true;
  };

  Tensor<T> value;
  bool requires_grad = false;
  uint64_t seq = 0;
  const char* op = "leaf";
  std::vector<Edge> edges;
};

// Handle to a value on the differentiation graph. Copies share the node.
template <typename T>
class Var {
 public:
  Var() = default;

  static Var leaf(Tensor<T> value, bool requires_grad = false) {
    check(value.all_finite(), "leaf variable contains non-finite values");
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    n->requires_grad = requires_grad && Tape::current().grad_enabled();
    n->seq = Tape::current().next_seq();
    return Var(std::move(n));
  }

  static Var constant(Tensor<T> value) { return leaf(std::move(value), false); }
  static Var scalar(T v) { return constant(Tensor<T>::scalar(v)); }

  bool defined() const { return node_ != nullptr; }
  const Tensor<T>& value() const { return node_->value; }
  const std::vector<int>& shape() const { return node_->value.shape(); }
  int64_t size() const { return node_->value.size(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }

  // Same value, no history: gradients stop here.
  Var detach() const { return leaf(node_->value, false); }

  // Replaces the value of a leaf variable. Graphs recorded against the
  // old value are no longer meaningful and must be rebuilt.
  void set_value(Tensor<T> value) {
    check(node_ && node_->edges.empty(), "set_value requires a leaf variable");
    check(value.same_shape(node_->value), "set_value shape mismatch: ",
          shape_str(value.shape()), " vs ", shape_str(node_->value.shape()));
    check(value.all_finite(), "set_value: non-finite values");
    node_->value = std::move(value);
  }

  std::shared_ptr<Node<T>> node() const { return node_; }
  Node<T>* raw() const { return node_.get(); }

  explicit Var(std::shared_ptr<Node<T>> n) : node_(std::move(n)) {}

 private:
  std::shared_ptr<Node<T>> node_;
};

namespace detail {

// Registers the result of an operation. Edges reference the inputs the op
// is differentiable in; edges whose parent does not require grad are
// dropped, and in no-grad mode the node is a plain constant.
template <typename T>
Var<T> make_node(const char* op, Tensor<T> value,
                 std::vector<typename Node<T>::Edge> edges) {
  if (!value.all_finite()) fail("non-finite result in op '", op, "'");
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  n->op = op;
  n->seq = Tape::current().next_seq();
  if (Tape::current().grad_enabled()) {
    for (auto& e : edges) {
      if (e.parent && e.parent->requires_grad) {
        n->edges.push_back(std::move(e));
      }
    }
    n->requires_grad = !n->edges.empty();
  }
  return Var<T>(std::move(n));
}

}  // namespace detail

// Reverse-mode sweep from a scalar node. Returns one gradient per entry of
// `wrt` (zeros when the node is unreachable). With `create_graph` the
// returned gradients are themselves recorded functions of the graph's leaf
// variables, which is what allows Jacobian-vector products to be built out
// of two nested sweeps. Counts one BackProp call.
template <typename T>
std::vector<Var<T>> backprop_vars(const Var<T>& s,
                                  const std::vector<Var<T>>& wrt,
                                  bool create_graph = false) {
  check(s.defined() && s.size() == 1,
        "backprop requires a scalar root, got shape ",
        s.defined() ? shape_str(s.shape()) : "(undefined)");
  Tape::current().count_backprop_call();

  std::vector<Var<T>> grads(wrt.size());
  auto zero_fill = [&] {
    NoGradGuard ng;
    for (size_t i = 0; i < wrt.size(); ++i) {
      grads[i] = Var<T>::constant(Tensor<T>(wrt[i].shape()));
    }
  };
  if (!s.requires_grad()) {
    zero_fill();
    return grads;
  }

  // Creation order is topological: sweep nodes in decreasing seq.
  std::vector<Node<T>*> order;
  {
    std::unordered_set<Node<T>*> seen;
    std::vector<Node<T>*> stack{s.raw()};
    seen.insert(s.raw());
    while (!stack.empty()) {
      Node<T>* n = stack.back();
      stack.pop_back();
      order.push_back(n);
      for (const auto& e : n->edges) {
        Node<T>* p = e.parent.get();
        if (p->requires_grad && seen.insert(p).second) stack.push_back(p);
      }
    }
    std::sort(order.begin(), order.end(),
              [](Node<T>* a, Node<T>* b) { return a->seq > b->seq; });
  }

  const bool prev_mode = Tape::current().grad_enabled();
  Tape::current().set_grad_enabled(create_graph);

  std::unordered_set<Node<T>*> wanted;
  for (const auto& w : wrt) wanted.insert(w.raw());

  std::unordered_map<Node<T>*, Var<T>> grad;
  grad.emplace(s.raw(), Var<T>::constant(Tensor<T>::full(s.shape(), T(1))));

  for (Node<T>* n : order) {
    auto it = grad.find(n);
    if (it == grad.end()) continue;  // not on a path from s
    Var<T> g = it->second;
    for (const auto& e : n->edges) {
      if (create_graph && !e.graph_safe && g.requires_grad()) {
        Tape::current().set_grad_enabled(prev_mode);
        fail("op '", n->op,
             "' does not support graph-building backward (double backprop)");
      }
      Var<T> contrib = e.backward(g);
      check(contrib.value().same_shape(e.parent->value),
            "backward rule of '", n->op, "' produced shape ",
            shape_str(contrib.shape()), " for parent of shape ",
            shape_str(e.parent->value.shape()));
      Node<T>* p = e.parent.get();
      auto pit = grad.find(p);
      if (pit == grad.end()) {
        grad.emplace(p, contrib);
      } else {
        // Accumulate with a raw elementwise add; recorded as a primitive
        // so create_graph sweeps stay differentiable.
        const Tensor<T>& a = pit->second.value();
        const Tensor<T>& b = contrib.value();
        check(a.same_shape(b), "gradient accumulation shape mismatch at '",
              p->op, "': ", shape_str(a.shape()), " vs ",
              shape_str(b.shape()));
        Tensor<T> sum(a.shape());
        for (int64_t i = 0; i < a.size(); ++i) sum[i] = a[i] + b[i];
        Var<T> lhs = pit->second, rhs = contrib;
        pit->second = detail::make_node<T>(
            "grad_acc", std::move(sum),
            {{lhs.node(), [](const Var<T>& go) { return go; }, true},
             {rhs.node(), [](const Var<T>& go) { return go; }, true}});
      }
    }
    // Free consumed entries early, except the ones the caller asked for.
    if (n != s.raw() && !wanted.count(n)) grad.erase(n);
  }

  Tape::current().set_grad_enabled(prev_mode);

  for (size_t i = 0; i < wrt.size(); ++i) {
    auto it = grad.find(wrt[i].raw());
    if (it != grad.end()) {
      grads[i] = it->second;
    } else {
      NoGradGuard ng;
      grads[i] = Var<T>::constant(Tensor<T>(wrt[i].shape()));
    }
  }
  return grads;
}

// Value-only convenience: gradients as plain tensors.
template <typename T>
std::vector<Tensor<T>> backprop(const Var<T>& s, const std::vector<Var<T>>& wrt) {
  auto vars = backprop_vars(s, wrt, /*create_graph=*/false);
  std::vector<Tensor<T>> out;
  out.reserve(vars.size());
  for (auto& v : vars) out.push_back(v.value());
  return out;
}

}  // namespace atom

#endif  // ATOM_AUTODIFF_HPP_
