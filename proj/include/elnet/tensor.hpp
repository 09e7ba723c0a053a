#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <unordered_set>
#include <utility>
#include <vector>

#include "elnet/rng.hpp"
#include "elnet/shape.hpp"

namespace elnet {

// Thread-local recording switch. When disabled, ops run forward-only and the
// result carries no graph edges, so inference allocates nothing extra.
class GradMode {
 public:
  static bool enabled() { return enabled_; }
  static void set_enabled(bool e) { enabled_ = e; }

 private:
  static thread_local bool enabled_;
};

inline thread_local bool GradMode::enabled_ = true;

struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(GradMode::enabled()) { GradMode::set_enabled(false); }
  ~NoGradGuard() { GradMode::set_enabled(prev); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

// One recorded value in the operation graph. Interior nodes hold the parents
// they were computed from plus a closure that scatters this node's gradient
// into the parents' gradient buffers.
template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until first touched; then value-sized
  bool requires_grad = false;  // leaf created with gradient tracking
  bool needs_grad = false;     // on some path to a requires_grad leaf
  bool consumed = false;       // backward() was already run from here
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void()> backward_fn;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
  }
};

template <typename T>
class TensorT {
 public:
  std::shared_ptr<Node<T>> node;

  TensorT() = default;
  explicit TensorT(std::shared_ptr<Node<T>> n) : node(std::move(n)) {}

  static TensorT full(const Shape& s, T v, bool requires_grad = false) {
    auto n = std::make_shared<Node<T>>();
    n->shape = s;
    n->value.assign(static_cast<size_t>(s.numel()), v);
    n->requires_grad = requires_grad;
    n->needs_grad = requires_grad;
    return TensorT(std::move(n));
  }

  static TensorT zeros(const Shape& s, bool requires_grad = false) {
    return full(s, T(0), requires_grad);
  }

  static TensorT from_values(const Shape& s, std::vector<T> v,
                             bool requires_grad = false) {
    if (static_cast<int64_t>(v.size()) != s.numel())
      throw std::invalid_argument("tensor: value count does not match shape " +
                                  s.str());
    auto n = std::make_shared<Node<T>>();
    n->shape = s;
    n->value = std::move(v);
    n->requires_grad = requires_grad;
    n->needs_grad = requires_grad;
    return TensorT(std::move(n));
  }

  // Reproducible for a fixed (seed, shape): one mt19937_64 stream consumed in
  // flat element order.
  static TensorT uniform(const Shape& s, uint64_t seed, T lo = T(0),
                         T hi = T(1), bool requires_grad = false) {
    Rng rng(seed);
    std::vector<T> v(static_cast<size_t>(s.numel()));
    for (auto& x : v)
      x = static_cast<T>(rng.uniform(static_cast<double>(lo),
                                     static_cast<double>(hi)));
    return from_values(s, std::move(v), requires_grad);
  }

  bool defined() const { return static_cast<bool>(node); }
  const Shape& shape() const { return node->shape; }
  int64_t numel() const { return static_cast<int64_t>(node->value.size()); }
  int64_t rank() const { return node->shape.rank(); }

  std::vector<T>& values() { return node->value; }
  const std::vector<T>& values() const { return node->value; }

  T scalar() const {
    if (numel() != 1) throw std::invalid_argument("tensor is not a scalar");
    return node->value[0];
  }

  bool requires_grad() const { return node->requires_grad; }

  std::vector<T>& grad() {
    node->ensure_grad();
    return node->grad;
  }
  const std::vector<T>& grad() const {
    node->ensure_grad();
    return node->grad;
  }

  void zero_grad() {
    node->grad.assign(node->value.size(), T(0));
  }

  TensorT clone_detached(bool requires_grad = false) const {
    return from_values(shape(), values(), requires_grad);
  }
};

// Wraps the result of an op. Parents and the backward closure are stored only
// when we are recording and some parent can reach a tracked leaf.
template <typename T>
TensorT<T> op_result(Shape s, std::vector<T> value,
                     std::vector<std::shared_ptr<Node<T>>> parents) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  if (static_cast<int64_t>(n->value.size()) != s.numel())
    throw std::logic_error("op_result: value count does not match shape");
  n->shape = std::move(s);
  if (GradMode::enabled()) {
    bool any = false;
    for (const auto& p : parents) any = any || p->needs_grad;
    if (any) {
      n->needs_grad = true;
      n->parents = std::move(parents);
    }
  }
  return TensorT<T>(std::move(n));
}

template <typename T>
bool all_finite(const TensorT<T>& t) {
  for (T v : t.values())
    if (!std::isfinite(static_cast<double>(v))) return false;
  return true;
}

// Reverse-mode sweep from a scalar loss. Gradients are accumulated additively
// into every participating node; call zero_grad on leaves between steps.
template <typename T>
void backward(const TensorT<T>& loss) {
  if (!loss.defined()) throw std::invalid_argument("backward: empty tensor");
  if (loss.numel() != 1)
    throw std::invalid_argument("backward: loss must be a scalar, got shape " +
                                loss.shape().str());
  Node<T>* root = loss.node.get();
  if (root->consumed)
    throw std::runtime_error("backward: graph already consumed by a previous "
                             "backward pass");
  root->consumed = true;
  if (!root->needs_grad) return;  // nothing reachable is tracked

  // Post-order DFS over parent edges; reversed it yields consumer-first order.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, bool>> stack;
  stack.emplace_back(root, false);
  while (!stack.empty()) {
    auto [n, expanded] = stack.back();
    stack.pop_back();
    if (expanded) {
      order.push_back(n);
      continue;
    }
    if (!seen.insert(n).second) continue;
    stack.emplace_back(n, true);
    for (const auto& p : n->parents)
      if (p->needs_grad) stack.emplace_back(p.get(), false);
  }

  root->ensure_grad();
  root->grad[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (!n->backward_fn) continue;
    n->ensure_grad();
    n->backward_fn();
  }
}

using TensorF = TensorT<float>;
using TensorD = TensorT<double>;

}  // namespace elnet
