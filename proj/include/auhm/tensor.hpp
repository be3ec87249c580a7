#pragma once

// Dense row-major tensor with a dynamically recorded reverse-mode graph.
//
// A Tensor is a cheap handle onto a shared node. Ops in ops.hpp create a new
// node per result and, when gradients are enabled and some input requires a
// gradient, attach the rule that pushes the result's gradient into its
// inputs. backward() sorts the reachable nodes topologically and runs those
// rules once each in reverse order.

#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "auhm/errors.hpp"

namespace auhm {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

namespace detail {

inline bool& grad_mode_flag() {
  thread_local bool enabled = true;
  return enabled;
}

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this node's grad and accumulates into inputs that require grad.
  std::function<void(const Node&)> backward;

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
  }
  bool is_leaf() const { return !backward; }
};

}  // namespace detail

inline bool grad_enabled() { return detail::grad_mode_flag(); }

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_mode_flag()) {
    detail::grad_mode_flag() = false;
  }
  ~NoGradGuard() { detail::grad_mode_flag() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <typename T>
class Tensor {
 public:
  using value_type = T;
  using NodePtr = std::shared_ptr<detail::Node<T>>;

  Tensor() = default;

  /// Zero-filled tensor.
  explicit Tensor(Shape shape, bool requires_grad = false)
      : node_(std::make_shared<detail::Node<T>>()) {
    check_extents(shape);
    node_->data.assign(shape_numel(shape), T(0));
    node_->shape = std::move(shape);
    node_->requires_grad = requires_grad;
  }

  Tensor(Shape shape, std::vector<T> values, bool requires_grad = false)
      : node_(std::make_shared<detail::Node<T>>()) {
    check_extents(shape);
    if (shape_numel(shape) != values.size()) {
      throw DimensionError("shape " + shape_str(shape) + " needs " +
                           std::to_string(shape_numel(shape)) +
                           " values, got " + std::to_string(values.size()));
    }
    node_->shape = std::move(shape);
    node_->data = std::move(values);
    node_->requires_grad = requires_grad;
  }

  static Tensor scalar(T value) { return Tensor(Shape{1}, {value}); }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t numel() const { return node_->data.size(); }

  std::span<T> data() { return node_->data; }
  std::span<const T> data() const { return node_->data; }
  T item() const {
    if (numel() != 1) {
      throw RankError("item() on tensor of shape " + shape_str(shape()));
    }
    return node_->data[0];
  }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool value) { node_->requires_grad = value; }

  bool has_grad() const { return node_->grad.size() == node_->data.size(); }
  /// Gradient buffer; allocated (zeroed) on first access.
  std::span<T> grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  std::span<const T> grad() const {
    node_->ensure_grad();
    return node_->grad;
  }
  void zero_grad() {
    if (has_grad()) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
  }

  /// Deep copy of shape and values with no graph history.
  Tensor detach_copy() const {
    return Tensor(shape(), node_->data, false);
  }

  const NodePtr& node() const { return node_; }

  /// Used by ops: wraps a computed value and, when recording, the rule that
  /// propagates its gradient to `inputs`.
  static Tensor from_op(Shape shape, std::vector<T> values,
                        std::vector<NodePtr> inputs,
                        std::function<void(const detail::Node<T>&)> rule) {
    Tensor out(std::move(shape), std::move(values));
    bool needs = false;
    if (grad_enabled()) {
      for (const auto& in : inputs) needs = needs || in->requires_grad;
    }
    if (needs) {
      out.node_->requires_grad = true;
      out.node_->inputs = std::move(inputs);
      out.node_->backward = std::move(rule);
    }
    return out;
  }

 private:
  static void check_extents(const Shape& shape) {
    for (std::size_t i = 0; i < shape.size(); ++i) {
      if (shape[i] == 0) {
        throw DimensionError("axis " + std::to_string(i) +
                             " has zero extent in " + shape_str(shape));
      }
    }
  }

  NodePtr node_;
};

/// The recorded operations reachable from a root, in topological order
/// (inputs before the ops that consume them).
template <typename T>
class Graph {
 public:
  using NodePtr = typename Tensor<T>::NodePtr;

  explicit Graph(const Tensor<T>& root) {
    std::unordered_set<const detail::Node<T>*> seen;
    // Iterative post-order DFS; the graph can be deep for large networks.
    std::vector<std::pair<NodePtr, std::size_t>> stack;
    if (root.node()->requires_grad) {
      stack.emplace_back(root.node(), 0);
      seen.insert(root.node().get());
    }
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->inputs.size()) {
        const NodePtr& child = node->inputs[next++];
        if (child->requires_grad && seen.insert(child.get()).second) {
          stack.emplace_back(child, 0);
        }
      } else {
        order_.push_back(node);
        stack.pop_back();
      }
    }
  }

  std::size_t size() const { return order_.size(); }
  const std::vector<NodePtr>& nodes() const { return order_; }

  /// Seeds the root with d(root)=1 and runs each gradient rule once, in
  /// reverse topological order. Returns the number of nodes visited.
  std::size_t backward() {
    if (order_.empty()) return 0;
    for (auto& node : order_) {
      if (!node->is_leaf()) node->grad.assign(node->data.size(), T(0));
    }
    auto& root = order_.back();
    root->ensure_grad();
    root->grad[0] += T(1);
    std::size_t visited = 0;
    for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
      ++visited;
      if (!(*it)->is_leaf()) (*it)->backward(**it);
    }
    return visited;
  }

 private:
  std::vector<NodePtr> order_;
};

/// Accumulates d(loss)/d(leaf) into every reachable leaf that requires grad.
template <typename T>
void backward(const Tensor<T>& loss) {
  if (loss.numel() != 1) {
    throw RankError("backward needs a scalar loss, got shape " +
                    shape_str(loss.shape()));
  }
  Graph<T>(loss).backward();
}

}  // namespace auhm
