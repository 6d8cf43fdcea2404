#pragma once
// Dense NCHW tensors with a reverse-mode autodiff graph.
//
// A Tensor is a shared handle to a Node. Every op allocates a fresh node that
// records its parents and a backward closure; nodes are numbered in creation
// order, so sorting the reachable set by id yields a valid topological order.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include "polypseg/errors.hpp"

namespace polypseg {

template <class T>
concept Real = std::same_as<T, float> || std::same_as<T, double>;

class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<std::size_t> dims) : dims_(dims) { validate(); }
  explicit Shape(std::vector<std::size_t> dims) : dims_(std::move(dims)) { validate(); }

  std::size_t rank() const noexcept { return dims_.size(); }
  std::size_t operator[](std::size_t i) const { return dims_.at(i); }
  const std::vector<std::size_t>& dims() const noexcept { return dims_; }

  std::size_t numel() const noexcept {
    return std::accumulate(dims_.begin(), dims_.end(), std::size_t{1}, std::multiplies<>{});
  }

  // NCHW accessors; only meaningful for rank-4 shapes.
  std::size_t n() const { return dims_.at(0); }
  std::size_t c() const { return dims_.at(1); }
  std::size_t h() const { return dims_.at(2); }
  std::size_t w() const { return dims_.at(3); }

  bool operator==(const Shape&) const = default;

  std::string str() const {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < dims_.size(); ++i) os << (i ? "," : "") << dims_[i];
    os << ')';
    return os.str();
  }

 private:
  void validate() const {
    for (auto d : dims_)
      if (d == 0) throw DimensionError("shape dimensions must be positive");
  }

  std::vector<std::size_t> dims_;
};

inline void require_rank4(const Shape& s, std::string_view op) {
  if (s.rank() != 4)
    throw DimensionError(std::string(op) + ": expected NCHW tensor, got " + s.str());
}

namespace detail {

inline std::atomic<std::uint64_t>& node_counter() {
  static std::atomic<std::uint64_t> counter{0};
  return counter;
}

inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

template <Real T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until the first accumulation
  bool requires_grad = false;
  std::uint64_t id = 0;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  // Receives this node's gradient and accumulates into the parents.
  std::function<void(std::span<const T>)> backward;

  bool is_leaf() const noexcept { return !backward; }

  std::span<T> grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), T(0));
    return grad;
  }
};

}  // namespace detail

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_mode()) { detail::grad_mode() = false; }
  ~NoGradGuard() { detail::grad_mode() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

inline bool grad_enabled() { return detail::grad_mode(); }

template <Real T>
class Tensor {
 public:
  using value_type = T;
  using NodeT = detail::Node<T>;

  Tensor() = default;

  static Tensor from(Shape shape, std::vector<T> values, bool requires_grad = false) {
    if (shape.numel() != values.size())
      throw DimensionError("tensor data length " + std::to_string(values.size()) +
                           " does not match shape " + shape.str());
    auto node = std::make_shared<NodeT>();
    node->shape = std::move(shape);
    node->value = std::move(values);
    node->requires_grad = requires_grad;
    node->id = detail::node_counter()++;
    return Tensor(std::move(node));
  }

  static Tensor full(Shape shape, T v, bool requires_grad = false) {
    auto n = shape.numel();
    return from(std::move(shape), std::vector<T>(n, v), requires_grad);
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return full(std::move(shape), T(0), requires_grad);
  }

  static Tensor scalar(T v, bool requires_grad = false) { return from(Shape{}, {v}, requires_grad); }

  bool defined() const noexcept { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t numel() const { return node_->value.size(); }
  std::span<const T> data() const { return node_->value; }
  // Direct write access; reserved for parameters and test fixtures.
  std::span<T> mutable_data() { return node_->value; }
  T item() const {
    if (numel() != 1) throw DimensionError("item() on non-scalar tensor " + shape().str());
    return node_->value[0];
  }
  T operator[](std::size_t i) const { return node_->value.at(i); }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool v) { node_->requires_grad = v; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() { return node_->grad_buffer(); }
  void zero_grad() { node_->grad.clear(); }

  std::uint64_t id() const { return node_->id; }
  std::string_view op() const { return node_->op; }

  /// A leaf sharing no graph history, holding a copy of the values.
  Tensor detach() const { return from(shape(), node_->value, false); }

  NodeT* node() const noexcept { return node_.get(); }
  const std::shared_ptr<NodeT>& node_ptr() const noexcept { return node_; }

 private:
  explicit Tensor(std::shared_ptr<NodeT> n) : node_(std::move(n)) {}

  template <Real U>
  friend Tensor<U> make_result(Shape, std::vector<U>, const char*, std::initializer_list<Tensor<U>>,
                               std::function<void(std::span<const U>)>);
  template <Real U>
  friend Tensor<U> make_result(Shape, std::vector<U>, const char*, const std::vector<Tensor<U>>&,
                               std::function<void(std::span<const U>)>);

  std::shared_ptr<NodeT> node_;
};

/// Builds an op output. The backward closure is recorded only when graph
/// recording is on and some parent needs a gradient; it must capture parents
/// through raw node pointers (the output keeps them alive).
template <Real T>
Tensor<T> make_result(Shape shape, std::vector<T> value, const char* op,
                      const std::vector<Tensor<T>>& parents,
                      std::function<void(std::span<const T>)> backward) {
  auto node = std::make_shared<detail::Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->id = detail::node_counter()++;
  node->op = op;
  bool needs = false;
  if (grad_enabled())
    for (const auto& p : parents) needs = needs || p.requires_grad();
  if (needs) {
    node->requires_grad = true;
    node->parents.reserve(parents.size());
    for (const auto& p : parents) node->parents.push_back(p.node_ptr());
    node->backward = std::move(backward);
  }
  return Tensor<T>(std::move(node));
}

template <Real T>
Tensor<T> make_result(Shape shape, std::vector<T> value, const char* op,
                      std::initializer_list<Tensor<T>> parents,
                      std::function<void(std::span<const T>)> backward) {
  return make_result(std::move(shape), std::move(value), op, std::vector<Tensor<T>>(parents),
                     std::move(backward));
}

/// Gradient sink for a parent inside a backward closure; null when the parent
/// does not require a gradient.
template <Real T>
T* grad_sink(detail::Node<T>* parent) {
  return parent->requires_grad ? parent->grad_buffer().data() : nullptr;
}

/// The recorded history of a scalar result, ordered by creation.
template <Real T>
class Tape {
 public:
  explicit Tape(const Tensor<T>& root) : root_(root) {
    std::vector<detail::Node<T>*> stack{root.node()};
    std::unordered_set<detail::Node<T>*> seen{root.node()};
    while (!stack.empty()) {
      auto* n = stack.back();
      stack.pop_back();
      nodes_.push_back(n);
      for (auto& p : n->parents)
        if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
    }
    std::sort(nodes_.begin(), nodes_.end(), [](auto* a, auto* b) { return a->id < b->id; });
  }

  std::span<detail::Node<T>* const> nodes() const { return nodes_; }

  /// Accumulates d(root)/d(leaf) into every leaf that requires a gradient.
  /// Leaf gradients add up across calls until zero_grad().
  void backward() {
    if (root_.numel() != 1)
      throw ConfigError("backward: loss must be a scalar, got shape " + root_.shape().str());
    if (!root_.requires_grad()) return;
    for (auto* n : nodes_)
      if (!n->is_leaf()) n->grad.clear();
    root_.node()->grad_buffer()[0] += T(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      auto* n = *it;
      if (n->is_leaf() || n->grad.empty()) continue;
      n->backward(n->grad);
    }
  }

 private:
  Tensor<T> root_;
  std::vector<detail::Node<T>*> nodes_;
};

template <Real T>
void backward(const Tensor<T>& loss) {
  Tape<T>(loss).backward();
}

}  // namespace polypseg
