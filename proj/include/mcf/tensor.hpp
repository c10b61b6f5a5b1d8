#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mcf {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when tensor extents violate an op's contract.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Raised when a value leaves the finite range (NaN/Inf) or a numeric
/// precondition such as n >= 2 fails.
class NumericError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

using Shape = std::vector<int>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

template <typename T>
struct Node {
  using BackwardFn = std::function<void(Node&)>;

  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until the first accumulation
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  BackwardFn backward_fn;

  bool is_leaf() const { return inputs.empty(); }

  std::vector<T>& ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
    return grad;
  }
};

/// Dense row-major tensor. Copies share the underlying node; values produced by
/// ops are never modified after construction. Leaves (parameters) may be
/// updated in place through mutable_data().
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  Tensor(Shape shape, std::vector<T> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);
  static Tensor from_node(std::shared_ptr<Node<T>> node);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int dim(int i) const { return node_->shape.at(static_cast<std::size_t>(i)); }
  std::size_t numel() const { return node_->value.size(); }

  std::span<const T> data() const { return node_->value; }
  std::span<T> mutable_data() { return node_->value; }
  T item() const;

  /// Element of an N×C×H×W tensor.
  T at(int n, int c, int h, int w) const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool flag);

  bool has_grad() const { return !node_->grad.empty(); }
  /// Accumulated gradient; zero-length when backward never reached this node.
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() { return node_->ensure_grad(); }
  void zero_grad() { node_->grad.clear(); }

  /// New leaf holding a copy of the values, cut from the graph.
  Tensor detach() const;

  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

/// Thread-local switch: while disabled, ops record no graph.
class GradMode {
 public:
  static bool enabled();
  static void set_enabled(bool enabled);
};

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Builds an op result. The output records its inputs and backward closure only
/// when grad mode is on and some input requires grad. Throws NumericError if
/// any output value is non-finite.
template <typename T>
Tensor<T> make_result(const char* op, Shape shape, std::vector<T> value,
                      std::vector<Tensor<T>> inputs,
                      typename Node<T>::BackwardFn backward_fn);

/// Reverse-topologically ordered view of the nodes reachable from a root.
template <typename T>
class Graph {
 public:
  static Graph trace(const Tensor<T>& root);

  /// Topological order: every node appears after all of its inputs.
  const std::vector<Node<T>*>& nodes() const { return order_; }

  /// Seeds d(root)/d(root) = 1 and propagates. Intermediate gradients are reset
  /// first; leaf gradients accumulate across calls.
  void backward();

 private:
  std::vector<Node<T>*> order_;
  Node<T>* root_ = nullptr;
};

/// Populates gradients of every requires_grad leaf reachable from a scalar loss.
template <typename T>
void backward(const Tensor<T>& loss);

}  // namespace mcf
