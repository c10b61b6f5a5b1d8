#include "mcf/tensor.hpp"

#include <cmath>
#include <sstream>
#include <unordered_set>

namespace mcf {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (int extent : shape) {
    if (extent < 1) throw ShapeError("non-positive extent in shape " + shape_to_string(shape));
    n *= static_cast<std::size_t>(extent);
  }
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data, bool requires_grad)
    : node_(std::make_shared<Node<T>>()) {
  if (shape_numel(shape) != data.size()) {
    throw ShapeError("data length " + std::to_string(data.size()) + " does not match shape " +
                     shape_to_string(shape));
  }
  node_->shape = std::move(shape);
  node_->value = std::move(data);
  node_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return Tensor(Shape{1}, std::vector<T>{value}, requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::from_node(std::shared_ptr<Node<T>> node) {
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_to_string(shape()));
  return node_->value[0];
}

template <typename T>
T Tensor<T>::at(int n, int c, int h, int w) const {
  const Shape& s = node_->shape;
  if (s.size() != 4) throw ShapeError("at(n,c,h,w) requires a rank-4 tensor");
  const std::size_t idx =
      ((static_cast<std::size_t>(n) * s[1] + c) * s[2] + h) * static_cast<std::size_t>(s[3]) + w;
  return node_->value.at(idx);
}

template <typename T>
void Tensor<T>::set_requires_grad(bool flag) {
  if (!node_->is_leaf()) throw Error("requires_grad can only be changed on leaf tensors");
  node_->requires_grad = flag;
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return Tensor(node_->shape, node_->value, false);
}

namespace {
thread_local bool grad_mode_enabled = true;
}

bool GradMode::enabled() { return grad_mode_enabled; }
void GradMode::set_enabled(bool enabled) { grad_mode_enabled = enabled; }

NoGradGuard::NoGradGuard() : previous_(grad_mode_enabled) { grad_mode_enabled = false; }
NoGradGuard::~NoGradGuard() { grad_mode_enabled = previous_; }

template <typename T>
Tensor<T> make_result(const char* op, Shape shape, std::vector<T> value,
                      std::vector<Tensor<T>> inputs, typename Node<T>::BackwardFn backward_fn) {
  for (const T& v : value) {
    if (!std::isfinite(v)) throw NumericError(std::string("non-finite value produced by ") + op);
  }
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = op;
  bool needs_grad = false;
  if (GradMode::enabled()) {
    for (const auto& in : inputs) needs_grad = needs_grad || in.requires_grad();
  }
  if (needs_grad) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (const auto& in : inputs) node->inputs.push_back(in.node_ptr());
    node->backward_fn = std::move(backward_fn);
  }
  return Tensor<T>::from_node(std::move(node));
}

template <typename T>
Graph<T> Graph<T>::trace(const Tensor<T>& root) {
  Graph g;
  g.root_ = root.node();
  if (!g.root_->requires_grad) return g;
  // Iterative post-order DFS; inputs are visited in recorded order so the
  // resulting order is deterministic.
  std::unordered_set<Node<T>*> visited;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(g.root_, 0);
  visited.insert(g.root_);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node<T>* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      g.order_.push_back(node);
      stack.pop_back();
    }
  }
  return g;
}

template <typename T>
void Graph<T>::backward() {
  if (root_ == nullptr || !root_->requires_grad) return;
  for (Node<T>* n : order_) {
    if (!n->is_leaf()) n->grad.assign(n->value.size(), T(0));
  }
  auto& seed = root_->ensure_grad();
  for (auto& g : seed) g += T(1);
  for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backward_fn) n->backward_fn(*n);
  }
}

template <typename T>
void backward(const Tensor<T>& loss) {
  if (loss.numel() != 1) {
    throw ShapeError("backward requires a scalar loss, got " + shape_to_string(loss.shape()));
  }
  Graph<T>::trace(loss).backward();
}

template class Tensor<float>;
template class Tensor<double>;
template class Graph<float>;
template class Graph<double>;
template Tensor<float> make_result(const char*, Shape, std::vector<float>, std::vector<Tensor<float>>,
                                   Node<float>::BackwardFn);
template Tensor<double> make_result(const char*, Shape, std::vector<double>,
                                    std::vector<Tensor<double>>, Node<double>::BackwardFn);
template void backward(const Tensor<float>&);
template void backward(const Tensor<double>&);

}  // namespace mcf
