#include "darn/tensor.hpp"

#include <sstream>
#include <unordered_set>

#include "darn/errors.hpp"

namespace darn {

namespace {
thread_local bool g_grad_enabled = true;
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::vector<double>& detail::Node::ensure_grad() {
  if (grad.empty()) grad.assign(value.size(), 0.0);
  return grad;
}

Tensor::Tensor() : node_(std::make_shared<detail::Node>()) {}

Tensor::Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  std::vector<double> v(shape_numel(shape), value);
  return from(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("tensor shape " + shape_string(shape) + " does not hold " +
                     std::to_string(values.size()) + " values");
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({1}, {value}, requires_grad); }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= node_->shape.size()) throw ShapeError("axis out of range for " + shape_string(node_->shape));
  return node_->shape[axis];
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_string(shape()));
  return node_->value[0];
}

void Tensor::set_requires_grad(bool on) {
  if (!node_->is_leaf()) throw Error("requires_grad can only be changed on leaf tensors");
  node_->requires_grad = on;
}

std::vector<double> Tensor::grad() const {
  if (node_->grad.empty()) return std::vector<double>(numel(), 0.0);
  return node_->grad;
}

void Tensor::zero_grad() { node_->grad.clear(); }

Tensor Tensor::detach() const { return from(node_->shape, node_->value, false); }

std::vector<detail::Node*> backward_order(const Tensor& root) {
  std::vector<detail::Node*> post;
  if (!root.requires_grad()) return post;
  std::unordered_set<detail::Node*> seen;
  // Iterative post-order DFS; each frame remembers which input comes next.
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      detail::Node* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      post.push_back(node);
      stack.pop_back();
    }
  }
  return {post.rbegin(), post.rend()};
}

void Tensor::backward() const {
  if (numel() != 1) throw ShapeError("backward() needs a scalar root, got " + shape_string(shape()));
  const auto order = backward_order(*this);
  if (order.empty()) return;
  // Interior adjoints are per-pass; only leaves accumulate across passes.
  for (detail::Node* n : order) {
    if (!n->is_leaf()) n->grad.assign(n->value.size(), 0.0);
  }
  order.front()->ensure_grad()[0] += 1.0;
  for (detail::Node* n : order) {
    if (!n->is_leaf() && n->backward) n->backward(*n);
  }
  for (detail::Node* n : order) {
    if (!n->is_leaf()) n->grad.clear();
  }
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

}  // namespace darn
