#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace darn {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {

// One vertex of the differentiation graph. Non-leaf nodes keep their inputs
// alive and know how to push their adjoint back into them.
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  bool is_leaf() const { return inputs.empty(); }
  std::vector<double>& ensure_grad();
};

}  // namespace detail

// Handle to a node of the reverse-mode graph. Copies share the node.
class Tensor {
 public:
  Tensor();

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  const Shape& shape() const { return node_->shape; }
  std::size_t numel() const { return node_->value.size(); }
  std::size_t dim(std::size_t axis) const;

  std::span<const double> values() const { return node_->value; }
  // Writable view for optimizers and gradient checks; the graph does not notice.
  std::span<double> mutable_values() { return node_->value; }
  double item() const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on);

  bool has_grad() const { return !node_->grad.empty(); }
  // Zeros of the right shape when no gradient was accumulated yet.
  std::vector<double> grad() const;
  std::span<const double> grad_view() const { return node_->grad; }
  void zero_grad();

  // Leaf copy of the values, cut off from the graph.
  Tensor detach() const;

  // Accumulates d(this)/d(leaf) into every reachable leaf that requires grad.
  void backward() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node);

 private:
  std::shared_ptr<detail::Node> node_;
};

// Reverse topological visiting order of the graph rooted at `root`
// (root first, leaves last). Only nodes that require grad are included.
std::vector<detail::Node*> backward_order(const Tensor& root);

// While alive, newly created tensors on this thread record no graph edges.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

}  // namespace darn
