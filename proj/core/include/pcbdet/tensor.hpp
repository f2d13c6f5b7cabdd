#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "pcbdet/common.hpp"

namespace pcbdet {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::vector<double> grad;  // empty until backward touches this node
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into the parents' grads.
  std::function<void(Node&)> backward_fn;
  uint64_t id = 0;

  void ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
  }
};

}  // namespace detail

class Tensor;

// Leaf-parameter id -> gradient tensor, one entry per requires_grad leaf
// reachable from the output.
using GradientMap = std::unordered_map<uint64_t, Tensor>;

// Dense row-major tensor of doubles, a shared handle into the autodiff
// graph. Values are immutable after construction; gradients accumulate
// during a backward pass; parameter updates go through values_mut()
// between passes (single writer).
class Tensor {
 public:
  Tensor() = default;

  // Throws on shape/length mismatch or non-finite input values.
  static Tensor from_data(Shape shape, std::vector<double> values,
                          bool requires_grad = false);
  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int64_t numel() const { return static_cast<int64_t>(node_->data.size()); }
  int64_t dim(size_t i) const { return node_->shape.at(i); }
  size_t rank() const { return node_->shape.size(); }

  const std::vector<double>& values() const { return node_->data; }
  std::vector<double>& values_mut() { return node_->data; }

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  const std::vector<double>& grad() const;
  void zero_grad() { node_->grad.clear(); }

  uint64_t id() const { return node_->id; }
  double item() const;

  // Same values, detached from the graph (never requires grad).
  Tensor detached() const;

  bool all_finite() const;

 private:
  friend Tensor make_op_result(Shape shape, std::vector<double> data,
                               std::vector<Tensor> inputs,
                               std::function<void(detail::Node&)> backward_fn);
  friend class GradientMapBuilder;
  friend GradientMap backward(const Tensor&);

  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

  std::shared_ptr<detail::Node> node_;
};

// Ops executed while a guard is alive record no graph edges.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

bool grad_mode_enabled();

// Reverse-mode sweep from a scalar output. Gradients accumulate additively
// across fan-out. Also leaves each reachable requires_grad leaf's .grad()
// populated. Throws on non-scalar outputs and on outputs with no recorded
// graph.
GradientMap backward(const Tensor& scalar_output);

// Internal helper for op implementations.
Tensor make_op_result(Shape shape, std::vector<double> data,
                      std::vector<Tensor> inputs,
                      std::function<void(detail::Node&)> backward_fn);

}  // namespace pcbdet
