#include "pcbdet/tensor.hpp"

#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace pcbdet {

namespace {

std::atomic<uint64_t> g_next_id{1};

thread_local bool g_grad_enabled = true;

std::shared_ptr<detail::Node> new_node(Shape shape, std::vector<double> data,
                                       bool requires_grad) {
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  node->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
  return node;
}

}  // namespace

int64_t shape_numel(const Shape& shape) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

Tensor Tensor::from_data(Shape shape, std::vector<double> values,
                         bool requires_grad) {
  for (int64_t d : shape)
    check(d >= 0, "tensor_new: negative extent in shape " + shape_str(shape));
  check(shape_numel(shape) == static_cast<int64_t>(values.size()),
        "tensor_new: shape " + shape_str(shape) + " expects " +
            std::to_string(shape_numel(shape)) + " values, got " +
            std::to_string(values.size()));
  for (double v : values)
    check(std::isfinite(v), "tensor_new: non-finite input value");
  return Tensor(new_node(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  int64_t n = shape_numel(shape);
  check(n >= 0, "zeros: invalid shape");
  return Tensor(new_node(std::move(shape), std::vector<double>(n, 0.0),
                         requires_grad));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  check(std::isfinite(value), "full: non-finite value");
  int64_t n = shape_numel(shape);
  return Tensor(new_node(std::move(shape), std::vector<double>(n, value),
                         requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_data({1}, {value}, requires_grad);
}

const std::vector<double>& Tensor::grad() const {
  check(!node_->grad.empty(),
        "grad(): no gradient recorded on this tensor; run backward first");
  return node_->grad;
}

double Tensor::item() const {
  check(numel() == 1, "item(): tensor has " + std::to_string(numel()) +
                          " elements, expected 1");
  return node_->data[0];
}

Tensor Tensor::detached() const {
  return Tensor(new_node(node_->shape, node_->data, false));
}

bool Tensor::all_finite() const {
  for (double v : node_->data)
    if (!std::isfinite(v)) return false;
  return true;
}

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

bool grad_mode_enabled() { return g_grad_enabled; }

Tensor make_op_result(Shape shape, std::vector<double> data,
                      std::vector<Tensor> inputs,
                      std::function<void(detail::Node&)> backward_fn) {
  bool any_grad = false;
  if (g_grad_enabled) {
    for (const Tensor& t : inputs)
      if (t.node_->requires_grad) any_grad = true;
  }
  auto node = new_node(std::move(shape), std::move(data), any_grad);
  if (any_grad) {
    node->parents.reserve(inputs.size());
    for (Tensor& t : inputs) node->parents.push_back(t.node_);
    node->backward_fn = std::move(backward_fn);
  }
  return Tensor(node);
}

GradientMap backward(const Tensor& scalar_output) {
  check(scalar_output.defined(), "backward: undefined tensor");
  check(scalar_output.numel() == 1,
        "backward: output has " + std::to_string(scalar_output.numel()) +
            " elements, expected a scalar");
  detail::Node* root = scalar_output.node_.get();
  // A requires_grad leaf counts as its own one-node graph (identity).
  check(root->requires_grad,
        "backward: output is detached, no recorded graph");

  // Postorder DFS -> topological order (parents before children in `order`).
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> visited;
  std::vector<std::pair<detail::Node*, size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* parent = node->parents[next++].get();
      if (parent->requires_grad && !visited.count(parent)) {
        visited.insert(parent);
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->ensure_grad();
  root->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = *it;
    if (node->backward_fn) {
      node->ensure_grad();
      node->backward_fn(*node);
    }
  }

  GradientMap grads;
  for (detail::Node* node : order) {
    if (node->parents.empty() && node->requires_grad && !node->grad.empty()) {
      grads.emplace(node->id,
                    Tensor::from_data(node->shape, node->grad, false));
    }
  }
  return grads;
}

}  // namespace pcbdet
