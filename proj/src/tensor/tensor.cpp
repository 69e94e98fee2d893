// Copyright 2026 The LoopScope Authors
// SPDX-License-Identifier: Apache-2.0

#include "loopscope/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace loopscope {

namespace {

thread_local bool g_grad_enabled = true;

std::size_t product(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

// Reverse-postorder DFS restricted to nodes that carry grad.
std::vector<detail::Node*> topo_order(detail::Node* root) {
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      detail::Node* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) {
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  std::reverse(order.begin(), order.end());
  return order;
}

}  // namespace

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

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape.empty() || shape.size() > 2) {
    throw DimensionError("tensor rank must be 1 or 2, got " +
                         shape_string(shape));
  }
  if (product(shape) != data.size()) {
    throw DimensionError("shape " + shape_string(shape) + " needs " +
                         std::to_string(product(shape)) + " values, got " +
                         std::to_string(data.size()));
  }
  for (double v : data) {
    if (!std::isfinite(v)) throw NumericError("non-finite tensor entry");
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(data);
  node->requires_grad = requires_grad;
  return wrap(std::move(node));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const std::size_t n = product(shape);
  return from(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = product(shape);
  return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

Tensor Tensor::vector(std::vector<double> data, bool requires_grad) {
  const std::size_t n = data.size();
  return from({n}, std::move(data), requires_grad);
}

const detail::Node& Tensor::node() const {
  if (!node_) throw AutogradError("use of undefined tensor");
  return *node_;
}

detail::Node& Tensor::node() {
  if (!node_) throw AutogradError("use of undefined tensor");
  return *node_;
}

std::size_t Tensor::rows() const {
  return dim() == 1 ? 1 : shape()[0];
}

std::size_t Tensor::cols() const {
  return dim() == 1 ? shape()[0] : shape()[1];
}

std::span<const double> Tensor::row(std::size_t r) const {
  if (r >= rows()) throw DimensionError("row index out of range");
  return data().subspan(r * cols(), cols());
}

double Tensor::item() const {
  if (size() != 1) {
    throw DimensionError("item() on tensor of shape " +
                         shape_string(shape()));
  }
  return node().value[0];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  if (r >= rows() || c >= cols()) throw DimensionError("index out of range");
  return node().value[r * cols() + c];
}

std::vector<double> Tensor::grad() const {
  const auto& n = node();
  if (n.grad.empty()) return std::vector<double>(n.value.size(), 0.0);
  return n.grad;
}

void Tensor::zero_grad() { node().grad.clear(); }

Tensor Tensor::detach(bool requires_grad) const {
  return from(shape(), node().value, requires_grad);
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) {
  g_grad_enabled = false;
}

NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

void backward(const Tensor& loss) {
  if (!loss.defined()) throw AutogradError("backward on undefined tensor");
  detail::Node* root = loss.node_ptr().get();
  if (root->value.size() != 1) {
    throw AutogradError("backward needs a scalar loss, got shape " +
                        shape_string(root->shape));
  }
  if (root->backward_done) {
    throw AutogradError(
        "backward already ran on this graph; call reset_backward first");
  }
  if (!root->requires_grad) {
    throw AutogradError("loss does not depend on any tensor requiring grad");
  }
  const auto order = topo_order(root);
  root->grad_buffer()[0] += 1.0;
  for (detail::Node* node : order) {
    if (node->backward && !node->grad.empty()) node->backward(*node);
  }
  root->backward_done = true;
}

void reset_backward(const Tensor& loss) {
  if (!loss.defined()) return;
  detail::Node* root = loss.node_ptr().get();
  for (detail::Node* node : topo_order(root)) {
    if (!node->inputs.empty()) node->grad.clear();
  }
  root->backward_done = false;
}

}  // namespace loopscope
