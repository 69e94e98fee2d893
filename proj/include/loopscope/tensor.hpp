// Copyright 2026 The LoopScope Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense 64-bit tensors (1-D/2-D, row-major) with reverse-mode autodiff.
//
// A Tensor is a handle to a graph node. Ops record their inputs and a
// backward closure when any input requires grad and grad mode is enabled;
// `backward(loss)` then walks the reachable nodes once, in reverse
// topological order. Every op checks shapes up front and rejects non-finite
// results with NumericError.

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace loopscope {

using Shape = std::vector<std::size_t>;

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class AutogradError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  bool backward_done = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  // Accumulates this node's grad into the inputs' grads.
  std::function<void(Node&)> backward;

  std::vector<double>& grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> data,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor vector(std::vector<double> data, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node().shape; }
  std::size_t dim() const { return node().shape.size(); }
  std::size_t size() const { return node().value.size(); }
  // 1-D tensors are treated as a single row.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const { return node().value; }
  // Direct write access; only meaningful for leaves (parameters, inputs).
  std::span<double> mutable_data() { return node().value; }
  std::span<const double> row(std::size_t r) const;

  double item() const;
  double operator[](std::size_t i) const { return node().value.at(i); }
  double at(std::size_t r, std::size_t c) const;

  bool requires_grad() const { return node().requires_grad; }
  // Gradient buffer; zeros if nothing has been accumulated.
  std::vector<double> grad() const;
  void zero_grad();

  // Copy of the values with no graph history.
  Tensor detach(bool requires_grad = false) const;

  const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }
  static Tensor wrap(std::shared_ptr<detail::Node> node) {
    Tensor t;
    t.node_ = std::move(node);
    return t;
  }

 private:
  const detail::Node& node() const;
  detail::Node& node();

  std::shared_ptr<detail::Node> node_;
};

// Disables graph recording on this thread for the guard's lifetime.
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

// Populates gradients for every reachable input of a scalar loss.
// Throws AutogradError if the loss is not scalar or was already
// backpropagated without reset_backward().
void backward(const Tensor& loss);

// Clears gradients of every non-leaf node reachable from `loss` and
// re-arms it for another backward pass. Leaf gradients are left alone.
void reset_backward(const Tensor& loss);

std::string shape_string(const Shape& shape);

}  // namespace loopscope
