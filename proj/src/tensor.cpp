// Copyright 2026 the seau authors
//
// Licensed under the Apache License, Version 2.0

#include "seau/tensor.hpp"

#include <cmath>
#include <unordered_set>

namespace seau::ad {

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto n = std::make_shared<detail::Node>();
  n->value.assign(static_cast<size_t>(shape_numel(shape)), 0.0f);
  n->shape = std::move(shape);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::full(Shape shape, float fill, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  for (float& v : t.node()->value) v = fill;
  return t;
}

Tensor Tensor::from_values(Shape shape, std::vector<float> values, bool requires_grad) {
  if (shape_numel(shape) != static_cast<int64_t>(values.size())) {
    throw ShapeError("from_values: shape " + shape_str(shape) + " wants " +
                     std::to_string(shape_numel(shape)) + " values, got " +
                     std::to_string(values.size()));
  }
  auto n = std::make_shared<detail::Node>();
  n->shape = std::move(shape);
  n->value = std::move(values);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::scalar_value(float v) { return from_values({1}, {v}); }

Tensor Tensor::randn(Shape shape, RngStream rng, float stddev, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  for (float& v : t.node()->value) v = stddev * rng.normal_f32();
  return t;
}

std::span<const float> Tensor::grad() const {
  node_->ensure_grad();
  return node_->grad;
}

std::span<float> Tensor::grad_mut() {
  node_->ensure_grad();
  return node_->grad;
}

void Tensor::zero_grad() {
  node_->ensure_grad();
  std::fill(node_->grad.begin(), node_->grad.end(), 0.0f);
}

float Tensor::scalar() const {
  if (node_->numel() != 1) {
    throw ShapeError("scalar() on tensor of shape " + shape_str(node_->shape));
  }
  return node_->value[0];
}

void backward(const Tensor& loss) {
  if (!loss.defined()) throw StateError("backward: undefined loss tensor");
  detail::Node* root = loss.node().get();
  if (root->numel() != 1) {
    throw ShapeError("backward: loss must be scalar, got " + shape_str(root->shape));
  }
  if (!root->requires_grad) {
    throw StateError("backward: loss does not depend on any trainable tensor");
  }
  if (root->backward_done) {
    throw StateError("backward: already ran on this loss; rebuild the graph first");
  }

  // Iterative post-order DFS over input edges.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  struct Frame {
    detail::Node* n;
    size_t next = 0;
  };
  std::vector<Frame> stack;
  stack.push_back({root});
  seen.insert(root);
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next < f.n->inputs.size()) {
      detail::Node* child = f.n->inputs[f.next++].get();
      if (seen.insert(child).second) stack.push_back({child});
    } else {
      order.push_back(f.n);
      stack.pop_back();
    }
  }

  root->ensure_grad();
  root->grad[0] = 1.0f;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (n->vjp && n->requires_grad) {
      n->ensure_grad();
      n->vjp();
    }
  }
  root->backward_done = true;
}

}  // namespace seau::ad
