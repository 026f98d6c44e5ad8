// Copyright 2026 the seau authors
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "seau/error.hpp"
#include "seau/rng.hpp"

namespace seau::ad {

using Shape = std::vector<int64_t>;

std::string shape_str(const Shape& s);
int64_t shape_numel(const Shape& s);

namespace detail {

struct Node {
  Shape shape;
  std::vector<float> value;
  std::vector<float> grad;  // allocated lazily; same size as value
  bool requires_grad = false;
  bool backward_done = false;  // set on a loss node once backward ran
  std::string name;            // parameters only
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void()> vjp;  // accumulates into inputs' grads

  int64_t numel() const { return static_cast<int64_t>(value.size()); }
  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0f);
  }
};

}  // namespace detail

// Value-semantic handle to a graph node.  Leaf tensors created with
// requires_grad=true act as trainable parameters: their grad buffers survive
// the graph and accumulate across backward calls until zero_grad().
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, float fill, bool requires_grad = false);
  static Tensor from_values(Shape shape, std::vector<float> values, bool requires_grad = false);
  static Tensor scalar_value(float v);
  // Gaussian init, values drawn as float32.
  static Tensor randn(Shape shape, RngStream rng, float stddev, bool requires_grad = true);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int64_t dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
  int64_t numel() const { return node_->numel(); }
  bool requires_grad() const { return node_->requires_grad; }

  std::span<const float> values() const { return node_->value; }
  // Mutable access is for leaf tensors (optimizer updates, tests).
  std::span<float> values_mut() { return node_->value; }
  std::span<const float> grad() const;
  std::span<float> grad_mut();
  void zero_grad();

  float scalar() const;
  float at(int64_t i) const { return node_->value[static_cast<size_t>(i)]; }

  const std::string& name() const { return node_->name; }
  void set_name(std::string n) { node_->name = std::move(n); }

  std::shared_ptr<detail::Node> node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

// Runs reverse-mode accumulation from a scalar loss.  Throws StateError if
// called twice on the same loss without rebuilding the graph.
void backward(const Tensor& loss);

// ---- Operator set ----
// Every op validates shapes (ShapeError names both sides) and checks the
// result for NaN/Inf (NumericError).

Tensor matmul(const Tensor& a, const Tensor& b);              // [m,k]x[k,n]
Tensor add(const Tensor& a, const Tensor& b);                 // same shape, or b is a row [n]
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);                 // elementwise
Tensor scale(const Tensor& a, float s);
Tensor add_const(const Tensor& a, std::span<const float> c);  // constant same-size addend
Tensor transpose(const Tensor& a);                            // 2-D
Tensor reshape(const Tensor& a, Shape shape);
Tensor slice_rows(const Tensor& a, int64_t r0, int64_t r1);
Tensor slice_cols(const Tensor& a, int64_t c0, int64_t c1);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor softmax_rows(const Tensor& a);                         // softmax over the last axis
Tensor log(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor gelu(const Tensor& a);
Tensor swish(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
// Normalizes the last axis; gain/bias have that axis' length.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, float eps = 1e-5f);
// Train mode zeroes elements with probability p and rescales by 1/(1-p);
// eval mode is the identity.  The stream is consumed, fork one per call site.
Tensor dropout(const Tensor& x, float p, RngStream rng, bool train);
Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids);
// x: [C_in, H, W]; w: [C_out, C_in, kh, kw]; b: [C_out].
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad);
// x: [T, D]; w: [K, D] (odd K, 'same' zero padding); b: [D].
Tensor depthwise_conv1d(const Tensor& x, const Tensor& w, const Tensor& b);
// Mean negative log-likelihood over rows with mask != 0.
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets,
                     const std::vector<uint8_t>& mask);
Tensor cosine_similarity(const Tensor& a, const Tensor& b);   // vectors -> scalar
Tensor row_l2_normalize(const Tensor& a, float eps = 1e-8f);
Tensor sum(const Tensor& a);                                  // -> scalar
Tensor mean(const Tensor& a);                                 // -> scalar
// Replaces rows with mask != 0 by the (learned) embedding vector.
Tensor mask_rows(const Tensor& x, const std::vector<uint8_t>& mask, const Tensor& emb);
// Adds -1e9 above the diagonal of a square score matrix.
Tensor add_causal_mask(const Tensor& scores);
// [C, H, W] -> [H, C*W]; used to flatten conv stacks time-major.
Tensor move_channels_last(const Tensor& x);

// Host-side helpers (no gradient).
std::vector<int> argmax_rows(const Tensor& t);
double masked_accuracy(const Tensor& logits, const std::vector<int>& targets,
                       const std::vector<uint8_t>& mask);

}  // namespace seau::ad
