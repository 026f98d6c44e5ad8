// Copyright 2026 the seau authors
//
// Licensed under the Apache License, Version 2.0

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>

#include "seau/tensor.hpp"

namespace seau::ad {

namespace {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

NodePtr make_out(Shape shape, std::vector<NodePtr> inputs) {
  auto n = std::make_shared<Node>();
  n->value.assign(static_cast<size_t>(shape_numel(shape)), 0.0f);
  n->shape = std::move(shape);
  for (auto& in : inputs) {
    if (in->requires_grad) n->requires_grad = true;
  }
  n->inputs = std::move(inputs);
  return n;
}

void finish(const NodePtr& n, const char* op) {
  for (float v : n->value) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string(op) + ": non-finite value in result of shape " +
                         shape_str(n->shape));
    }
  }
}

[[noreturn]] void shape_fail(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " +
                   shape_str(b));
}

// ---- matmul kernels (row-major, fixed accumulation order) ----

void mm_nn(const float* __restrict a, const float* __restrict b, float* __restrict c,
           int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    float* ci = c + i * n;
    std::fill(ci, ci + n, 0.0f);
    const float* ai = a + i * k;
    for (int64_t p = 0; p < k; ++p) {
      const float ap = ai[p];
      const float* bp = b + p * n;
      for (int64_t j = 0; j < n; ++j) ci[j] += ap * bp[j];
    }
  }
}

// c[m,n] += a[m,k] * b[n,k]^T
void mm_nt_acc(const float* __restrict a, const float* __restrict b, float* __restrict c,
               int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    const float* ai = a + i * k;
    float* ci = c + i * n;
    for (int64_t j = 0; j < n; ++j) {
      const float* bj = b + j * k;
      float acc = 0.0f;
      for (int64_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
      ci[j] += acc;
    }
  }
}

// c[k,n] += a[m,k]^T * b[m,n]
void mm_tn_acc(const float* __restrict a, const float* __restrict b, float* __restrict c,
               int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    const float* ai = a + i * k;
    const float* bi = b + i * n;
    for (int64_t p = 0; p < k; ++p) {
      const float ap = ai[p];
      float* cp = c + p * n;
      for (int64_t j = 0; j < n; ++j) cp[j] += ap * bi[j];
    }
  }
}

// Elementwise op scaffold: forward value and local derivative at each element.
template <typename Fwd, typename Dfdx>
Tensor elementwise(const Tensor& a, const char* op, Fwd fwd, Dfdx dfdx) {
  NodePtr in = a.node();
  NodePtr out = make_out(in->shape, {in});
  const size_t n = in->value.size();
  for (size_t i = 0; i < n; ++i) out->value[i] = fwd(in->value[i]);
  if (out->requires_grad) {
    Node* o = out.get();
    Node* x = in.get();
    out->vjp = [o, x, dfdx]() {
      x->ensure_grad();
      const size_t n = x->value.size();
      for (size_t i = 0; i < n; ++i) {
        x->grad[i] += o->grad[i] * dfdx(x->value[i], o->value[i]);
      }
    };
  }
  finish(out, op);
  return Tensor(out);
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    shape_fail("matmul", a.shape(), b.shape());
  }
  const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  NodePtr out = make_out({m, n}, {a.node(), b.node()});
  mm_nn(a.values().data(), b.values().data(), out->value.data(), m, k, n);
  if (out->requires_grad) {
    Node* o = out.get();
    Node* na = a.node().get();
    Node* nb = b.node().get();
    out->vjp = [o, na, nb, m, k, n]() {
      if (na->requires_grad) {
        na->ensure_grad();
        mm_nt_acc(o->grad.data(), nb->value.data(), na->grad.data(), m, n, k);
      }
      if (nb->requires_grad) {
        nb->ensure_grad();
        mm_tn_acc(na->value.data(), o->grad.data(), nb->grad.data(), m, k, n);
      }
    };
  }
  finish(out, "matmul");
  return Tensor(out);
}

Tensor add(const Tensor& a, const Tensor& b) {
  const bool same = a.shape() == b.shape();
  const bool row_bcast = !same && b.rank() == 1 && a.rank() == 2 && a.dim(1) == b.dim(0);
  if (!same && !row_bcast) shape_fail("add", a.shape(), b.shape());
  NodePtr out = make_out(a.shape(), {a.node(), b.node()});
  const float* av = a.values().data();
  const float* bv = b.values().data();
  float* ov = out->value.data();
  const size_t n = out->value.size();
  if (same) {
    for (size_t i = 0; i < n; ++i) ov[i] = av[i] + bv[i];
  } else {
    const size_t cols = static_cast<size_t>(b.dim(0));
    for (size_t i = 0; i < n; ++i) ov[i] = av[i] + bv[i % cols];
  }
  if (out->requires_grad) {
    Node* o = out.get();
    Node* na = a.node().get();
    Node* nb = b.node().get();
    out->vjp = [o, na, nb, same]() {
      const size_t n = o->value.size();
      if (na->requires_grad) {
        na->ensure_grad();
        for (size_t i = 0; i < n; ++i) na->grad[i] += o->grad[i];
      }
      if (nb->requires_grad) {
        nb->ensure_grad();
        if (same) {
          for (size_t i = 0; i < n; ++i) nb->grad[i] += o->grad[i];
        } else {
          const size_t cols = nb->value.size();
          for (size_t i = 0; i < n; ++i) nb->grad[i % cols] += o->grad[i];
        }
      }
    };
  }
  finish(out, "add");
  return Tensor(out);
}

Tensor sub(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_fail("sub", a.shape(), b.shape());
  NodePtr out = make_out(a.shape(), {a.node(), b.node()});
  const size_t n = out->value.size();
  for (size_t i = 0; i < n; ++i) out->value[i] = a.values()[i] - b.values()[i];
  if (out->requires_grad) {
    Node* o = out.get();
    Node* na = a.node().get();
    Node* nb = b.node().get();
    out->vjp = [o, na, nb]() {
      const size_t n = o->value.size();
      if (na->requires_grad) {
        na->ensure_grad();
        for (size_t i = 0; i < n; ++i) na->grad[i] += o->grad[i];
      }
      if (nb->requires_grad) {
        nb->ensure_grad();
        for (size_t i = 0; i < n; ++i) nb->grad[i] -= o->grad[i];
      }
    };
  }
  finish(out, "sub");
  return Tensor(out);
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_fail("mul", a.shape(), b.shape());
  NodePtr out = make_out(a.shape(), {a.node(), b.node()});
  const size_t n = out->value.size();
  for (size_t i = 0; i < n; ++i) out->value[i] = a.values()[i] * b.values()[i];
  if (out->requires_grad) {
    Node* o = out.get();
    Node* na = a.node().get();
    Node* nb = b.node().get();
    out->vjp = [o, na, nb]() {
      const size_t n = o->value.size();
      if (na->requires_grad) {
        na->ensure_grad();
        for (size_t i = 0; i < n; ++i) na->grad[i] += o->grad[i] * nb->value[i];
      }
      if (nb->requires_grad) {
        nb->ensure_grad();
        for (size_t i = 0; i < n; ++i) nb->grad[i] += o->grad[i] * na->value[i];
      }
    };
  }
  finish(out, "mul");
  return Tensor(out);
}

Tensor scale(const Tensor& a, float s) {
  NodePtr out = make_out(a.shape(), {a.node()});
  const size_t n = out->value.size();
  for (size_t i = 0; i < n; ++i) out->value[i] = a.values()[i] * s;
  if (out->requires_grad) {
    Node* o = out.get();
    Node* na = a.node().get();
    out->vjp = [o, na, s]() {
      na->ensure_grad();
      const size_t n = o->value.size();
      for (size_t i = 0; i < n; ++i) na->grad[i] += o->grad[i] * s;
    };
  }
  finish(out, "scale");
  return Tensor(out);
}

Tensor add_const(const Tensor& a, std::span<const float> c) {
  if (c.size() != a.node()->value.size()) {
    throw ShapeError("add_const: tensor " + shape_str(a.shape()) + " vs constant of " +
                     std::to_string(c.size()) + " values");
  }
  NodePtr out = make_out(a.shape(), {a.node()});
  const size_t n = out->value.size();
  for (size_t i = 0; i < n; ++i) out->value[i] = a.values()[i] + c[i];
  if (out->requires_grad) {
    Node* o = out.get();
    Node* na = a.node().get();
    out->vjp = [o, na]() {
      na->ensure_grad();
      const size_t n = o->value.size();
      for (size_t i = 0; i < n; ++i) na->grad[i] += o->grad[i];
    };
  }
  finish(out, "add_const");
  return Tensor(out);
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw ShapeError("transpose: expects rank 2, got " + shape_str(a.shape()));
  const int64_t m = a.dim(0), n = a.dim(1);
  NodePtr out = make_out({n, m}, {a.node()});
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t j = 0; j < n; ++j) out->value[j * m + i] = a.values()[i * n + j];
  }
  if (out->requires_grad) {
    Node* o = out.get();
    Node* na = a.node().get();
    out->vjp = [o, na, m, n]() {
      na->ensure_grad();
      for (int64_t i = 0; i < m; ++i) {
        for (int64_t j = 0; j < n; ++j) na->grad[i * n + j] += o->grad[j * m + i];
      }
    };
  }
  finish(out, "transpose");
  return Tensor(out);
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    shape_fail("reshape", a.shape(), shape);
  }
  NodePtr out = make_out(std::move(shape), {a.node()});
  out->value = a.node()->value;
  if (out->requires_grad) {
    Node* o = out.get();
    Node* na = a.node().get();
    out->vjp = [o, na]() {
      na->ensure_grad();
      const size_t n = o->value.size();
      for (size_t i = 0; i < n; ++i) na->grad[i] += o->grad[i];
    };
  }
  return Tensor(out);
}

Tensor slice_rows(const Tensor& a, int64_t r0, int64_t r1) {
  if (a.rank() != 2 || r0 < 0 || r1 > a.dim(0) || r0 >= r1) {
    throw ShapeError("slice_rows: [" + std::to_string(r0) + "," + std::to_string(r1) +
                     ") out of " + shape_str(a.shape()));
  }
  const int64_t cols = a.dim(1);
  NodePtr out = make_out({r1 - r0, cols}, {a.node()});
  std::memcpy(out->value.data(), a.values().data() + r0 * cols,
              static_cast<size_t>((r1 - r0) * cols) * sizeof(float));
  if (out->requires_grad) {
    Node* o = out.get();
    Node* na = a.node().get();
    out->vjp = [o, na, r0, cols]() {
      na->ensure_grad();
      const size_t n = o->value.size();
      for (size_t i = 0; i < n; ++i) na->grad[static_cast<size_t>(r0 * cols) + i] += o->grad[i];
    };
  }
  return Tensor(out);
}

Tensor slice_cols(const Tensor& a, int64_t c0, int64_t c1) {
  if (a.rank() != 2 || c0 < 0 || c1 > a.dim(1) || c0 >= c1) {
    throw ShapeError("slice_cols: [" + std::to_string(c0) + "," + std::to_string(c1) +
                     ") out of " + shape_str(a.shape()));
  }
  const int64_t rows = a.dim(0), cols = a.dim(1), w = c1 - c0;
  NodePtr out = make_out({rows, w}, {a.node()});
  for (int64_t i = 0; i < rows; ++i) {
    std::memcpy(out->value.data() + i * w, a.values().data() + i * cols + c0,
                static_cast<size_t>(w) * sizeof(float));
  }
  if (out->requires_grad) {
    Node* o = out.get();
    Node* na = a.node().get();
    out->vjp = [o, na, rows, cols, c0, w]() {
      na->ensure_grad();
      for (int64_t i = 0; i < rows; ++i) {
        for (int64_t j = 0; j < w; ++j) {
          na->grad[static_cast<size_t>(i * cols + c0 + j)] += o->grad[static_cast<size_t>(i * w + j)];
        }
      }
    };
  }
  return Tensor(out);
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const int64_t cols = parts[0].dim(1);
  int64_t rows = 0;
  std::vector<NodePtr> ins;
  for (const Tensor& p : parts) {
    if (p.rank() != 2 || p.dim(1) != cols) shape_fail("concat_rows", parts[0].shape(), p.shape());
    rows += p.dim(0);
    ins.push_back(p.node());
  }
  NodePtr out = make_out({rows, cols}, ins);
  int64_t r = 0;
  for (const Tensor& p : parts) {
    std::memcpy(out->value.data() + r * cols, p.values().data(),
                static_cast<size_t>(p.numel()) * sizeof(float));
    r += p.dim(0);
  }
  if (out->requires_grad) {
    Node* o = out.get();
    out->vjp = [o, cols]() {
      int64_t r = 0;
      for (auto& in : o->inputs) {
        const int64_t n = in->numel();
        if (in->requires_grad) {
          in->ensure_grad();
          for (int64_t i = 0; i < n; ++i) in->grad[static_cast<size_t>(i)] += o->grad[static_cast<size_t>(r * cols + i)];
        }
        r += in->shape[0];
      }
    };
  }
  finish(out, "concat_rows");
  return Tensor(out);
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const int64_t rows = parts[0].dim(0);
  int64_t cols = 0;
  std::vector<NodePtr> ins;
  for (const Tensor& p : parts) {
    if (p.rank() != 2 || p.dim(0) != rows) shape_fail("concat_cols", parts[0].shape(), p.shape());
    cols += p.dim(1);
    ins.push_back(p.node());
  }
  NodePtr out = make_out({rows, cols}, ins);
  int64_t c = 0;
  for (const Tensor& p : parts) {
    const int64_t w = p.dim(1);
    for (int64_t i = 0; i < rows; ++i) {
      std::memcpy(out->value.data() + i * cols + c, p.values().data() + i * w,
                  static_cast<size_t>(w) * sizeof(float));
    }
    c += w;
  }
  if (out->requires_grad) {
    Node* o = out.get();
    out->vjp = [o, rows, cols]() {
      int64_t c = 0;
      for (auto& in : o->inputs) {
        const int64_t w = in->shape[1];
        if (in->requires_grad) {
          in->ensure_grad();
          for (int64_t i = 0; i < rows; ++i) {
            for (int64_t j = 0; j < w; ++j) {
              in->grad[static_cast<size_t>(i * w + j)] += o->grad[static_cast<size_t>(i * cols + c + j)];
            }
          }
        }
        c += w;
      }
    };
  }
  finish(out, "concat_cols");
  return Tensor(out);
}

Tensor softmax_rows(const Tensor& a) {
  if (a.rank() != 2) throw ShapeError("softmax_rows: expects rank 2, got " + shape_str(a.shape()));
  const int64_t rows = a.dim(0), cols = a.dim(1);
  NodePtr out = make_out(a.shape(), {a.node()});
  for (int64_t i = 0; i < rows; ++i) {
    const float* x = a.values().data() + i * cols;
    float* y = out->value.data() + i * cols;
    float mx = x[0];
    for (int64_t j = 1; j < cols; ++j) mx = std::max(mx, x[j]);
    double denom = 0.0;
    for (int64_t j = 0; j < cols; ++j) denom += std::exp(static_cast<double>(x[j] - mx));
    for (int64_t j = 0; j < cols; ++j) {
      y[j] = static_cast<float>(std::exp(static_cast<double>(x[j] - mx)) / denom);
    }
  }
  if (out->requires_grad) {
    Node* o = out.get();
    Node* na = a.node().get();
    out->vjp = [o, na, rows, cols]() {
      na->ensure_grad();
      for (int64_t i = 0; i < rows; ++i) {
        const float* y = o->value.data() + i * cols;
        const float* dy = o->grad.data() + i * cols;
        float* dx = na->grad.data() + i * cols;
        double dot = 0.0;
        for (int64_t j = 0; j < cols; ++j) dot += static_cast<double>(y[j]) * dy[j];
        for (int64_t j = 0; j < cols; ++j) {
          dx[j] += y[j] * (dy[j] - static_cast<float>(dot));
        }
      }
    };
  }
  finish(out, "softmax_rows");
  return Tensor(out);
}

Tensor log(const Tensor& a) {
  return elementwise(
      a, "log", [](float x) { return static_cast<float>(std::log(static_cast<double>(x))); },
      [](float x, float) { return 1.0f / x; });
}

Tensor exp(const Tensor& a) {
  return elementwise(
      a, "exp", [](float x) { return static_cast<float>(std::exp(static_cast<double>(x))); },
      [](float, float y) { return y; });
}

Tensor relu(const Tensor& a) {
  return elementwise(
      a, "relu", [](float x) { return x > 0.0f ? x : 0.0f; },
      [](float x, float) { return x > 0.0f ? 1.0f : 0.0f; });
}

Tensor gelu(const Tensor& a) {
  constexpr double kInvSqrt2 = 0.7071067811865475244;
  constexpr double kInvSqrt2Pi = 0.3989422804014326779;
  return elementwise(
      a, "gelu",
      [](float x) {
        double xd = x;
        return static_cast<float>(0.5 * xd * (1.0 + std::erf(xd * kInvSqrt2)));
      },
      [](float x, float) {
        double xd = x;
        double cdf = 0.5 * (1.0 + std::erf(xd * kInvSqrt2));
        double pdf = kInvSqrt2Pi * std::exp(-0.5 * xd * xd);
        return static_cast<float>(cdf + xd * pdf);
      });
}

Tensor swish(const Tensor& a) {
  return elementwise(
      a, "swish",
      [](float x) {
        double s = 1.0 / (1.0 + std::exp(-static_cast<double>(x)));
        return static_cast<float>(x * s);
      },
      [](float x, float) {
        double s = 1.0 / (1.0 + std::exp(-static_cast<double>(x)));
        return static_cast<float>(s * (1.0 + x * (1.0 - s)));
      });
}

Tensor tanh(const Tensor& a) {
  return elementwise(
      a, "tanh", [](float x) { return static_cast<float>(std::tanh(static_cast<double>(x))); },
      [](float, float y) { return 1.0f - y * y; });
}

Tensor sigmoid(const Tensor& a) {
  return elementwise(
      a, "sigmoid",
      [](float x) { return static_cast<float>(1.0 / (1.0 + std::exp(-static_cast<double>(x)))); },
      [](float, float y) { return y * (1.0f - y); });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, float eps) {
  if (x.rank() != 2) throw ShapeError("layer_norm: expects rank 2, got " + shape_str(x.shape()));
  const int64_t rows = x.dim(0), cols = x.dim(1);
  if (gain.rank() != 1 || gain.dim(0) != cols) shape_fail("layer_norm gain", x.shape(), gain.shape());
  if (bias.rank() != 1 || bias.dim(0) != cols) shape_fail("layer_norm bias", x.shape(), bias.shape());

  NodePtr out = make_out(x.shape(), {x.node(), gain.node(), bias.node()});
  // Cache per-row inverse stddev and normalized values for the backward pass.
  auto inv_std = std::make_shared<std::vector<float>>(static_cast<size_t>(rows));
  auto x_hat = std::make_shared<std::vector<float>>(x.node()->value.size());
  const float* xv = x.values().data();
  const float* gv = gain.values().data();
  const float* bv = bias.values().data();
  for (int64_t i = 0; i < rows; ++i) {
    const float* xr = xv + i * cols;
    double mean = 0.0;
    for (int64_t j = 0; j < cols; ++j) mean += xr[j];
    mean /= static_cast<double>(cols);
    double var = 0.0;
    for (int64_t j = 0; j < cols; ++j) {
      double d = xr[j] - mean;
      var += d * d;
    }
    var /= static_cast<double>(cols);
    float inv = static_cast<float>(1.0 / std::sqrt(var + eps));
    (*inv_std)[static_cast<size_t>(i)] = inv;
    float* xh = x_hat->data() + i * cols;
    float* y = out->value.data() + i * cols;
    for (int64_t j = 0; j < cols; ++j) {
      xh[j] = static_cast<float>((xr[j] - mean) * inv);
      y[j] = xh[j] * gv[j] + bv[j];
    }
  }
  if (out->requires_grad) {
    Node* o = out.get();
    Node* nx = x.node().get();
    Node* ng = gain.node().get();
    Node* nb = bias.node().get();
    out->vjp = [o, nx, ng, nb, rows, cols, inv_std, x_hat]() {
      const float* gv = ng->value.data();
      for (int64_t i = 0; i < rows; ++i) {
        const float* dy = o->grad.data() + i * cols;
        const float* xh = x_hat->data() + i * cols;
        if (ng->requires_grad) {
          ng->ensure_grad();
          for (int64_t j = 0; j < cols; ++j) ng->grad[static_cast<size_t>(j)] += dy[j] * xh[j];
        }
        if (nb->requires_grad) {
          nb->ensure_grad();
          for (int64_t j = 0; j < cols; ++j) nb->grad[static_cast<size_t>(j)] += dy[j];
        }
        if (nx->requires_grad) {
          nx->ensure_grad();
          float* dx = nx->grad.data() + i * cols;
          double sum_dxh = 0.0, sum_dxh_xh = 0.0;
          for (int64_t j = 0; j < cols; ++j) {
            double dxh = static_cast<double>(dy[j]) * gv[j];
            sum_dxh += dxh;
            sum_dxh_xh += dxh * xh[j];
          }
          const double inv = (*inv_std)[static_cast<size_t>(i)];
          const double n = static_cast<double>(cols);
          for (int64_t j = 0; j < cols; ++j) {
            double dxh = static_cast<double>(dy[j]) * gv[j];
            dx[j] += static_cast<float>(inv * (dxh - sum_dxh / n - xh[j] * sum_dxh_xh / n));
          }
        }
      }
    };
  }
  finish(out, "layer_norm");
  return Tensor(out);
}

Tensor dropout(const Tensor& x, float p, RngStream rng, bool train) {
  if (p < 0.0f || p >= 1.0f) throw ConfigError("dropout: p must be in [0,1)");
  if (!train || p == 0.0f) return x;
  NodePtr out = make_out(x.shape(), {x.node()});
  const size_t n = out->value.size();
  auto keep = std::make_shared<std::vector<uint8_t>>(n);
  const float scale = 1.0f / (1.0f - p);
  for (size_t i = 0; i < n; ++i) {
    bool k = rng.uniform_f32() >= p;
    (*keep)[i] = k;
    out->value[i] = k ? x.values()[i] * scale : 0.0f;
  }
  if (out->requires_grad) {
    Node* o = out.get();
    Node* nx = x.node().get();
    out->vjp = [o, nx, keep, scale]() {
      nx->ensure_grad();
      const size_t n = o->value.size();
      for (size_t i = 0; i < n; ++i) {
        if ((*keep)[i]) nx->grad[i] += o->grad[i] * scale;
      }
    };
  }
  finish(out, "dropout");
  return Tensor(out);
}

Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids) {
  if (table.rank() != 2) throw ShapeError("embedding_lookup: table must be rank 2");
  const int64_t vocab = table.dim(0), dim = table.dim(1);
  for (int id : ids) {
    if (id < 0 || id >= vocab) {
      throw DataError("embedding_lookup: id " + std::to_string(id) + " out of vocab " +
                      std::to_string(vocab));
    }
  }
  const int64_t n = static_cast<int64_t>(ids.size());
  NodePtr out = make_out({n, dim}, {table.node()});
  for (int64_t i = 0; i < n; ++i) {
    std::memcpy(out->value.data() + i * dim, table.values().data() + ids[static_cast<size_t>(i)] * dim,
                static_cast<size_t>(dim) * sizeof(float));
  }
  if (out->requires_grad) {
    Node* o = out.get();
    Node* nt = table.node().get();
    auto ids_copy = std::make_shared<std::vector<int>>(ids);
    out->vjp = [o, nt, ids_copy, dim]() {
      nt->ensure_grad();
      for (size_t i = 0; i < ids_copy->size(); ++i) {
        float* dst = nt->grad.data() + (*ids_copy)[i] * dim;
        const float* src = o->grad.data() + static_cast<int64_t>(i) * dim;
        for (int64_t j = 0; j < dim; ++j) dst[j] += src[j];
      }
    };
  }
  finish(out, "embedding_lookup");
  return Tensor(out);
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
  if (x.rank() != 3 || w.rank() != 4) shape_fail("conv2d", x.shape(), w.shape());
  const int64_t cin = x.dim(0), h = x.dim(1), wd = x.dim(2);
  const int64_t cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  if (w.dim(1) != cin) shape_fail("conv2d channels", x.shape(), w.shape());
  if (b.rank() != 1 || b.dim(0) != cout) shape_fail("conv2d bias", w.shape(), b.shape());
  if (stride < 1) throw ConfigError("conv2d: stride must be >= 1");
  const int64_t ho = (h + 2 * pad - kh) / stride + 1;
  const int64_t wo = (wd + 2 * pad - kw) / stride + 1;
  if (ho < 1 || wo < 1) {
    throw DataError("conv2d: input " + shape_str(x.shape()) + " too short for kernel");
  }

  NodePtr out = make_out({cout, ho, wo}, {x.node(), w.node(), b.node()});
  const float* xv = x.values().data();
  const float* wv = w.values().data();
  const float* bv = b.values().data();
  for (int64_t co = 0; co < cout; ++co) {
    for (int64_t i = 0; i < ho; ++i) {
      for (int64_t j = 0; j < wo; ++j) {
        float acc = bv[co];
        for (int64_t ci = 0; ci < cin; ++ci) {
          for (int64_t ki = 0; ki < kh; ++ki) {
            const int64_t ii = i * stride - pad + ki;
            if (ii < 0 || ii >= h) continue;
            for (int64_t kj = 0; kj < kw; ++kj) {
              const int64_t jj = j * stride - pad + kj;
              if (jj < 0 || jj >= wd) continue;
              acc += xv[(ci * h + ii) * wd + jj] * wv[((co * cin + ci) * kh + ki) * kw + kj];
            }
          }
        }
        out->value[static_cast<size_t>((co * ho + i) * wo + j)] = acc;
      }
    }
  }
  if (out->requires_grad) {
    Node* o = out.get();
    Node* nx = x.node().get();
    Node* nw = w.node().get();
    Node* nb = b.node().get();
    const int64_t s = stride, p = pad;
    out->vjp = [o, nx, nw, nb, cin, h, wd, cout, kh, kw, ho, wo, s, p]() {
      const float* xv = nx->value.data();
      const float* wv = nw->value.data();
      if (nx->requires_grad) nx->ensure_grad();
      if (nw->requires_grad) nw->ensure_grad();
      if (nb->requires_grad) nb->ensure_grad();
      for (int64_t co = 0; co < cout; ++co) {
        for (int64_t i = 0; i < ho; ++i) {
          for (int64_t j = 0; j < wo; ++j) {
            const float g = o->grad[static_cast<size_t>((co * ho + i) * wo + j)];
            if (nb->requires_grad) nb->grad[static_cast<size_t>(co)] += g;
            for (int64_t ci = 0; ci < cin; ++ci) {
              for (int64_t ki = 0; ki < kh; ++ki) {
                const int64_t ii = i * s - p + ki;
                if (ii < 0 || ii >= h) continue;
                for (int64_t kj = 0; kj < kw; ++kj) {
                  const int64_t jj = j * s - p + kj;
                  if (jj < 0 || jj >= wd) continue;
                  const size_t xi = static_cast<size_t>((ci * h + ii) * wd + jj);
                  const size_t wi = static_cast<size_t>(((co * cin + ci) * kh + ki) * kw + kj);
                  if (nx->requires_grad) nx->grad[xi] += g * wv[wi];
                  if (nw->requires_grad) nw->grad[wi] += g * xv[xi];
                }
              }
            }
          }
        }
      }
    };
  }
  finish(out, "conv2d");
  return Tensor(out);
}

Tensor depthwise_conv1d(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.rank() != 2 || w.rank() != 2) shape_fail("depthwise_conv1d", x.shape(), w.shape());
  const int64_t t = x.dim(0), d = x.dim(1), k = w.dim(0);
  if (w.dim(1) != d) shape_fail("depthwise_conv1d channels", x.shape(), w.shape());
  if (k % 2 == 0) throw ConfigError("depthwise_conv1d: kernel must be odd, got " + std::to_string(k));
  if (b.rank() != 1 || b.dim(0) != d) shape_fail("depthwise_conv1d bias", w.shape(), b.shape());
  const int64_t off = (k - 1) / 2;

  NodePtr out = make_out(x.shape(), {x.node(), w.node(), b.node()});
  const float* xv = x.values().data();
  const float* wv = w.values().data();
  const float* bv = b.values().data();
  for (int64_t i = 0; i < t; ++i) {
    float* y = out->value.data() + i * d;
    for (int64_t j = 0; j < d; ++j) y[j] = bv[j];
    for (int64_t ki = 0; ki < k; ++ki) {
      const int64_t ii = i + ki - off;
      if (ii < 0 || ii >= t) continue;
      const float* xr = xv + ii * d;
      const float* wr = wv + ki * d;
      for (int64_t j = 0; j < d; ++j) y[j] += xr[j] * wr[j];
    }
  }
  if (out->requires_grad) {
    Node* o = out.get();
    Node* nx = x.node().get();
    Node* nw = w.node().get();
    Node* nb = b.node().get();
    out->vjp = [o, nx, nw, nb, t, d, k, off]() {
      const float* xv = nx->value.data();
      const float* wv = nw->value.data();
      if (nx->requires_grad) nx->ensure_grad();
      if (nw->requires_grad) nw->ensure_grad();
      if (nb->requires_grad) nb->ensure_grad();
      for (int64_t i = 0; i < t; ++i) {
        const float* g = o->grad.data() + i * d;
        if (nb->requires_grad) {
          for (int64_t j = 0; j < d; ++j) nb->grad[static_cast<size_t>(j)] += g[j];
        }
        for (int64_t ki = 0; ki < k; ++ki) {
          const int64_t ii = i + ki - off;
          if (ii < 0 || ii >= t) continue;
          const float* xr = xv + ii * d;
          const float* wr = wv + ki * d;
          for (int64_t j = 0; j < d; ++j) {
            if (nx->requires_grad) nx->grad[static_cast<size_t>(ii * d + j)] += g[j] * wr[j];
            if (nw->requires_grad) nw->grad[static_cast<size_t>(ki * d + j)] += g[j] * xr[j];
          }
        }
      }
    };
  }
  finish(out, "depthwise_conv1d");
  return Tensor(out);
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets,
                     const std::vector<uint8_t>& mask) {
  if (logits.rank() != 2) throw ShapeError("cross_entropy: logits must be rank 2");
  const int64_t n = logits.dim(0), c = logits.dim(1);
  if (static_cast<int64_t>(targets.size()) != n || static_cast<int64_t>(mask.size()) != n) {
    throw ShapeError("cross_entropy: logits rows " + std::to_string(n) + " vs targets " +
                     std::to_string(targets.size()) + " / mask " + std::to_string(mask.size()));
  }
  int64_t m = 0;
  for (int64_t i = 0; i < n; ++i) {
    if (!mask[static_cast<size_t>(i)]) continue;
    ++m;
    const int y = targets[static_cast<size_t>(i)];
    if (y < 0 || y >= c) {
      throw DataError("cross_entropy: target " + std::to_string(y) + " out of " + std::to_string(c) +
                      " classes at row " + std::to_string(i));
    }
  }
  if (m == 0) throw DataError("cross_entropy: mask selects no rows");

  NodePtr out = make_out({1}, {logits.node()});
  double total = 0.0;
  const float* z = logits.values().data();
  for (int64_t i = 0; i < n; ++i) {
    if (!mask[static_cast<size_t>(i)]) continue;
    const float* zi = z + i * c;
    float mx = zi[0];
    for (int64_t j = 1; j < c; ++j) mx = std::max(mx, zi[j]);
    double denom = 0.0;
    for (int64_t j = 0; j < c; ++j) denom += std::exp(static_cast<double>(zi[j] - mx));
    total += std::log(denom) + mx - zi[targets[static_cast<size_t>(i)]];
  }
  out->value[0] = static_cast<float>(total / static_cast<double>(m));

  if (out->requires_grad) {
    Node* o = out.get();
    Node* nl = logits.node().get();
    auto tc = std::make_shared<std::vector<int>>(targets);
    auto mc = std::make_shared<std::vector<uint8_t>>(mask);
    out->vjp = [o, nl, tc, mc, n, c, m]() {
      nl->ensure_grad();
      const float g = o->grad[0] / static_cast<float>(m);
      const float* z = nl->value.data();
      for (int64_t i = 0; i < n; ++i) {
        if (!(*mc)[static_cast<size_t>(i)]) continue;
        const float* zi = z + i * c;
        float* dz = nl->grad.data() + i * c;
        float mx = zi[0];
        for (int64_t j = 1; j < c; ++j) mx = std::max(mx, zi[j]);
        double denom = 0.0;
        for (int64_t j = 0; j < c; ++j) denom += std::exp(static_cast<double>(zi[j] - mx));
        for (int64_t j = 0; j < c; ++j) {
          float p = static_cast<float>(std::exp(static_cast<double>(zi[j] - mx)) / denom);
          dz[j] += g * (p - (j == (*tc)[static_cast<size_t>(i)] ? 1.0f : 0.0f));
        }
      }
    };
  }
  finish(out, "cross_entropy");
  return Tensor(out);
}

Tensor cosine_similarity(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_fail("cosine_similarity", a.shape(), b.shape());
  constexpr double kEps = 1e-8;
  const size_t n = a.node()->value.size();
  const float* av = a.values().data();
  const float* bv = b.values().data();
  double dot = 0.0, na2 = 0.0, nb2 = 0.0;
  for (size_t i = 0; i < n; ++i) {
    dot += static_cast<double>(av[i]) * bv[i];
    na2 += static_cast<double>(av[i]) * av[i];
    nb2 += static_cast<double>(bv[i]) * bv[i];
  }
  const double na = std::max(std::sqrt(na2), kEps);
  const double nb = std::max(std::sqrt(nb2), kEps);
  const double s = dot / (na * nb);

  NodePtr out = make_out({1}, {a.node(), b.node()});
  out->value[0] = static_cast<float>(s);
  if (out->requires_grad) {
    Node* o = out.get();
    Node* xa = a.node().get();
    Node* xb = b.node().get();
    out->vjp = [o, xa, xb, na, nb, s, n]() {
      const float g = o->grad[0];
      const float* av = xa->value.data();
      const float* bv = xb->value.data();
      if (xa->requires_grad) {
        xa->ensure_grad();
        for (size_t i = 0; i < n; ++i) {
          xa->grad[i] += g * static_cast<float>(bv[i] / (na * nb) - s * av[i] / (na * na));
        }
      }
      if (xb->requires_grad) {
        xb->ensure_grad();
        for (size_t i = 0; i < n; ++i) {
          xb->grad[i] += g * static_cast<float>(av[i] / (na * nb) - s * bv[i] / (nb * nb));
        }
      }
    };
  }
  finish(out, "cosine_similarity");
  return Tensor(out);
}

Tensor row_l2_normalize(const Tensor& a, float eps) {
  if (a.rank() != 2) throw ShapeError("row_l2_normalize: expects rank 2, got " + shape_str(a.shape()));
  const int64_t rows = a.dim(0), cols = a.dim(1);
  NodePtr out = make_out(a.shape(), {a.node()});
  auto norms = std::make_shared<std::vector<float>>(static_cast<size_t>(rows));
  auto floored = std::make_shared<std::vector<uint8_t>>(static_cast<size_t>(rows));
  for (int64_t i = 0; i < rows; ++i) {
    const float* x = a.values().data() + i * cols;
    double ss = 0.0;
    for (int64_t j = 0; j < cols; ++j) ss += static_cast<double>(x[j]) * x[j];
    double nrm = std::sqrt(ss);
    bool fl = nrm < eps;
    if (fl) nrm = eps;
    (*norms)[static_cast<size_t>(i)] = static_cast<float>(nrm);
    (*floored)[static_cast<size_t>(i)] = fl;
    float* y = out->value.data() + i * cols;
    for (int64_t j = 0; j < cols; ++j) y[j] = static_cast<float>(x[j] / nrm);
  }
  if (out->requires_grad) {
    Node* o = out.get();
    Node* nx = a.node().get();
    out->vjp = [o, nx, rows, cols, norms, floored]() {
      nx->ensure_grad();
      for (int64_t i = 0; i < rows; ++i) {
        const float* y = o->value.data() + i * cols;
        const float* dy = o->grad.data() + i * cols;
        float* dx = nx->grad.data() + i * cols;
        const float nrm = (*norms)[static_cast<size_t>(i)];
        if ((*floored)[static_cast<size_t>(i)]) {
          // Below the floor the map is x/eps, a plain scaling.
          for (int64_t j = 0; j < cols; ++j) dx[j] += dy[j] / nrm;
        } else {
          double dot = 0.0;
          for (int64_t j = 0; j < cols; ++j) dot += static_cast<double>(y[j]) * dy[j];
          for (int64_t j = 0; j < cols; ++j) {
            dx[j] += static_cast<float>((dy[j] - y[j] * dot) / nrm);
          }
        }
      }
    };
  }
  finish(out, "row_l2_normalize");
  return Tensor(out);
}

Tensor sum(const Tensor& a) {
  NodePtr out = make_out({1}, {a.node()});
  double acc = 0.0;
  for (float v : a.values()) acc += v;
  out->value[0] = static_cast<float>(acc);
  if (out->requires_grad) {
    Node* o = out.get();
    Node* nx = a.node().get();
    out->vjp = [o, nx]() {
      nx->ensure_grad();
      const float g = o->grad[0];
      for (float& d : nx->grad) d += g;
    };
  }
  finish(out, "sum");
  return Tensor(out);
}

Tensor mean(const Tensor& a) {
  const int64_t n = a.numel();
  NodePtr out = make_out({1}, {a.node()});
  double acc = 0.0;
  for (float v : a.values()) acc += v;
  out->value[0] = static_cast<float>(acc / static_cast<double>(n));
  if (out->requires_grad) {
    Node* o = out.get();
    Node* nx = a.node().get();
    out->vjp = [o, nx, n]() {
      nx->ensure_grad();
      const float g = o->grad[0] / static_cast<float>(n);
      for (float& d : nx->grad) d += g;
    };
  }
  finish(out, "mean");
  return Tensor(out);
}

Tensor mask_rows(const Tensor& x, const std::vector<uint8_t>& mask, const Tensor& emb) {
  if (x.rank() != 2) throw ShapeError("mask_rows: expects rank 2, got " + shape_str(x.shape()));
  const int64_t t = x.dim(0), d = x.dim(1);
  if (static_cast<int64_t>(mask.size()) != t) {
    throw ShapeError("mask_rows: mask length " + std::to_string(mask.size()) + " vs rows " +
                     std::to_string(t));
  }
  if (emb.rank() != 1 || emb.dim(0) != d) shape_fail("mask_rows embedding", x.shape(), emb.shape());

  NodePtr out = make_out(x.shape(), {x.node(), emb.node()});
  for (int64_t i = 0; i < t; ++i) {
    const float* src = mask[static_cast<size_t>(i)] ? emb.values().data() : x.values().data() + i * d;
    std::memcpy(out->value.data() + i * d, src, static_cast<size_t>(d) * sizeof(float));
  }
  if (out->requires_grad) {
    Node* o = out.get();
    Node* nx = x.node().get();
    Node* ne = emb.node().get();
    auto mc = std::make_shared<std::vector<uint8_t>>(mask);
    out->vjp = [o, nx, ne, mc, t, d]() {
      if (nx->requires_grad) nx->ensure_grad();
      if (ne->requires_grad) ne->ensure_grad();
      for (int64_t i = 0; i < t; ++i) {
        const float* g = o->grad.data() + i * d;
        if ((*mc)[static_cast<size_t>(i)]) {
          if (ne->requires_grad) {
            for (int64_t j = 0; j < d; ++j) ne->grad[static_cast<size_t>(j)] += g[j];
          }
        } else if (nx->requires_grad) {
          float* dx = nx->grad.data() + i * d;
          for (int64_t j = 0; j < d; ++j) dx[j] += g[j];
        }
      }
    };
  }
  finish(out, "mask_rows");
  return Tensor(out);
}

Tensor add_causal_mask(const Tensor& scores) {
  if (scores.rank() != 2 || scores.dim(0) != scores.dim(1)) {
    throw ShapeError("add_causal_mask: expects square matrix, got " + shape_str(scores.shape()));
  }
  const int64_t n = scores.dim(0);
  NodePtr out = make_out(scores.shape(), {scores.node()});
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t j = 0; j < n; ++j) {
      out->value[static_cast<size_t>(i * n + j)] =
          scores.values()[static_cast<size_t>(i * n + j)] + (j > i ? -1e9f : 0.0f);
    }
  }
  if (out->requires_grad) {
    Node* o = out.get();
    Node* nx = scores.node().get();
    out->vjp = [o, nx]() {
      nx->ensure_grad();
      const size_t n = o->value.size();
      for (size_t i = 0; i < n; ++i) nx->grad[i] += o->grad[i];
    };
  }
  finish(out, "add_causal_mask");
  return Tensor(out);
}

Tensor move_channels_last(const Tensor& x) {
  if (x.rank() != 3) throw ShapeError("move_channels_last: expects rank 3, got " + shape_str(x.shape()));
  const int64_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  NodePtr out = make_out({h, c * w}, {x.node()});
  for (int64_t ci = 0; ci < c; ++ci) {
    for (int64_t hi = 0; hi < h; ++hi) {
      for (int64_t wi = 0; wi < w; ++wi) {
        out->value[static_cast<size_t>(hi * (c * w) + ci * w + wi)] =
            x.values()[static_cast<size_t>((ci * h + hi) * w + wi)];
      }
    }
  }
  if (out->requires_grad) {
    Node* o = out.get();
    Node* nx = x.node().get();
    out->vjp = [o, nx, c, h, w]() {
      nx->ensure_grad();
      for (int64_t ci = 0; ci < c; ++ci) {
        for (int64_t hi = 0; hi < h; ++hi) {
          for (int64_t wi = 0; wi < w; ++wi) {
            nx->grad[static_cast<size_t>((ci * h + hi) * w + wi)] +=
                o->grad[static_cast<size_t>(hi * (c * w) + ci * w + wi)];
          }
        }
      }
    };
  }
  return Tensor(out);
}

std::vector<int> argmax_rows(const Tensor& t) {
  if (t.rank() != 2) throw ShapeError("argmax_rows: expects rank 2, got " + shape_str(t.shape()));
  const int64_t rows = t.dim(0), cols = t.dim(1);
  std::vector<int> out(static_cast<size_t>(rows));
  for (int64_t i = 0; i < rows; ++i) {
    const float* x = t.values().data() + i * cols;
    int best = 0;
    for (int64_t j = 1; j < cols; ++j) {
      if (x[j] > x[best]) best = static_cast<int>(j);
    }
    out[static_cast<size_t>(i)] = best;
  }
  return out;
}

double masked_accuracy(const Tensor& logits, const std::vector<int>& targets,
                       const std::vector<uint8_t>& mask) {
  std::vector<int> pred = argmax_rows(logits);
  int64_t hit = 0, total = 0;
  for (size_t i = 0; i < pred.size(); ++i) {
    if (!mask[i]) continue;
    ++total;
    if (pred[i] == targets[i]) ++hit;
  }
  return total == 0 ? 0.0 : static_cast<double>(hit) / static_cast<double>(total);
}

}  // namespace seau::ad
