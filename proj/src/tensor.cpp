#include "lookahead/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace lookahead {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i != 0) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

namespace {

void require_positive(const Shape& shape) {
  if (shape.empty()) throw ShapeError("tensor shape must have at least one extent");
  for (auto extent : shape) {
    if (extent == 0) throw ShapeError("tensor extents must be positive: " + shape_string(shape));
  }
}

void require_finite(std::span<const double> values, const char* op) {
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericError(std::string("non-finite value produced by ") + op);
  }
}

std::size_t rows_of(const Shape& s) { return s[0]; }
std::size_t cols_of(const Shape& s) { return s.size() == 1 ? 1 : s[1]; }

}  // namespace

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  require_positive(shape_);
  data_.assign(shape_size(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  require_positive(shape_);
  if (data_.size() != shape_size(shape_)) {
    throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " +
                     shape_string(shape_));
  }
}

std::span<double> Tensor::grad() {
  if (grad_.size() != data_.size()) grad_.assign(data_.size(), 0.0);
  return grad_;
}

void Tensor::zero_grad() { grad_.assign(data_.size(), 0.0); }

void Tensor::randomize(std::mt19937_64& rng, double scale) {
  std::uniform_real_distribution<double> dist(-scale, scale);
  for (auto& v : data_) v = dist(rng);
}

// ---------------------------------------------------------------------------
// Var

const Shape& Var::shape() const { return graph_->nodes_[id_].shape; }
std::size_t Var::size() const { return shape_size(shape()); }
std::span<const double> Var::value() const { return graph_->value_span(id_); }

double Var::item() const {
  if (size() != 1) throw ShapeError("item() on non-scalar value " + shape_string(shape()));
  return value()[0];
}

std::vector<double> Var::to_vector() const {
  auto v = value();
  return {v.begin(), v.end()};
}

// ---------------------------------------------------------------------------
// Graph: forward

std::span<const double> Graph::value_span(std::uint32_t id) const {
  const Node& n = nodes_[id];
  return {value_ptr(n), shape_size(n.shape)};
}

Graph::Node& Graph::node(Var v) { return nodes_[v.id()]; }

void Graph::check(Var v) const {
  if (v.graph() != this || v.id() >= nodes_.size()) {
    throw std::invalid_argument("value does not belong to this graph");
  }
}

Var Graph::push(Node n) {
  if (n.param == nullptr) require_finite(n.value, "graph op");
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Graph::param(Tensor& tensor, bool trainable) {
  Node n;
  n.op = Op::kParam;
  n.shape = tensor.shape();
  n.param = &tensor;
  n.param_grad = trainable ? &tensor : nullptr;
  n.requires_grad = trainable;
  return push(std::move(n));
}

Var Graph::param(const Tensor& tensor) {
  Node n;
  n.op = Op::kParam;
  n.shape = tensor.shape();
  n.param = &tensor;
  return push(std::move(n));
}

Var Graph::constant(const Tensor& tensor) {
  auto data = tensor.data();
  return constant(tensor.shape(), std::vector<double>(data.begin(), data.end()));
}

Var Graph::constant(Shape shape, std::vector<double> values) {
  require_positive(shape);
  if (values.size() != shape_size(shape)) throw ShapeError("constant: data/shape mismatch");
  Node n;
  n.op = Op::kConstant;
  n.shape = std::move(shape);
  n.value = std::move(values);
  return push(std::move(n));
}

Var Graph::zeros(std::size_t n) { return constant({n}, std::vector<double>(n, 0.0)); }

namespace {

// Four independent partial sums so the loop vectorises.
double dot_kernel(const double* a, const double* b, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t j = 0;
  for (; j + 4 <= n; j += 4) {
    s0 += a[j] * b[j];
    s1 += a[j + 1] * b[j + 1];
    s2 += a[j + 2] * b[j + 2];
    s3 += a[j + 3] * b[j + 3];
  }
  for (; j < n; ++j) s0 += a[j] * b[j];
  return (s0 + s1) + (s2 + s3);
}

}  // namespace

Var Graph::matmul(Var a, Var b) {
  check(a);
  check(b);
  const Shape& sa = node(a).shape;
  const Shape& sb = node(b).shape;
  if (sa.size() != 2 || sb.size() > 2) {
    throw ShapeError("matmul expects a matrix on the left, got " + shape_string(sa));
  }
  const std::size_t m = sa[0], k = sa[1];
  const std::size_t n = cols_of(sb);
  if (rows_of(sb) != k) {
    throw ShapeError("matmul inner dimensions disagree: " + shape_string(sa) + " x " +
                     shape_string(sb));
  }
  Node out;
  out.op = Op::kMatmul;
  out.shape = sb.size() == 1 ? Shape{m} : Shape{m, n};
  out.value.assign(m * n, 0.0);
  const double* pa = value_ptr(node(a));
  const double* pb = value_ptr(node(b));
  if (n == 1) {
    for (std::size_t i = 0; i < m; ++i) {
      out.value[i] = dot_kernel(pa + i * k, pb, k);
    }
  } else {
    for (std::size_t i = 0; i < m; ++i) {
      double* orow = out.value.data() + i * n;
      for (std::size_t j = 0; j < k; ++j) {
        const double aij = pa[i * k + j];
        const double* brow = pb + j * n;
        for (std::size_t c = 0; c < n; ++c) orow[c] += aij * brow[c];
      }
    }
  }
  out.inputs = {a.id(), b.id()};
  out.requires_grad = node(a).requires_grad || node(b).requires_grad;
  return push(std::move(out));
}

namespace {

template <typename F>
void binary_values(std::span<const double> a, std::span<const double> b, std::vector<double>& out,
                   F f) {
  out.resize(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i]);
}

}  // namespace

#define LOOKAHEAD_BINARY(NAME, OPCODE, EXPR)                                                  \
  Var Graph::NAME(Var a, Var b) {                                                             \
    check(a);                                                                                 \
    check(b);                                                                                 \
    if (node(a).shape != node(b).shape) {                                                     \
      throw ShapeError(std::string(#NAME) + ": shape mismatch " + shape_string(node(a).shape) + \
                       " vs " + shape_string(node(b).shape));                                 \
    }                                                                                         \
    Node out;                                                                                 \
    out.op = OPCODE;                                                                          \
    out.shape = node(a).shape;                                                                \
    binary_values(value_span(a.id()), value_span(b.id()), out.value,                          \
                  [](double x, double y) { return EXPR; });                                   \
    out.inputs = {a.id(), b.id()};                                                            \
    out.requires_grad = node(a).requires_grad || node(b).requires_grad;                       \
    return push(std::move(out));                                                              \
  }

LOOKAHEAD_BINARY(add, Op::kAdd, x + y)
LOOKAHEAD_BINARY(sub, Op::kSub, x - y)
LOOKAHEAD_BINARY(mul, Op::kMul, x* y)

#undef LOOKAHEAD_BINARY

Var Graph::sigmoid(Var a) {
  check(a);
  Node out;
  out.op = Op::kSigmoid;
  out.shape = node(a).shape;
  auto in = value_span(a.id());
  out.value.resize(in.size());
  std::transform(in.begin(), in.end(), out.value.begin(), stable_sigmoid);
  out.inputs = {a.id()};
  out.requires_grad = node(a).requires_grad;
  return push(std::move(out));
}

Var Graph::tanh(Var a) {
  check(a);
  Node out;
  out.op = Op::kTanh;
  out.shape = node(a).shape;
  auto in = value_span(a.id());
  out.value.resize(in.size());
  std::transform(in.begin(), in.end(), out.value.begin(), [](double x) { return std::tanh(x); });
  out.inputs = {a.id()};
  out.requires_grad = node(a).requires_grad;
  return push(std::move(out));
}

Var Graph::concat(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat of nothing");
  Node out;
  out.op = Op::kConcat;
  std::size_t total = 0;
  for (Var p : parts) {
    check(p);
    if (node(p).shape.size() != 1) throw ShapeError("concat expects vectors");
    auto v = value_span(p.id());
    out.value.insert(out.value.end(), v.begin(), v.end());
    total += v.size();
    out.inputs.push_back(p.id());
    out.requires_grad = out.requires_grad || node(p).requires_grad;
  }
  out.shape = {total};
  return push(std::move(out));
}

Var Graph::row(Var matrix, std::size_t index) {
  check(matrix);
  const Shape& s = node(matrix).shape;
  if (s.size() != 2) throw ShapeError("row() expects a matrix");
  if (index >= s[0]) throw std::out_of_range("row index " + std::to_string(index) + " out of range");
  Node out;
  out.op = Op::kRow;
  out.shape = {s[1]};
  const double* base = value_ptr(node(matrix)) + index * s[1];
  out.value.assign(base, base + s[1]);
  out.inputs = {matrix.id()};
  out.index = index;
  out.requires_grad = node(matrix).requires_grad;
  return push(std::move(out));
}

Var Graph::element(Var v, std::size_t index) {
  check(v);
  if (node(v).shape.size() != 1) throw ShapeError("element() expects a vector");
  if (index >= node(v).shape[0]) throw std::out_of_range("element index out of range");
  Node out;
  out.op = Op::kElement;
  out.shape = {1};
  out.value = {value_span(v.id())[index]};
  out.inputs = {v.id()};
  out.index = index;
  out.requires_grad = node(v).requires_grad;
  return push(std::move(out));
}

Var Graph::mean(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("mean of nothing");
  Node out;
  out.op = Op::kMean;
  out.shape = node(parts[0]).shape;
  out.value.assign(shape_size(out.shape), 0.0);
  for (Var p : parts) {
    check(p);
    if (node(p).shape != out.shape) throw ShapeError("mean: shape mismatch");
    auto v = value_span(p.id());
    for (std::size_t i = 0; i < v.size(); ++i) out.value[i] += v[i];
    out.inputs.push_back(p.id());
    out.requires_grad = out.requires_grad || node(p).requires_grad;
  }
  const double inv = 1.0 / static_cast<double>(parts.size());
  for (auto& x : out.value) x *= inv;
  return push(std::move(out));
}

Var Graph::dot(Var a, Var b) {
  check(a);
  check(b);
  if (node(a).shape != node(b).shape) throw ShapeError("dot: shape mismatch");
  auto va = value_span(a.id());
  auto vb = value_span(b.id());
  Node out;
  out.op = Op::kDot;
  out.shape = {1};
  out.value = {std::inner_product(va.begin(), va.end(), vb.begin(), 0.0)};
  out.inputs = {a.id(), b.id()};
  out.requires_grad = node(a).requires_grad || node(b).requires_grad;
  return push(std::move(out));
}

Var Graph::scale(Var scalar, Var v) {
  check(scalar);
  check(v);
  if (shape_size(node(scalar).shape) != 1) throw ShapeError("scale: first operand must be scalar");
  const double s = value_span(scalar.id())[0];
  auto in = value_span(v.id());
  Node out;
  out.op = Op::kScale;
  out.shape = node(v).shape;
  out.value.resize(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out.value[i] = s * in[i];
  out.inputs = {scalar.id(), v.id()};
  out.requires_grad = node(scalar).requires_grad || node(v).requires_grad;
  return push(std::move(out));
}

Var Graph::scale(Var v, double factor) {
  check(v);
  auto in = value_span(v.id());
  Node out;
  out.op = Op::kScaleConst;
  out.shape = node(v).shape;
  out.value.resize(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out.value[i] = factor * in[i];
  out.aux = factor;
  out.inputs = {v.id()};
  out.requires_grad = node(v).requires_grad;
  return push(std::move(out));
}

Var Graph::sum(Var a) {
  check(a);
  auto in = value_span(a.id());
  Node out;
  out.op = Op::kSum;
  out.shape = {1};
  out.value = {std::accumulate(in.begin(), in.end(), 0.0)};
  out.inputs = {a.id()};
  out.requires_grad = node(a).requires_grad;
  return push(std::move(out));
}

namespace {

// Max-shifted softmax; returns log-sum-exp of the input as a by-product.
double softmax_into(std::span<const double> in, std::vector<double>& out) {
  const double m = *std::max_element(in.begin(), in.end());
  out.resize(in.size());
  double total = 0.0;
  for (std::size_t i = 0; i < in.size(); ++i) {
    out[i] = std::exp(in[i] - m);
    total += out[i];
  }
  const double inv = 1.0 / total;
  for (auto& x : out) x *= inv;
  return m + std::log(total);
}

}  // namespace

Var Graph::softmax(Var logits) {
  check(logits);
  if (node(logits).shape.size() != 1) throw ShapeError("softmax expects a vector");
  Node out;
  out.op = Op::kSoftmax;
  out.shape = node(logits).shape;
  softmax_into(value_span(logits.id()), out.value);
  out.inputs = {logits.id()};
  out.requires_grad = node(logits).requires_grad;
  return push(std::move(out));
}

Var Graph::cross_entropy(Var logits, std::size_t target) {
  check(logits);
  if (node(logits).shape.size() != 1) throw ShapeError("cross_entropy expects a vector of logits");
  auto in = value_span(logits.id());
  if (target >= in.size()) {
    throw std::out_of_range("cross_entropy target " + std::to_string(target) +
                            " out of range for " + std::to_string(in.size()) + " classes");
  }
  Node out;
  out.op = Op::kCrossEntropy;
  out.shape = {1};
  const double lse = softmax_into(in, out.saved);
  out.value = {std::max(0.0, lse - in[target])};
  out.index = target;
  out.inputs = {logits.id()};
  out.requires_grad = node(logits).requires_grad;
  return push(std::move(out));
}

Var Graph::logistic_loss(Var logit, double label) {
  check(logit);
  if (shape_size(node(logit).shape) != 1) throw ShapeError("logistic_loss expects a scalar logit");
  const double s = value_span(logit.id())[0];
  Node out;
  out.op = Op::kLogisticLoss;
  out.shape = {1};
  // softplus(s) - label * s, written to avoid overflow for large |s|.
  out.value = {std::max(s, 0.0) - label * s + std::log1p(std::exp(-std::abs(s)))};
  out.aux = label;
  out.inputs = {logit.id()};
  out.requires_grad = node(logit).requires_grad;
  return push(std::move(out));
}

// ---------------------------------------------------------------------------
// Graph: backward

double* Graph::grad_ptr(std::uint32_t id) {
  Node& n = nodes_[id];
  if (n.param != nullptr) return n.param_grad->grad().data();
  if (n.grad.empty()) n.grad.assign(shape_size(n.shape), 0.0);
  return n.grad.data();
}

void Graph::backward(Var loss) {
  check(loss);
  if (shape_size(node(loss).shape) != 1) {
    throw ShapeError("backward requires a scalar loss, got " + shape_string(node(loss).shape));
  }
  for (auto& n : nodes_) n.grad.clear();
  if (!node(loss).requires_grad) return;
  grad_ptr(loss.id())[0] += 1.0;

  for (std::uint32_t id = loss.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.requires_grad || n.param != nullptr || n.grad.empty()) continue;
    for (auto in : n.inputs) {
      if (in >= id) throw std::logic_error("graph is not topologically ordered");
    }
    const double* g = n.grad.data();
    const std::size_t len = shape_size(n.shape);
    auto wants = [&](std::size_t k) { return nodes_[n.inputs[k]].requires_grad; };

    switch (n.op) {
      case Op::kParam:
      case Op::kConstant:
        break;
      case Op::kMatmul: {
        const Shape& sa = nodes_[n.inputs[0]].shape;
        const std::size_t m = sa[0], k = sa[1];
        const std::size_t cols = len / m;
        const double* pa = value_ptr(nodes_[n.inputs[0]]);
        const double* pb = value_ptr(nodes_[n.inputs[1]]);
        if (wants(0)) {
          double* ga = grad_ptr(n.inputs[0]);
          for (std::size_t i = 0; i < m; ++i) {
            double* garow = ga + i * k;
            for (std::size_t c = 0; c < cols; ++c) {
              const double gic = g[i * cols + c];
              if (gic == 0.0) continue;
              for (std::size_t j = 0; j < k; ++j) garow[j] += gic * pb[j * cols + c];
            }
          }
        }
        if (wants(1)) {
          double* gb = grad_ptr(n.inputs[1]);
          for (std::size_t i = 0; i < m; ++i) {
            const double* arow = pa + i * k;
            for (std::size_t c = 0; c < cols; ++c) {
              const double gic = g[i * cols + c];
              if (gic == 0.0) continue;
              for (std::size_t j = 0; j < k; ++j) gb[j * cols + c] += arow[j] * gic;
            }
          }
        }
        break;
      }
      case Op::kAdd:
      case Op::kSub: {
        const double sign = n.op == Op::kAdd ? 1.0 : -1.0;
        if (wants(0)) {
          double* ga = grad_ptr(n.inputs[0]);
          for (std::size_t i = 0; i < len; ++i) ga[i] += g[i];
        }
        if (wants(1)) {
          double* gb = grad_ptr(n.inputs[1]);
          for (std::size_t i = 0; i < len; ++i) gb[i] += sign * g[i];
        }
        break;
      }
      case Op::kMul: {
        const double* pa = value_ptr(nodes_[n.inputs[0]]);
        const double* pb = value_ptr(nodes_[n.inputs[1]]);
        if (wants(0)) {
          double* ga = grad_ptr(n.inputs[0]);
          for (std::size_t i = 0; i < len; ++i) ga[i] += g[i] * pb[i];
        }
        if (wants(1)) {
          double* gb = grad_ptr(n.inputs[1]);
          for (std::size_t i = 0; i < len; ++i) gb[i] += g[i] * pa[i];
        }
        break;
      }
      case Op::kSigmoid: {
        double* ga = grad_ptr(n.inputs[0]);
        for (std::size_t i = 0; i < len; ++i) ga[i] += g[i] * n.value[i] * (1.0 - n.value[i]);
        break;
      }
      case Op::kTanh: {
        double* ga = grad_ptr(n.inputs[0]);
        for (std::size_t i = 0; i < len; ++i) ga[i] += g[i] * (1.0 - n.value[i] * n.value[i]);
        break;
      }
      case Op::kConcat: {
        std::size_t offset = 0;
        for (std::size_t k = 0; k < n.inputs.size(); ++k) {
          const std::size_t part = shape_size(nodes_[n.inputs[k]].shape);
          if (wants(k)) {
            double* gp = grad_ptr(n.inputs[k]);
            for (std::size_t i = 0; i < part; ++i) gp[i] += g[offset + i];
          }
          offset += part;
        }
        break;
      }
      case Op::kRow: {
        double* gm = grad_ptr(n.inputs[0]) + n.index * len;
        for (std::size_t i = 0; i < len; ++i) gm[i] += g[i];
        break;
      }
      case Op::kElement:
        grad_ptr(n.inputs[0])[n.index] += g[0];
        break;
      case Op::kMean: {
        const double inv = 1.0 / static_cast<double>(n.inputs.size());
        for (std::size_t k = 0; k < n.inputs.size(); ++k) {
          if (!wants(k)) continue;
          double* gp = grad_ptr(n.inputs[k]);
          for (std::size_t i = 0; i < len; ++i) gp[i] += g[i] * inv;
        }
        break;
      }
      case Op::kDot: {
        const std::size_t dim = shape_size(nodes_[n.inputs[0]].shape);
        const double* pa = value_ptr(nodes_[n.inputs[0]]);
        const double* pb = value_ptr(nodes_[n.inputs[1]]);
        if (wants(0)) {
          double* ga = grad_ptr(n.inputs[0]);
          for (std::size_t i = 0; i < dim; ++i) ga[i] += g[0] * pb[i];
        }
        if (wants(1)) {
          double* gb = grad_ptr(n.inputs[1]);
          for (std::size_t i = 0; i < dim; ++i) gb[i] += g[0] * pa[i];
        }
        break;
      }
      case Op::kScale: {
        const double s = value_ptr(nodes_[n.inputs[0]])[0];
        const double* pv = value_ptr(nodes_[n.inputs[1]]);
        if (wants(0)) {
          double acc = 0.0;
          for (std::size_t i = 0; i < len; ++i) acc += g[i] * pv[i];
          grad_ptr(n.inputs[0])[0] += acc;
        }
        if (wants(1)) {
          double* gv = grad_ptr(n.inputs[1]);
          for (std::size_t i = 0; i < len; ++i) gv[i] += g[i] * s;
        }
        break;
      }
      case Op::kScaleConst: {
        double* ga = grad_ptr(n.inputs[0]);
        for (std::size_t i = 0; i < len; ++i) ga[i] += g[i] * n.aux;
        break;
      }
      case Op::kSum: {
        const std::size_t dim = shape_size(nodes_[n.inputs[0]].shape);
        double* ga = grad_ptr(n.inputs[0]);
        for (std::size_t i = 0; i < dim; ++i) ga[i] += g[0];
        break;
      }
      case Op::kSoftmax: {
        double inner = 0.0;
        for (std::size_t i = 0; i < len; ++i) inner += g[i] * n.value[i];
        double* ga = grad_ptr(n.inputs[0]);
        for (std::size_t i = 0; i < len; ++i) ga[i] += n.value[i] * (g[i] - inner);
        break;
      }
      case Op::kCrossEntropy: {
        double* ga = grad_ptr(n.inputs[0]);
        for (std::size_t i = 0; i < n.saved.size(); ++i) ga[i] += g[0] * n.saved[i];
        ga[n.index] -= g[0];
        break;
      }
      case Op::kLogisticLoss: {
        const double s = value_ptr(nodes_[n.inputs[0]])[0];
        grad_ptr(n.inputs[0])[0] += g[0] * (stable_sigmoid(s) - n.aux);
        break;
      }
    }
  }
}

}  // namespace lookahead
