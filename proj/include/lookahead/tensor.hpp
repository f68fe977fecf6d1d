#pragma once

// Dense f64 tensors and a record-per-forward tape for reverse-mode
// differentiation. Only the operations the dialogue model needs are
// provided: matrix products, elementwise maps, concatenation, row gathers,
// softmax and the two likelihood losses.

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace lookahead {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Row-major array of doubles with an optional same-shape gradient buffer.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  std::size_t rank() const { return shape_.size(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  bool has_grad() const { return !grad_.empty(); }
  /// Allocates the gradient buffer (zero-filled) if absent.
  std::span<double> grad();
  std::span<const double> grad() const { return grad_; }
  void zero_grad();
  void drop_grad() { grad_.clear(); }

  /// Uniform(-scale, scale) initialisation.
  void randomize(std::mt19937_64& rng, double scale);

  bool operator==(const Tensor& other) const {
    return shape_ == other.shape_ && data_ == other.data_;
  }

 private:
  Shape shape_;
  std::vector<double> data_;
  std::vector<double> grad_;
};

class Graph;

/// Handle to a value recorded on a Graph.
class Var {
 public:
  Var() = default;
  Var(Graph* graph, std::uint32_t id) : graph_(graph), id_(id) {}

  Graph* graph() const { return graph_; }
  std::uint32_t id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

  const Shape& shape() const;
  std::size_t size() const;
  std::span<const double> value() const;
  double item() const;
  std::vector<double> to_vector() const;

 private:
  Graph* graph_ = nullptr;
  std::uint32_t id_ = 0;
};

/// Dynamic tape. Nodes are appended in execution order, so the record is
/// topologically sorted by construction and backward walks it in reverse.
class Graph {
 public:
  enum class Op : std::uint8_t {
    kParam,
    kConstant,
    kMatmul,
    kAdd,
    kSub,
    kMul,
    kSigmoid,
    kTanh,
    kConcat,
    kRow,
    kElement,
    kMean,
    kDot,
    kScale,
    kScaleConst,
    kSum,
    kSoftmax,
    kCrossEntropy,
    kLogisticLoss,
  };

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Leaf bound to a parameter tensor. When `trainable` is false the
  /// parameter participates in the forward pass but receives no gradient.
  Var param(Tensor& tensor, bool trainable = true);
  /// Forward-only parameter leaf.
  Var param(const Tensor& tensor);
  Var constant(const Tensor& tensor);
  Var constant(Shape shape, std::vector<double> values);
  Var zeros(std::size_t n);

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var sigmoid(Var a);
  Var tanh(Var a);
  Var concat(std::span<const Var> parts);
  /// Row `index` of a rank-2 value, as a vector.
  Var row(Var matrix, std::size_t index);
  /// Entry `index` of a vector, as a scalar.
  Var element(Var v, std::size_t index);
  Var mean(std::span<const Var> parts);
  Var dot(Var a, Var b);
  /// scalar * vector, where the scalar is itself a recorded value.
  Var scale(Var scalar, Var v);
  Var scale(Var v, double factor);
  Var sum(Var a);
  Var softmax(Var logits);
  /// -log softmax(logits)[target].
  Var cross_entropy(Var logits, std::size_t target);
  /// Binary cross-entropy of sigmoid(logit) against label in {0,1}.
  Var logistic_loss(Var logit, double label);

  /// Accumulates d(loss)/d(param) into every trainable parameter reachable
  /// from `loss`. Gradients add to whatever the parameter buffers hold.
  void backward(Var loss);

  std::size_t node_count() const { return nodes_.size(); }
  bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }

 private:
  friend class Var;

  struct Node {
    Op op = Op::kConstant;
    bool requires_grad = false;
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    std::vector<double> saved;
    std::vector<std::uint32_t> inputs;
    const Tensor* param = nullptr;
    Tensor* param_grad = nullptr;
    double aux = 0.0;
    std::size_t index = 0;
  };

  const double* value_ptr(const Node& n) const {
    return n.param != nullptr ? n.param->data().data() : n.value.data();
  }
  std::span<const double> value_span(std::uint32_t id) const;
  Var push(Node node);
  Node& node(Var v);
  void check(Var v) const;
  double* grad_ptr(std::uint32_t id);

  std::vector<Node> nodes_;
};

// Free-function spellings of the primitive ops.
inline Var matmul(Var a, Var b) { return a.graph()->matmul(a, b); }
inline Var operator+(Var a, Var b) { return a.graph()->add(a, b); }
inline Var operator-(Var a, Var b) { return a.graph()->sub(a, b); }
inline Var operator*(Var a, Var b) { return a.graph()->mul(a, b); }
inline Var sigmoid(Var a) { return a.graph()->sigmoid(a); }
inline Var tanh(Var a) { return a.graph()->tanh(a); }
inline Var softmax(Var a) { return a.graph()->softmax(a); }
inline Var cross_entropy(Var logits, std::size_t target) {
  return logits.graph()->cross_entropy(logits, target);
}
inline void backward(Var loss) { loss.graph()->backward(loss); }

/// Numerically stable logistic function.
double stable_sigmoid(double x);

}  // namespace lookahead
