#pragma once

// Tape-based reverse-mode differentiation. A Graph records one forward pass
// as an append-only list of nodes (inputs always precede their consumers);
// backward() walks the tape once in reverse and may be called only once.
//
// Parameters are referenced by address: Graph::parameter(t) registers the
// tensor t as a differentiable leaf, and parameter_grad(t) reads its gradient
// after backward. The tensor must outlive the graph and must not be mutated
// while the graph is alive.

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <unordered_map>
#include <vector>

#include "sinet/tensor.hpp"

namespace sinet {

enum class OpKind : std::uint8_t {
  kConstant,
  kLeaf,
  kParameter,
  kMatmul,
  kTranspose,
  kRowSoftmax,
  kTanh,
  kSigmoid,
  kRelu,
  kAdd,
  kSub,
  kMul,
  kScale,
  kBroadcastAdd,
  kBroadcastMul,
  kReduceMeanRows,
  kReduceSum,
  kConcat,
  kSlice,
  kReshape,
  kCrossEntropy,
  kBatchNormTrain,
  kBatchNormEval,
  kGatherRow,
};

template <typename T>
class Graph;

template <typename T>
class Var {
 public:
  Var() = default;
  Var(Graph<T>* graph, std::uint32_t id) : graph_(graph), id_(id) {}

  bool valid() const { return graph_ != nullptr; }
  Graph<T>& graph() const { return *graph_; }
  std::uint32_t id() const { return id_; }
  const Tensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  Graph<T>* graph_ = nullptr;
  std::uint32_t id_ = 0;
};

template <typename T>
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::uint32_t)>;

  // With record_gradients == false the graph only evaluates: no backward
  // closures are kept and backward() throws.
  explicit Graph(bool record_gradients = true) : record_gradients_(record_gradients) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var<T> constant(Tensor<T> value);
  Var<T> leaf(Tensor<T> value);
  Var<T> parameter(const Tensor<T>& param);

  Var<T> record(OpKind kind, Tensor<T> value, std::initializer_list<Var<T>> inputs,
                BackwardFn backward);
  Var<T> record(OpKind kind, Tensor<T> value, std::span<const Var<T>> inputs,
                BackwardFn backward);

  void backward(Var<T> loss);

  bool records_gradients() const { return record_gradients_; }
  bool consumed() const { return consumed_; }
  std::size_t size() const { return nodes_.size(); }
  OpKind kind(std::uint32_t id) const { return nodes_.at(id).kind; }
  bool requires_grad(std::uint32_t id) const { return nodes_.at(id).requires_grad; }

  const Tensor<T>& value(std::uint32_t id) const { return nodes_[id].value; }
  const Tensor<T>& value(Var<T> v) const { return nodes_[v.id()].value; }

  // Gradient of the last backward() root with respect to v. Zeros when v was
  // not reached. Throws GraphError before backward or when v is constant.
  const Tensor<T>& grad(Var<T> v) const;
  // Gradient for a registered parameter; zeros when it never entered the graph.
  Tensor<T> parameter_grad(const Tensor<T>& param) const;

  // Backward-closure helpers.
  std::uint32_t input(std::uint32_t node, std::size_t slot) const { return nodes_[node].inputs[slot]; }
  std::size_t input_count(std::uint32_t node) const { return nodes_[node].inputs.size(); }
  const Tensor<T>& output_grad(std::uint32_t node) const { return nodes_[node].grad; }
  // Accumulation buffer for an input's gradient (allocated as zeros on first
  // use), or nullptr when that input does not require a gradient.
  Tensor<T>* input_grad(std::uint32_t input_id);

 private:
  struct Node {
    OpKind kind;
    bool requires_grad = false;
    bool has_grad = false;
    std::vector<std::uint32_t> inputs;
    Tensor<T> value;
    Tensor<T> grad;
    BackwardFn backward;
  };

  Var<T> push(Node node);

  bool record_gradients_;
  bool consumed_ = false;
  std::vector<Node> nodes_;
  std::unordered_map<const Tensor<T>*, std::uint32_t> parameter_ids_;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
  return graph_->value(id_);
}

// ---------------------------------------------------------------------------
// Differentiable operations. Rank 1 operands are column vectors where a matrix
// is expected.

// [m x k] * [k x n] -> [m x n]; [m x k] * [k] -> [m].
template <typename T>
Var<T> matmul(Var<T> a, Var<T> b);

template <typename T>
Var<T> transpose(Var<T> a);

// Softmax along the last axis (each row of a matrix; the whole of a vector),
// stabilized by subtracting the row maximum. Non-finite input is a NumericError.
template <typename T>
Var<T> row_softmax(Var<T> x);

template <typename T>
Var<T> tanh(Var<T> x);
template <typename T>
Var<T> sigmoid(Var<T> x);
template <typename T>
Var<T> relu(Var<T> x);

template <typename T>
Var<T> add(Var<T> a, Var<T> b);
template <typename T>
Var<T> sub(Var<T> a, Var<T> b);
template <typename T>
Var<T> mul(Var<T> a, Var<T> b);
template <typename T>
Var<T> scale(Var<T> x, T factor);

// out[:, j] = vec + mat[:, j]
template <typename T>
Var<T> broadcast_add(Var<T> vec, Var<T> mat);
// out[:, j] = vec (.) mat[:, j]
template <typename T>
Var<T> broadcast_mul(Var<T> vec, Var<T> mat);

// [m x n] -> [n], the mean over rows.
template <typename T>
Var<T> reduce_mean_rows(Var<T> x);
// Any shape -> [1].
template <typename T>
Var<T> reduce_sum(Var<T> x);

// Rank 1 parts joined end to end (axis 0), or rank 2 parts stacked along
// axis 0 (rows) or axis 1 (columns).
template <typename T>
Var<T> concat(std::span<const Var<T>> parts, std::size_t axis);
template <typename T>
Var<T> concat(std::initializer_list<Var<T>> parts, std::size_t axis) {
  return concat<T>(std::span<const Var<T>>(parts.begin(), parts.size()), axis);
}

// Half-open range [begin, end) along axis, copied.
template <typename T>
Var<T> slice(Var<T> x, std::size_t axis, std::size_t begin, std::size_t end);

template <typename T>
Var<T> reshape(Var<T> x, Shape shape);

// Column j of a matrix as a vector.
template <typename T>
Var<T> column(Var<T> x, std::size_t j) {
  return reshape(slice(x, 1, j, j + 1), Shape{x.shape()[0]});
}

// Vectors [d] laid side by side as columns of a [d x n] matrix.
template <typename T>
Var<T> stack_columns(std::span<const Var<T>> columns);

// Mean of -log softmax(logits)[label] over samples. logits is [C] with one
// label, or [C x B] with one label per column.
template <typename T>
Var<T> cross_entropy(Var<T> logits, std::span<const std::size_t> labels);

// Batch normalization of x[d x n] over the n axis. Writes the batch mean and
// biased variance used to batch_mean / batch_var when non-null.
template <typename T>
Var<T> batch_norm_train(Var<T> x, Var<T> gamma, Var<T> beta, T eps,
                        Tensor<T>* batch_mean = nullptr, Tensor<T>* batch_var = nullptr);

// Normalization by fixed statistics: gamma (.) (x - mean) / sqrt(var + eps) + beta.
template <typename T>
Var<T> batch_norm_eval(Var<T> x, Var<T> gamma, Var<T> beta, const Tensor<T>& mean,
                       const Tensor<T>& var, T eps);

// Row `row` of a [V x D] matrix as a [D] vector; the gradient lands in that row only.
template <typename T>
Var<T> gather_row(Var<T> table, std::size_t row);

template <typename T>
Var<T> operator+(Var<T> a, Var<T> b) {
  return add(a, b);
}
template <typename T>
Var<T> operator-(Var<T> a, Var<T> b) {
  return sub(a, b);
}
template <typename T>
Var<T> operator*(Var<T> a, Var<T> b) {
  return mul(a, b);
}

}  // namespace sinet
