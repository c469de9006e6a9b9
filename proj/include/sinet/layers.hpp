#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "sinet/autograd.hpp"

namespace sinet {

using Rng = std::mt19937_64;

enum class Mode { kTrain, kEval };

// Per-forward settings: train/eval behaviour and the dropout mask source.
struct Pass {
  Mode mode = Mode::kEval;
  Rng* rng = nullptr;

  bool training() const { return mode == Mode::kTrain; }
  static Pass eval() { return {}; }
  static Pass train(Rng& rng) { return {Mode::kTrain, &rng}; }
};

// A model tensor with its checkpoint name.
template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T>* tensor;
};

template <typename T>
using TensorList = std::vector<NamedTensor<T>>;

// Fills t with U(-a, a), a = sqrt(6 / (fan_in + fan_out)).
template <typename T>
void xavier_uniform(Tensor<T>& t, std::size_t fan_in, std::size_t fan_out, Rng& rng);

template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(std::size_t in, std::size_t out, bool bias = true);

  // Xavier-uniform weights, zero bias.
  void init(Rng& rng);

  // x is [in] or [in x n].
  Var<T> forward(Graph<T>& g, Var<T> x) const;

  std::size_t in_dim() const { return weight.shape()[1]; }
  std::size_t out_dim() const { return weight.shape()[0]; }
  void collect(const std::string& prefix, TensorList<T>& params);

  Tensor<T> weight;  // [out x in]
  Tensor<T> bias;    // [out]
  bool has_bias = true;
};

template <typename T>
class BatchNorm {
 public:
  BatchNorm() = default;
  explicit BatchNorm(std::size_t dim, T momentum = T(0.1), T eps = T(1e-5));

  // x is [d x n] (or [d], treated as n = 1). Train mode normalizes over the
  // n axis and folds the batch statistics into the running estimates:
  //   running = (1 - momentum) * running + momentum * batch
  // (the variance estimate uses the unbiased batch variance). Eval mode
  // normalizes by the running statistics only.
  Var<T> forward(Graph<T>& g, Var<T> x, const Pass& pass);

  std::size_t dim() const { return gamma.size(); }
  void collect(const std::string& prefix, TensorList<T>& params, TensorList<T>& buffers);

  Tensor<T> gamma;
  Tensor<T> beta;
  Tensor<T> running_mean;
  Tensor<T> running_var;
  T momentum = T(0.1);
  T eps = T(1e-5);
};

// Inverted dropout: identity in eval mode or at rate 0; in train mode each
// entry is kept with probability 1 - rate and scaled by 1 / (1 - rate).
template <typename T>
Var<T> dropout(Graph<T>& g, Var<T> x, double rate, const Pass& pass);

// Stages of (batch norm, linear, dropout, relu), applied in order.
template <typename T>
class MlpBlock {
 public:
  struct Stage {
    BatchNorm<T> norm;
    Linear<T> fc;
  };

  MlpBlock() = default;
  MlpBlock(std::size_t in, const std::vector<std::size_t>& widths, double dropout_rate = 0.0);

  void init(Rng& rng);

  // x is [in x n], n >= 1. With n == 1 in train mode batch statistics are
  // undefined, so the stages normalize by their running statistics instead.
  Var<T> forward(Graph<T>& g, Var<T> x, const Pass& pass);

  std::size_t in_dim() const { return stages.front().fc.in_dim(); }
  std::size_t out_dim() const { return stages.back().fc.out_dim(); }
  void collect(const std::string& prefix, TensorList<T>& params, TensorList<T>& buffers);

  std::vector<Stage> stages;
  double dropout_rate = 0.0;
};

template <typename T>
struct LstmState {
  Var<T> h;
  Var<T> c;
};

// Gate order (input, forget, cell candidate, output) along the 4h axis.
template <typename T>
class LstmCell {
 public:
  LstmCell() = default;
  LstmCell(std::size_t input, std::size_t hidden);

  // Xavier-uniform weights; bias zero except the forget slice, set to 1.
  void init(Rng& rng);

  LstmState<T> zero_state(Graph<T>& g) const;
  LstmState<T> step(Graph<T>& g, Var<T> x, const LstmState<T>& prev) const;

  std::size_t input_dim() const { return w_ih.shape()[1]; }
  std::size_t hidden_dim() const { return w_hh.shape()[1]; }
  void collect(const std::string& prefix, TensorList<T>& params);

  Tensor<T> w_ih;  // [4h x in]
  Tensor<T> w_hh;  // [4h x h]
  Tensor<T> bias;  // [4h]
};

template <typename T>
class Embedding {
 public:
  Embedding() = default;
  Embedding(std::size_t vocab, std::size_t dim) : table({vocab, dim}) {}

  void init(Rng& rng);
  // Row `id`; VocabError when out of range.
  Var<T> lookup(Graph<T>& g, std::size_t id) const;

  std::size_t vocab_size() const { return table.shape()[0]; }
  std::size_t dim() const { return table.shape()[1]; }
  void collect(const std::string& prefix, TensorList<T>& params);

  Tensor<T> table;  // [vocab x dim]
};

}  // namespace sinet
