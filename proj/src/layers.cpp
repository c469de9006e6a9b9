#include "sinet/layers.hpp"

#include <cmath>

namespace sinet {

template <typename T>
void xavier_uniform(Tensor<T>& t, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (T& v : t.storage()) v = static_cast<T>(dist(rng));
}

// ---------------------------------------------------------------------------

template <typename T>
Linear<T>::Linear(std::size_t in, std::size_t out, bool bias)
    : weight({out, in}), bias({out}), has_bias(bias) {}

template <typename T>
void Linear<T>::init(Rng& rng) {
  xavier_uniform(weight, in_dim(), out_dim(), rng);
  bias.fill(T(0));
}

template <typename T>
Var<T> Linear<T>::forward(Graph<T>& g, Var<T> x) const {
  if (x.shape().empty() || x.shape()[0] != in_dim()) {
    throw ShapeError("linear: expected input dim " + std::to_string(in_dim()) + ", got " +
                     shape_string(x.shape()));
  }
  Var<T> y = matmul(g.parameter(weight), x);
  if (!has_bias) return y;
  Var<T> b = g.parameter(bias);
  return y.shape().size() == 1 ? add(y, b) : broadcast_add(b, y);
}

template <typename T>
void Linear<T>::collect(const std::string& prefix, TensorList<T>& params) {
  params.push_back({prefix + ".weight", &weight});
  if (has_bias) params.push_back({prefix + ".bias", &bias});
}

// ---------------------------------------------------------------------------

template <typename T>
BatchNorm<T>::BatchNorm(std::size_t dim, T momentum_, T eps_)
    : gamma({dim}, T(1)),
      beta({dim}, T(0)),
      running_mean({dim}, T(0)),
      running_var({dim}, T(1)),
      momentum(momentum_),
      eps(eps_) {}

template <typename T>
Var<T> BatchNorm<T>::forward(Graph<T>& g, Var<T> x, const Pass& pass) {
  const bool vector_input = x.shape().size() == 1;
  Var<T> in = vector_input ? reshape(x, Shape{x.shape()[0], 1}) : x;
  if (in.shape().size() != 2 || in.shape()[0] != dim()) {
    throw ShapeError("batch norm: expected [" + std::to_string(dim()) + " x n], got " +
                     shape_string(x.shape()));
  }
  Var<T> out;
  if (pass.training()) {
    Tensor<T> mean;
    Tensor<T> var;
    out = batch_norm_train(in, g.parameter(gamma), g.parameter(beta), eps, &mean, &var);
    const T n = static_cast<T>(in.shape()[1]);
    const T unbias = n / (n - T(1));
    for (std::size_t i = 0; i < dim(); ++i) {
      running_mean[i] = (T(1) - momentum) * running_mean[i] + momentum * mean[i];
      running_var[i] = (T(1) - momentum) * running_var[i] + momentum * var[i] * unbias;
    }
  } else {
    out = batch_norm_eval(in, g.parameter(gamma), g.parameter(beta), running_mean, running_var, eps);
  }
  return vector_input ? reshape(out, Shape{dim()}) : out;
}

template <typename T>
void BatchNorm<T>::collect(const std::string& prefix, TensorList<T>& params, TensorList<T>& buffers) {
  params.push_back({prefix + ".gamma", &gamma});
  params.push_back({prefix + ".beta", &beta});
  buffers.push_back({prefix + ".running_mean", &running_mean});
  buffers.push_back({prefix + ".running_var", &running_var});
}

// ---------------------------------------------------------------------------

template <typename T>
Var<T> dropout(Graph<T>& g, Var<T> x, double rate, const Pass& pass) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout rate must lie in [0, 1)");
  if (!pass.training() || rate == 0.0) return x;
  if (!pass.rng) throw ConfigError("dropout in train mode needs an rng");
  std::bernoulli_distribution keep(1.0 - rate);
  const T kept = static_cast<T>(1.0 / (1.0 - rate));
  Tensor<T> mask(x.shape());
  for (T& m : mask.storage()) m = keep(*pass.rng) ? kept : T(0);
  return mul(x, g.constant(std::move(mask)));
}

// ---------------------------------------------------------------------------

template <typename T>
MlpBlock<T>::MlpBlock(std::size_t in, const std::vector<std::size_t>& widths, double rate)
    : dropout_rate(rate) {
  if (widths.empty()) throw ConfigError("mlp block needs at least one stage");
  if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout rate must lie in [0, 1)");
  std::size_t prev = in;
  for (std::size_t w : widths) {
    stages.push_back({BatchNorm<T>(prev), Linear<T>(prev, w)});
    prev = w;
  }
}

template <typename T>
void MlpBlock<T>::init(Rng& rng) {
  for (Stage& s : stages) s.fc.init(rng);
}

template <typename T>
Var<T> MlpBlock<T>::forward(Graph<T>& g, Var<T> x, const Pass& pass) {
  if (x.shape().size() != 2 || x.shape()[0] != in_dim()) {
    throw ShapeError("mlp: expected [" + std::to_string(in_dim()) + " x n], got " + shape_string(x.shape()));
  }
  if (x.shape()[1] == 0) throw EmptyInputError("mlp: empty batch");
  const Pass norm_pass = (pass.training() && x.shape()[1] < 2) ? Pass{Mode::kEval, pass.rng} : pass;
  Var<T> h = x;
  for (Stage& s : stages) {
    h = s.norm.forward(g, h, norm_pass);
    h = s.fc.forward(g, h);
    h = dropout(g, h, dropout_rate, pass);
    h = relu(h);
  }
  return h;
}

template <typename T>
void MlpBlock<T>::collect(const std::string& prefix, TensorList<T>& params, TensorList<T>& buffers) {
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const std::string p = prefix + ".stage" + std::to_string(i);
    stages[i].norm.collect(p + ".bn", params, buffers);
    stages[i].fc.collect(p + ".fc", params);
  }
}

// ---------------------------------------------------------------------------

template <typename T>
LstmCell<T>::LstmCell(std::size_t input, std::size_t hidden)
    : w_ih({4 * hidden, input}), w_hh({4 * hidden, hidden}), bias({4 * hidden}) {}

template <typename T>
void LstmCell<T>::init(Rng& rng) {
  const std::size_t h = hidden_dim();
  xavier_uniform(w_ih, input_dim(), h, rng);
  xavier_uniform(w_hh, h, h, rng);
  bias.fill(T(0));
  for (std::size_t i = h; i < 2 * h; ++i) bias[i] = T(1);
}

template <typename T>
LstmState<T> LstmCell<T>::zero_state(Graph<T>& g) const {
  return {g.constant(Tensor<T>({hidden_dim()})), g.constant(Tensor<T>({hidden_dim()}))};
}

template <typename T>
LstmState<T> LstmCell<T>::step(Graph<T>& g, Var<T> x, const LstmState<T>& prev) const {
  const std::size_t h = hidden_dim();
  if (x.shape() != Shape{input_dim()}) {
    throw ShapeError("lstm: expected input [" + std::to_string(input_dim()) + "], got " + shape_string(x.shape()));
  }
  if (prev.h.shape() != Shape{h} || prev.c.shape() != Shape{h}) throw ShapeError("lstm: state shape mismatch");
  Var<T> gates = add(add(matmul(g.parameter(w_ih), x), matmul(g.parameter(w_hh), prev.h)), g.parameter(bias));
  Var<T> i = sigmoid(slice(gates, 0, 0, h));
  Var<T> f = sigmoid(slice(gates, 0, h, 2 * h));
  Var<T> cand = tanh(slice(gates, 0, 2 * h, 3 * h));
  Var<T> o = sigmoid(slice(gates, 0, 3 * h, 4 * h));
  Var<T> c = add(mul(f, prev.c), mul(i, cand));
  return {mul(o, tanh(c)), c};
}

template <typename T>
void LstmCell<T>::collect(const std::string& prefix, TensorList<T>& params) {
  params.push_back({prefix + ".w_ih", &w_ih});
  params.push_back({prefix + ".w_hh", &w_hh});
  params.push_back({prefix + ".bias", &bias});
}

// ---------------------------------------------------------------------------

template <typename T>
void Embedding<T>::init(Rng& rng) {
  xavier_uniform(table, vocab_size(), dim(), rng);
}

template <typename T>
Var<T> Embedding<T>::lookup(Graph<T>& g, std::size_t id) const {
  return gather_row(g.parameter(table), id);
}

template <typename T>
void Embedding<T>::collect(const std::string& prefix, TensorList<T>& params) {
  params.push_back({prefix + ".table", &table});
}

#define SINET_INSTANTIATE_LAYERS(T)                                                  \
  template void xavier_uniform<T>(Tensor<T>&, std::size_t, std::size_t, Rng&);       \
  template class Linear<T>;                                                          \
  template class BatchNorm<T>;                                                       \
  template Var<T> dropout<T>(Graph<T>&, Var<T>, double, const Pass&);                \
  template class MlpBlock<T>;                                                        \
  template class LstmCell<T>;                                                        \
  template class Embedding<T>;

SINET_INSTANTIATE_LAYERS(float)
SINET_INSTANTIATE_LAYERS(double)

#undef SINET_INSTANTIATE_LAYERS

}  // namespace sinet
