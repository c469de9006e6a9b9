#include "sinet/attention.hpp"

#include <cmath>

namespace sinet {
namespace {

bool all_valid(const Mask& mask) {
  for (bool v : mask) {
    if (!v) return false;
  }
  return true;
}

void check_mask(const Mask& mask, std::size_t n, const char* op) {
  if (!mask.empty() && mask.size() != n) {
    throw ShapeError(std::string(op) + ": mask of " + std::to_string(mask.size()) + " for " +
                     std::to_string(n) + " items");
  }
  if (n == 0) throw EmptyInputError(std::string(op) + ": no items");
}

}  // namespace

template <typename T>
Tensor<T> mask_bias(std::size_t rows, std::size_t n, const Mask& mask) {
  Tensor<T> bias({rows, n});
  if (mask.empty()) return bias;
  std::size_t valid = 0;
  for (std::size_t j = 0; j < n; ++j) {
    if (mask[j]) {
      ++valid;
    } else {
      for (std::size_t i = 0; i < rows; ++i) bias(i, j) = static_cast<T>(kMaskedLogit);
    }
  }
  if (valid == 0) throw EmptyInputError("attention: every position is masked");
  return bias;
}

template <typename T>
AttentionOutput<T> dot_product_attend(Var<T> scores_input, Var<T> values, const Mask& mask, T scale_by) {
  Graph<T>& g = scores_input.graph();
  const std::size_t n = scores_input.shape().at(1);
  check_mask(mask, n, "dot-product attention");
  if (values.shape().size() != 2 || values.shape()[1] != n) {
    throw ShapeError("dot-product attention: values " + shape_string(values.shape()) + " for " +
                     std::to_string(n) + " items");
  }
  Var<T> logits = scale(matmul(transpose(scores_input), scores_input), T(1) / scale_by);
  if (!all_valid(mask)) logits = add(logits, g.constant(mask_bias<T>(n, n, mask)));
  Var<T> weights = row_softmax(logits);
  Var<T> rows = matmul(weights, transpose(values));  // [N x d']
  Var<T> attended;
  if (all_valid(mask)) {
    attended = reduce_mean_rows(rows);
  } else {
    std::size_t valid = 0;
    for (bool v : mask) valid += v ? 1 : 0;
    Tensor<T> avg({n});
    for (std::size_t j = 0; j < n; ++j) avg[j] = mask[j] ? T(1) / static_cast<T>(valid) : T(0);
    attended = matmul(transpose(rows), g.constant(std::move(avg)));
  }
  return {attended, weights};
}

template <typename T>
AttentionOutput<T> alpha_attend(Var<T> scores_input, Var<T> values, Var<T> w, const Mask& mask) {
  Graph<T>& g = scores_input.graph();
  const std::size_t d = scores_input.shape().at(0);
  const std::size_t n = scores_input.shape().at(1);
  check_mask(mask, n, "alpha attention");
  if (w.shape() != Shape{d}) throw ShapeError("alpha attention: scoring vector must be [" + std::to_string(d) + "]");
  if (values.shape().size() != 2 || values.shape()[1] != n) {
    throw ShapeError("alpha attention: values " + shape_string(values.shape()) + " for " +
                     std::to_string(n) + " items");
  }
  Var<T> logits = matmul(reshape(w, Shape{1, d}), tanh(scores_input));  // [1 x N]
  if (!all_valid(mask)) logits = add(logits, g.constant(mask_bias<T>(1, n, mask)));
  Var<T> weights = row_softmax(logits);
  Var<T> attended = matmul(values, reshape(weights, Shape{n}));
  return {attended, weights};
}

template <typename T>
AttentionOutput<T> sdp_temporal(Var<T> frames, const Mask& mask, std::optional<T> scale) {
  if (frames.shape().size() != 2) throw ShapeError("sdp_temporal: frames must be [d x T]");
  const T s = scale.value_or(std::sqrt(static_cast<T>(frames.shape()[0])));
  return dot_product_attend(frames, frames, mask, s);
}

template <typename T>
Var<T> selection_scores_input(Graph<T>& g, const SelectionInputs<T>& in, const Linear<T>& w_h,
                              const Linear<T>& w_c) {
  const Shape& ps = in.projected_objects.shape();
  if (ps.size() != 2) throw ShapeError("selection: projected objects must be [d x N]");
  if (w_h.out_dim() != ps[0] || w_c.out_dim() != ps[0]) {
    throw ShapeError("selection: context projections give " + std::to_string(w_h.out_dim()) + "/" +
                     std::to_string(w_c.out_dim()) + ", objects have " + std::to_string(ps[0]));
  }
  Var<T> context = add(w_h.forward(g, in.prev_interaction), w_c.forward(g, in.frame_context));
  return broadcast_add(context, in.projected_objects);
}

template <typename T>
AttentionOutput<T> dotprod_select(Graph<T>& g, const SelectionInputs<T>& in, const Linear<T>& w_h,
                                  const Linear<T>& w_c, std::optional<T> scale) {
  Var<T> x = selection_scores_input(g, in, w_h, w_c);
  const T s = scale.value_or(std::sqrt(static_cast<T>(x.shape()[0])));
  return dot_product_attend(x, in.projected_objects, in.valid_mask, s);
}

template <typename T>
AttentionOutput<T> alpha_select(Graph<T>& g, const SelectionInputs<T>& in, const Linear<T>& w_h,
                                const Linear<T>& w_c, const Tensor<T>& w_alpha) {
  Var<T> x = selection_scores_input(g, in, w_h, w_c);
  return alpha_attend(x, in.projected_objects, g.parameter(w_alpha), in.valid_mask);
}

#define SINET_INSTANTIATE_ATTENTION(T)                                                              \
  template Tensor<T> mask_bias<T>(std::size_t, std::size_t, const Mask&);                           \
  template AttentionOutput<T> dot_product_attend<T>(Var<T>, Var<T>, const Mask&, T);                \
  template AttentionOutput<T> alpha_attend<T>(Var<T>, Var<T>, Var<T>, const Mask&);                 \
  template AttentionOutput<T> sdp_temporal<T>(Var<T>, const Mask&, std::optional<T>);               \
  template Var<T> selection_scores_input<T>(Graph<T>&, const SelectionInputs<T>&, const Linear<T>&, \
                                            const Linear<T>&);                                      \
  template AttentionOutput<T> dotprod_select<T>(Graph<T>&, const SelectionInputs<T>&,               \
                                                const Linear<T>&, const Linear<T>&, std::optional<T>); \
  template AttentionOutput<T> alpha_select<T>(Graph<T>&, const SelectionInputs<T>&,                 \
                                              const Linear<T>&, const Linear<T>&, const Tensor<T>&);

SINET_INSTANTIATE_ATTENTION(float)
SINET_INSTANTIATE_ATTENTION(double)

#undef SINET_INSTANTIATE_ATTENTION

}  // namespace sinet
