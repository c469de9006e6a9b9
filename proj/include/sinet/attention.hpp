#pragma once

// Attention over frames and over per-frame object sets.
//
// Dot-product form:  A = softmax(X^T X / scale) (N x N, masked columns get a
// -1e9 logit), attended = mean over valid query rows of A * V^T.
// Alpha form:        a = softmax(w^T tanh(X)) (1 x N), attended = V a.

#include <optional>

#include "sinet/autograd.hpp"
#include "sinet/layers.hpp"
#include "sinet/sample.hpp"

namespace sinet {

inline constexpr double kMaskedLogit = -1e9;

template <typename T>
struct AttentionOutput {
  Var<T> attended;  // [d]
  Var<T> weights;   // [N x N] for dot-product attention, [1 x N] for alpha
};

template <typename T>
struct SelectionInputs {
  Var<T> projected_objects;  // [d_theta x N]
  Var<T> frame_context;      // [d_v]
  Var<T> prev_interaction;   // [d_h]
  Mask valid_mask;           // empty or N long
};

// Logit bias [rows x N]: 0 for valid columns, kMaskedLogit for masked ones.
// Throws EmptyInputError when no column is valid.
template <typename T>
Tensor<T> mask_bias(std::size_t rows, std::size_t n, const Mask& mask);

// Dot-product attention with queries and keys from `scores_input` [d x N]
// and values `values` [d' x N].
template <typename T>
AttentionOutput<T> dot_product_attend(Var<T> scores_input, Var<T> values, const Mask& mask, T scale_by);

// Alpha attention scoring each column of `scores_input` [d x N] with w [d].
template <typename T>
AttentionOutput<T> alpha_attend(Var<T> scores_input, Var<T> values, Var<T> w, const Mask& mask);

// Temporal SDP-attention over projected frames [d_phi x T]; scale defaults
// to sqrt(d_phi).
template <typename T>
AttentionOutput<T> sdp_temporal(Var<T> frames, const Mask& mask = {}, std::optional<T> scale = std::nullopt);

// X = repeat(W_h h_prev + W_c v_ct) + projected objects.
template <typename T>
Var<T> selection_scores_input(Graph<T>& g, const SelectionInputs<T>& in, const Linear<T>& w_h,
                              const Linear<T>& w_c);

template <typename T>
AttentionOutput<T> dotprod_select(Graph<T>& g, const SelectionInputs<T>& in, const Linear<T>& w_h,
                                  const Linear<T>& w_c, std::optional<T> scale = std::nullopt);

template <typename T>
AttentionOutput<T> alpha_select(Graph<T>& g, const SelectionInputs<T>& in, const Linear<T>& w_h,
                                const Linear<T>& w_c, const Tensor<T>& w_alpha);

}  // namespace sinet
