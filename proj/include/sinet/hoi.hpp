#pragma once

// Recurrent higher-order interaction module and the baseline object-set
// summaries (mean pooling, exhaustive pairs / triplets).
//
// Per timestep t, each of K groups projects the frame's objects through its
// own MLP, attends over them using the frame context v_ct and the previous
// hidden state h_{t-1}, and the K attended vectors are concatenated into a
// single LSTM step. h_T summarizes the object interactions of the video.

#include <span>
#include <string>
#include <vector>

#include "sinet/attention.hpp"
#include "sinet/layers.hpp"
#include "sinet/sample.hpp"

namespace sinet {

enum class Selection { kDotProduct, kAlpha };

std::string selection_name(Selection s);
Selection parse_selection(const std::string& name);

struct HoiConfig {
  std::size_t groups = 2;            // K
  std::size_t object_dim = 2048;     // m
  std::size_t context_dim = 2048;    // dim of the frame context v_ct
  std::vector<std::size_t> projection_widths = {2048, 2048, 2048};
  std::size_t lstm_hidden = 2048;
  Selection selection = Selection::kDotProduct;
  double projection_dropout = 0.0;

  std::size_t projection_dim() const { return projection_widths.back(); }
  std::size_t lstm_input() const { return groups * projection_dim(); }
  void validate() const;
};

// Recurrent state plus, per processed timestep, the K attention maps.
template <typename T>
struct HoiState {
  LstmState<T> lstm;
  std::vector<std::vector<Var<T>>> weight_history;
};

template <typename T>
struct HoiRollout {
  Var<T> final_h;
  std::vector<Var<T>> per_step_h;  // h_1 .. h_T; a skipped frame repeats the carried state
  HoiState<T> state;
};

// Object sets of a whole video in model layout: objects[t] is [m x N_t].
template <typename T>
struct ObjectSequence {
  std::vector<Tensor<T>> objects;
  std::vector<Mask> masks;

  std::size_t timesteps() const { return objects.size(); }
  static ObjectSequence from_sample(const VideoSample<T>& video);
};

// Valid columns of objects [m x N] as an [m x N'] tensor.
template <typename T>
Tensor<T> compact_objects(const Tensor<T>& objects, const Mask& mask);

template <typename T>
class HoiModule {
 public:
  struct Group {
    MlpBlock<T> projection;
    Linear<T> w_h;
    Linear<T> w_c;
    Tensor<T> w_alpha;
  };

  HoiModule() = default;
  explicit HoiModule(const HoiConfig& config);

  void init(Rng& rng);
  HoiState<T> initial_state(Graph<T>& g) const;

  // Per-group projections g_theta_k of objects [m x n].
  std::vector<Var<T>> project(Graph<T>& g, Var<T> objects, const Pass& pass);

  // One timestep from already projected objects (one [d_theta x n] per group).
  HoiState<T> step_projected(Graph<T>& g, const HoiState<T>& state, std::span<const Var<T>> projected,
                             Var<T> frame_context);

  // One timestep. objects is [m x N]; masked objects are dropped before the
  // projection so batch-norm statistics see only real objects. Throws
  // FrameSkippedError when no object is valid.
  HoiState<T> step(Graph<T>& g, const HoiState<T>& state, const Tensor<T>& objects, const Mask& mask,
                   Var<T> frame_context, const Pass& pass);

  // Folds step() over t with h_0 = c_0 = 0. contexts is [context_dim x T].
  // Frames without valid objects carry the state unchanged.
  HoiRollout<T> rollout(Graph<T>& g, const ObjectSequence<T>& video, Var<T> contexts, const Pass& pass);

  // Same fold over projections computed elsewhere: projected[t] holds the K
  // group projections of frame t, or is empty for a skipped frame.
  HoiRollout<T> rollout_projected(Graph<T>& g, const std::vector<std::vector<Var<T>>>& projected,
                                  Var<T> contexts);

  // Rollouts of several videos; contexts[i] is [context_dim x T_i]. With
  // pooled set, one projection covers every object of the batch, so
  // train-mode batch norm sees all of them together.
  std::vector<HoiRollout<T>> rollout_batch(Graph<T>& g, std::span<const VideoSample<T>* const> videos,
                                           std::span<const Var<T>> contexts, const Pass& pass, bool pooled);

  void collect(const std::string& prefix, TensorList<T>& params, TensorList<T>& buffers);

  HoiConfig config;
  std::vector<Group> groups;
  LstmCell<T> lstm;
};

enum class BaselineKind { kMeanPool, kPairs, kTriplets };

std::string baseline_name(BaselineKind kind);

// Number of k-subsets of n items.
std::size_t combinations(std::size_t n, std::size_t k);

// Lexicographic list of k-subsets of {0..n-1}.
std::vector<std::vector<std::size_t>> enumerate_combinations(std::size_t n, std::size_t k);

// Per frame: mean pooling of projected objects, or of MLP-projected
// concatenated object tuples; an LSTM over time.
template <typename T>
class BaselineInteraction {
 public:
  BaselineInteraction() = default;
  // widths are the projection MLP stages; the LSTM consumes widths.back().
  BaselineInteraction(BaselineKind kind, std::size_t object_dim, const std::vector<std::size_t>& widths,
                      std::size_t lstm_hidden, double dropout = 0.0);

  void init(Rng& rng);

  std::size_t arity() const;

  // Projection input of one frame: the valid objects [m x N'] for mean
  // pooling, or every lexicographic tuple concatenated [arity*m x C(N',arity)].
  // Throws FrameSkippedError when the frame has fewer valid objects than the
  // tuple arity (or none at all).
  Tensor<T> frame_input(const Tensor<T>& objects, const Mask& mask) const;

  // Pooled per-frame input to the LSTM.
  Var<T> frame_summary(Graph<T>& g, const Tensor<T>& objects, const Mask& mask, const Pass& pass);

  HoiRollout<T> rollout(Graph<T>& g, const ObjectSequence<T>& video, const Pass& pass);

  // LSTM fold over per-frame projections [d x C_t]; an invalid Var marks a
  // skipped frame.
  HoiRollout<T> rollout_projected(Graph<T>& g, const std::vector<Var<T>>& projected);

  void collect(const std::string& prefix, TensorList<T>& params, TensorList<T>& buffers);

  BaselineKind kind = BaselineKind::kMeanPool;
  MlpBlock<T> projection;
  LstmCell<T> lstm;
};

}  // namespace sinet
