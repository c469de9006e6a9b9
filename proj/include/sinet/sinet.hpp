#pragma once

// Action classifier: a coarse branch (g_phi projection of frame features,
// temporal SDP-attention) and a fine branch (recurrent HOI over object sets,
// or one of the baseline summaries), each batch-normalized over the batch of
// videos, concatenated and mapped to class logits.

#include <span>
#include <string>
#include <vector>

#include "sinet/config.hpp"
#include "sinet/hoi.hpp"

namespace sinet {

enum class FineBranch { kHoi, kMeanPool, kPairs, kTriplets };

// Where train-mode batch norm inside g_phi and the object projections takes
// its statistics: every frame / object of the mini-batch at once, or each
// video's frames and each frame's objects separately. Eval mode is the same
// for both.
enum class NormScope { kBatch, kFrame };

std::string norm_scope_name(NormScope s);
NormScope parse_norm_scope(const std::string& name);

std::string fine_branch_name(FineBranch b);
FineBranch parse_fine_branch(const std::string& name);

struct SinetConfig {
  std::size_t feature_dim = 2048;  // m, shared by frame and object features
  std::vector<std::size_t> phi_widths = {2048, 2048};
  double phi_dropout = 0.0;
  FineBranch fine = FineBranch::kHoi;
  std::size_t groups = 2;
  Selection selection = Selection::kDotProduct;
  std::vector<std::size_t> theta_widths = {2048, 2048, 2048};
  double theta_dropout = 0.0;
  std::size_t lstm_hidden = 2048;
  std::size_t num_classes = 400;
  NormScope norm_scope = NormScope::kBatch;

  std::size_t coarse_dim() const { return phi_widths.back(); }
  std::size_t fusion_input() const { return coarse_dim() + lstm_hidden; }
  HoiConfig hoi_config() const;
  void validate() const;

  void write(ConfigMap& out) const;
  static SinetConfig read(const ConfigMap& in);
};

// g_phi of each video's frames, [d_phi x T_i] per video. With pooled set
// the projection runs once over every frame of the batch.
template <typename T>
std::vector<Var<T>> project_frames(Graph<T>& g, MlpBlock<T>& phi, std::span<const VideoSample<T>* const> videos,
                                   const Pass& pass, bool pooled);

// Branch outputs of one video before fusion.
template <typename T>
struct VideoFeatures {
  Var<T> coarse;  // v_c [d_phi]
  Var<T> fine;    // v_oi,T [lstm_hidden]
  AttentionOutput<T> temporal;
  HoiRollout<T> rollout;
};

template <typename T>
class SinetModel {
 public:
  SinetModel() = default;
  explicit SinetModel(const SinetConfig& config);

  void init(Rng& rng);

  std::vector<VideoFeatures<T>> features(Graph<T>& g, std::span<const VideoSample<T>* const> videos,
                                         const Pass& pass);
  VideoFeatures<T> features(Graph<T>& g, const VideoSample<T>& video, const Pass& pass);

  // Logits [C x B]. The pre-fusion batch norms use batch statistics in
  // train mode, so training needs B >= 2 (BatchTooSmallError otherwise).
  Var<T> forward_batch(Graph<T>& g, std::span<const VideoSample<T>* const> videos, const Pass& pass);
  // Logits [C] of a single video.
  Var<T> forward(Graph<T>& g, const VideoSample<T>& video, const Pass& pass);

  // Mean cross-entropy over the batch.
  Var<T> loss(Graph<T>& g, std::span<const VideoSample<T>* const> videos, const Pass& pass);

  void collect(TensorList<T>& params, TensorList<T>& buffers);

  SinetConfig config;
  MlpBlock<T> phi;
  HoiModule<T> hoi;
  BaselineInteraction<T> baseline;
  BatchNorm<T> bn_coarse;
  BatchNorm<T> bn_fine;
  Linear<T> fusion;
};

// Fraction of columns of logits [C x B] (or [C] with one label) whose label
// ranks among the k largest entries. Equal logits rank the lower class index
// first. ConfigError when k is 0 or exceeds C; LabelError on a bad label.
template <typename T>
double topk_accuracy(const Tensor<T>& logits, std::span<const std::size_t> labels, std::size_t k);

}  // namespace sinet
