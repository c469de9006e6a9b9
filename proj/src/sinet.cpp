#include "sinet/sinet.hpp"

namespace sinet {

std::string fine_branch_name(FineBranch b) {
  switch (b) {
    case FineBranch::kHoi:
      return "hoi";
    case FineBranch::kMeanPool:
      return "meanpool";
    case FineBranch::kPairs:
      return "pairs";
    case FineBranch::kTriplets:
      return "triplets";
  }
  return "unknown";
}

FineBranch parse_fine_branch(const std::string& name) {
  for (FineBranch b : {FineBranch::kHoi, FineBranch::kMeanPool, FineBranch::kPairs, FineBranch::kTriplets}) {
    if (fine_branch_name(b) == name) return b;
  }
  throw ConfigError("unknown fine branch '" + name + "' (expected hoi, meanpool, pairs or triplets)");
}

std::string norm_scope_name(NormScope s) { return s == NormScope::kBatch ? "batch" : "frame"; }

NormScope parse_norm_scope(const std::string& name) {
  if (name == "batch") return NormScope::kBatch;
  if (name == "frame") return NormScope::kFrame;
  throw ConfigError("unknown norm scope '" + name + "' (expected batch or frame)");
}

HoiConfig SinetConfig::hoi_config() const {
  HoiConfig h;
  h.groups = groups;
  h.object_dim = feature_dim;
  h.context_dim = coarse_dim();
  h.projection_widths = theta_widths;
  h.lstm_hidden = lstm_hidden;
  h.selection = selection;
  h.projection_dropout = theta_dropout;
  return h;
}

void SinetConfig::validate() const {
  if (feature_dim == 0) throw ConfigError("sinet: feature_dim must be positive");
  if (phi_widths.empty() || theta_widths.empty()) throw ConfigError("sinet: projection widths must be non-empty");
  for (std::size_t w : phi_widths) {
    if (w == 0) throw ConfigError("sinet: phi widths must be positive");
  }
  if (num_classes < 1) throw ConfigError("sinet: num_classes must be at least 1");
  hoi_config().validate();
}

void SinetConfig::write(ConfigMap& out) const {
  out.set("model", std::string("sinet"));
  out.set("feature_dim", feature_dim);
  out.set("phi_widths", phi_widths);
  out.set("phi_dropout", phi_dropout);
  out.set("fine", fine_branch_name(fine));
  out.set("K", groups);
  out.set("selection", selection_name(selection));
  out.set("theta_widths", theta_widths);
  out.set("theta_dropout", theta_dropout);
  out.set("lstm_hidden", lstm_hidden);
  out.set("num_classes", num_classes);
  out.set("norm_scope", norm_scope_name(norm_scope));
}

SinetConfig SinetConfig::read(const ConfigMap& in) {
  SinetConfig c;
  c.feature_dim = in.get_size("feature_dim", c.feature_dim);
  c.phi_widths = in.get_sizes("phi_widths", c.phi_widths);
  c.phi_dropout = in.get_double("phi_dropout", c.phi_dropout);
  c.fine = parse_fine_branch(in.get_string("fine", fine_branch_name(c.fine)));
  c.groups = in.get_size("K", c.groups);
  c.selection = parse_selection(in.get_string("selection", selection_name(c.selection)));
  c.theta_widths = in.get_sizes("theta_widths", c.theta_widths);
  c.theta_dropout = in.get_double("theta_dropout", c.theta_dropout);
  c.lstm_hidden = in.get_size("lstm_hidden", c.lstm_hidden);
  c.num_classes = in.get_size("num_classes", c.num_classes);
  c.norm_scope = parse_norm_scope(in.get_string("norm_scope", norm_scope_name(c.norm_scope)));
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------

namespace {

BaselineKind baseline_kind(FineBranch b) {
  switch (b) {
    case FineBranch::kPairs:
      return BaselineKind::kPairs;
    case FineBranch::kTriplets:
      return BaselineKind::kTriplets;
    default:
      return BaselineKind::kMeanPool;
  }
}

}  // namespace

template <typename T>
SinetModel<T>::SinetModel(const SinetConfig& cfg) : config(cfg) {
  config.validate();
  phi = MlpBlock<T>(config.feature_dim, config.phi_widths, config.phi_dropout);
  if (config.fine == FineBranch::kHoi) {
    hoi = HoiModule<T>(config.hoi_config());
  } else {
    baseline = BaselineInteraction<T>(baseline_kind(config.fine), config.feature_dim, config.theta_widths,
                                      config.lstm_hidden, config.theta_dropout);
  }
  bn_coarse = BatchNorm<T>(config.coarse_dim());
  bn_fine = BatchNorm<T>(config.lstm_hidden);
  fusion = Linear<T>(config.fusion_input(), config.num_classes);
}

template <typename T>
void SinetModel<T>::init(Rng& rng) {
  phi.init(rng);
  if (config.fine == FineBranch::kHoi) {
    hoi.init(rng);
  } else {
    baseline.init(rng);
  }
  fusion.init(rng);
}


template <typename T>
std::vector<Var<T>> project_frames(Graph<T>& g, MlpBlock<T>& phi, std::span<const VideoSample<T>* const> videos,
                                   const Pass& pass, bool pooled) {
  std::vector<Var<T>> out;
  if (!pooled) {
    for (const VideoSample<T>* v : videos) out.push_back(phi.forward(g, g.constant(transposed(v->frames)), pass));
    return out;
  }
  std::vector<Tensor<T>> parts;
  for (const VideoSample<T>* v : videos) parts.push_back(transposed(v->frames));
  Var<T> all = phi.forward(g, g.constant(hstack(parts, phi.in_dim())), pass);
  if (videos.size() == 1) return {all};
  std::size_t off = 0;
  for (const VideoSample<T>* v : videos) {
    const std::size_t t = v->timesteps();
    out.push_back(slice(all, 1, off, off + t));
    off += t;
  }
  return out;
}

template <typename T>
std::vector<VideoFeatures<T>> SinetModel<T>::features(Graph<T>& g, std::span<const VideoSample<T>* const> videos,
                                                      const Pass& pass) {
  if (videos.empty()) throw EmptyInputError("sinet: empty batch");
  for (const VideoSample<T>* v : videos) {
    v->validate();
    if (v->feature_dim() != config.feature_dim) {
      throw ShapeError("sinet: video '" + v->id + "' has feature dim " + std::to_string(v->feature_dim()) +
                       ", model expects " + std::to_string(config.feature_dim));
    }
  }
  const bool pooled = config.norm_scope == NormScope::kBatch;
  const bool use_hoi = config.fine == FineBranch::kHoi;

  std::vector<Var<T>> projected_frames = project_frames(g, phi, videos, pass, pooled);

  std::vector<VideoFeatures<T>> out(videos.size());
  for (std::size_t i = 0; i < videos.size(); ++i) {
    out[i].temporal = sdp_temporal(projected_frames[i]);
    out[i].coarse = out[i].temporal.attended;
  }

  if (use_hoi) {
    std::vector<HoiRollout<T>> rollouts =
        hoi.rollout_batch(g, videos, std::span<const Var<T>>(projected_frames), pass, pooled);
    for (std::size_t i = 0; i < videos.size(); ++i) {
      out[i].rollout = std::move(rollouts[i]);
      out[i].fine = out[i].rollout.final_h;
    }
    return out;
  }
  if (!pooled) {
    for (std::size_t i = 0; i < videos.size(); ++i) {
      out[i].rollout = baseline.rollout(g, ObjectSequence<T>::from_sample(*videos[i]), pass);
      out[i].fine = out[i].rollout.final_h;
    }
    return out;
  }

  // Baseline: one projection over every frame's object tuples.
  struct Span {
    std::size_t begin = 0;
    std::size_t count = 0;
  };
  std::vector<std::vector<Span>> spans(videos.size());
  std::vector<Tensor<T>> parts;
  std::size_t total = 0;
  for (std::size_t i = 0; i < videos.size(); ++i) {
    const ObjectSequence<T> objects = ObjectSequence<T>::from_sample(*videos[i]);
    for (std::size_t t = 0; t < objects.timesteps(); ++t) {
      Tensor<T> cols;
      try {
        cols = baseline.frame_input(objects.objects[t], objects.masks[t]);
      } catch (const FrameSkippedError&) {
        cols = Tensor<T>({baseline.projection.in_dim(), 0});
      }
      spans[i].push_back({total, cols.shape()[1]});
      total += cols.shape()[1];
      parts.push_back(std::move(cols));
    }
  }
  Var<T> projected;
  if (total > 0) projected = baseline.projection.forward(g, g.constant(hstack(parts, baseline.projection.in_dim())), pass);
  for (std::size_t i = 0; i < videos.size(); ++i) {
    std::vector<Var<T>> frames(spans[i].size());
    for (std::size_t t = 0; t < frames.size(); ++t) {
      const Span sp = spans[i][t];
      if (sp.count > 0) frames[t] = slice(projected, 1, sp.begin, sp.begin + sp.count);
    }
    out[i].rollout = baseline.rollout_projected(g, frames);
    out[i].fine = out[i].rollout.final_h;
  }
  return out;
}

template <typename T>
VideoFeatures<T> SinetModel<T>::features(Graph<T>& g, const VideoSample<T>& video, const Pass& pass) {
  const VideoSample<T>* one[] = {&video};
  return features(g, std::span<const VideoSample<T>* const>(one), pass).front();
}

template <typename T>
Var<T> SinetModel<T>::forward_batch(Graph<T>& g, std::span<const VideoSample<T>* const> videos,
                                    const Pass& pass) {
  std::vector<Var<T>> coarse;
  std::vector<Var<T>> fine;
  for (const VideoFeatures<T>& f : features(g, videos, pass)) {
    coarse.push_back(f.coarse);
    fine.push_back(f.fine);
  }
  Var<T> vc = bn_coarse.forward(g, stack_columns<T>(coarse), pass);
  Var<T> voi = bn_fine.forward(g, stack_columns<T>(fine), pass);
  return fusion.forward(g, concat({vc, voi}, 0));
}

template <typename T>
Var<T> SinetModel<T>::forward(Graph<T>& g, const VideoSample<T>& video, const Pass& pass) {
  const VideoSample<T>* one[] = {&video};
  Var<T> logits = forward_batch(g, std::span<const VideoSample<T>* const>(one), pass);
  return reshape(logits, Shape{config.num_classes});
}

template <typename T>
Var<T> SinetModel<T>::loss(Graph<T>& g, std::span<const VideoSample<T>* const> videos, const Pass& pass) {
  std::vector<std::size_t> labels;
  for (const VideoSample<T>* v : videos) {
    if (!v->label) throw LabelError("video '" + v->id + "' has no class label");
    labels.push_back(*v->label);
  }
  return cross_entropy(forward_batch(g, videos, pass), std::span<const std::size_t>(labels));
}

template <typename T>
void SinetModel<T>::collect(TensorList<T>& params, TensorList<T>& buffers) {
  phi.collect("phi", params, buffers);
  if (config.fine == FineBranch::kHoi) {
    hoi.collect("hoi", params, buffers);
  } else {
    baseline.collect("baseline", params, buffers);
  }
  bn_coarse.collect("bn_coarse", params, buffers);
  bn_fine.collect("bn_fine", params, buffers);
  fusion.collect("fusion", params);
}

template <typename T>
double topk_accuracy(const Tensor<T>& logits, std::span<const std::size_t> labels, std::size_t k) {
  const std::size_t classes = logits.shape()[0];
  const std::size_t batch = logits.rank() == 1 ? 1 : logits.shape()[1];
  if (k == 0 || k > classes) {
    throw ConfigError("top-k: k=" + std::to_string(k) + " outside [1, " + std::to_string(classes) + "]");
  }
  if (labels.size() != batch) throw ShapeError("top-k: label count does not match batch");
  if (batch == 0) throw EmptyInputError("top-k: empty batch");
  std::size_t hits = 0;
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t y = labels[b];
    if (y >= classes) throw LabelError("top-k: label " + std::to_string(y) + " out of range");
    const T zy = logits[y * batch + b];
    std::size_t rank = 0;
    for (std::size_t c = 0; c < classes; ++c) {
      const T zc = logits[c * batch + b];
      if (zc > zy || (zc == zy && c < y)) ++rank;
    }
    if (rank < k) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(batch);
}

#define SINET_INSTANTIATE_SINET(T)                                                                   \
  template std::vector<Var<T>> project_frames<T>(Graph<T>&, MlpBlock<T>&,                            \
                                                 std::span<const VideoSample<T>* const>, const Pass&, bool); \
  template class SinetModel<T>;                                                                      \
  template double topk_accuracy<T>(const Tensor<T>&, std::span<const std::size_t>, std::size_t);

SINET_INSTANTIATE_SINET(float)
SINET_INSTANTIATE_SINET(double)

#undef SINET_INSTANTIATE_SINET

}  // namespace sinet
