#include "sinet/hoi.hpp"

#include <cmath>

namespace sinet {

std::string selection_name(Selection s) { return s == Selection::kDotProduct ? "dotprod" : "alpha"; }

Selection parse_selection(const std::string& name) {
  if (name == "dotprod") return Selection::kDotProduct;
  if (name == "alpha") return Selection::kAlpha;
  throw ConfigError("unknown selection '" + name + "' (expected dotprod or alpha)");
}

void HoiConfig::validate() const {
  if (groups < 1) throw ConfigError("hoi: K must be at least 1");
  if (object_dim == 0 || context_dim == 0 || lstm_hidden == 0) throw ConfigError("hoi: dimensions must be positive");
  if (projection_widths.empty()) throw ConfigError("hoi: projection needs at least one stage");
  for (std::size_t w : projection_widths) {
    if (w == 0) throw ConfigError("hoi: projection widths must be positive");
  }
}

template <typename T>
ObjectSequence<T> ObjectSequence<T>::from_sample(const VideoSample<T>& video) {
  ObjectSequence<T> seq;
  const std::size_t m = video.feature_dim();
  for (std::size_t t = 0; t < video.timesteps(); ++t) {
    const Tensor<T>& rows = video.objects[t];
    const std::size_t n = rows.rows();
    Tensor<T> cols({m, n});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) cols[j * n + i] = rows[i * m + j];
    seq.objects.push_back(std::move(cols));
    seq.masks.push_back(t < video.masks.size() ? video.masks[t] : Mask{});
  }
  return seq;
}

template <typename T>
Tensor<T> compact_objects(const Tensor<T>& objects, const Mask& mask) {
  if (objects.rank() != 2) throw ShapeError("objects must be [m x N]");
  const std::size_t m = objects.shape()[0];
  const std::size_t n = objects.shape()[1];
  if (!mask.empty() && mask.size() != n) throw ShapeError("object mask length mismatch");
  if (mask.empty()) return objects;
  std::vector<std::size_t> keep;
  for (std::size_t j = 0; j < n; ++j) {
    if (mask[j]) keep.push_back(j);
  }
  Tensor<T> out({m, keep.size()});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < keep.size(); ++j) out[i * keep.size() + j] = objects[i * n + keep[j]];
  return out;
}

// ---------------------------------------------------------------------------

template <typename T>
HoiModule<T>::HoiModule(const HoiConfig& cfg) : config(cfg) {
  config.validate();
  const std::size_t d = config.projection_dim();
  for (std::size_t k = 0; k < config.groups; ++k) {
    groups.push_back({MlpBlock<T>(config.object_dim, config.projection_widths, config.projection_dropout),
                      Linear<T>(config.lstm_hidden, d), Linear<T>(config.context_dim, d), Tensor<T>({d})});
  }
  lstm = LstmCell<T>(config.lstm_input(), config.lstm_hidden);
}

template <typename T>
void HoiModule<T>::init(Rng& rng) {
  for (Group& grp : groups) {
    grp.projection.init(rng);
    grp.w_h.init(rng);
    grp.w_c.init(rng);
    xavier_uniform(grp.w_alpha, grp.w_alpha.size(), 1, rng);
  }
  lstm.init(rng);
}

template <typename T>
HoiState<T> HoiModule<T>::initial_state(Graph<T>& g) const {
  return {lstm.zero_state(g), {}};
}

template <typename T>
std::vector<Var<T>> HoiModule<T>::project(Graph<T>& g, Var<T> objects, const Pass& pass) {
  std::vector<Var<T>> out;
  for (Group& grp : groups) out.push_back(grp.projection.forward(g, objects, pass));
  return out;
}

template <typename T>
HoiState<T> HoiModule<T>::step_projected(Graph<T>& g, const HoiState<T>& state, std::span<const Var<T>> projected,
                                         Var<T> frame_context) {
  if (projected.size() != groups.size()) throw ShapeError("hoi step: expected one projection per group");
  std::vector<Var<T>> attended;
  std::vector<Var<T>> weights;
  for (std::size_t k = 0; k < groups.size(); ++k) {
    const Group& grp = groups[k];
    SelectionInputs<T> in{projected[k], frame_context, state.lstm.h, {}};
    AttentionOutput<T> out = config.selection == Selection::kDotProduct
                                 ? dotprod_select(g, in, grp.w_h, grp.w_c)
                                 : alpha_select(g, in, grp.w_h, grp.w_c, grp.w_alpha);
    attended.push_back(out.attended);
    weights.push_back(out.weights);
  }
  Var<T> x = attended.size() == 1 ? attended.front() : concat<T>(std::span<const Var<T>>(attended), 0);
  HoiState<T> next{lstm.step(g, x, state.lstm), state.weight_history};
  next.weight_history.push_back(std::move(weights));
  return next;
}

template <typename T>
HoiState<T> HoiModule<T>::step(Graph<T>& g, const HoiState<T>& state, const Tensor<T>& objects, const Mask& mask,
                               Var<T> frame_context, const Pass& pass) {
  if (objects.rank() != 2 || objects.shape()[0] != config.object_dim) {
    throw ShapeError("hoi step: objects must be [" + std::to_string(config.object_dim) + " x N], got " +
                     shape_string(objects.shape()));
  }
  Tensor<T> valid = compact_objects(objects, mask);
  if (valid.shape()[1] == 0) throw FrameSkippedError("hoi step: frame has no valid objects");
  const std::vector<Var<T>> projected = project(g, g.constant(std::move(valid)), pass);
  return step_projected(g, state, std::span<const Var<T>>(projected), frame_context);
}

template <typename T>
HoiRollout<T> HoiModule<T>::rollout(Graph<T>& g, const ObjectSequence<T>& video, Var<T> contexts,
                                    const Pass& pass) {
  std::vector<std::vector<Var<T>>> projected(video.timesteps());
  for (std::size_t t = 0; t < video.timesteps(); ++t) {
    const Tensor<T>& objects = video.objects[t];
    if (objects.rank() != 2 || objects.shape()[0] != config.object_dim) {
      throw ShapeError("hoi rollout: frame " + std::to_string(t) + " objects must be [" +
                       std::to_string(config.object_dim) + " x N], got " + shape_string(objects.shape()));
    }
    Tensor<T> valid = compact_objects(objects, video.masks[t]);
    if (valid.shape()[1] > 0) projected[t] = project(g, g.constant(std::move(valid)), pass);
  }
  return rollout_projected(g, projected, contexts);
}

template <typename T>
HoiRollout<T> HoiModule<T>::rollout_projected(Graph<T>& g, const std::vector<std::vector<Var<T>>>& projected,
                                              Var<T> contexts) {
  const std::size_t steps = projected.size();
  if (steps == 0) throw EmptyInputError("hoi rollout: video has no frames");
  if (contexts.shape() != Shape{config.context_dim, steps}) {
    throw ShapeError("hoi rollout: contexts must be [" + std::to_string(config.context_dim) + " x " +
                     std::to_string(steps) + "], got " + shape_string(contexts.shape()));
  }
  HoiRollout<T> out{Var<T>(), {}, initial_state(g)};
  for (std::size_t t = 0; t < steps; ++t) {
    // a frame without valid objects carries the state
    if (!projected[t].empty()) {
      out.state = step_projected(g, out.state, std::span<const Var<T>>(projected[t]), column(contexts, t));
    }
    out.per_step_h.push_back(out.state.lstm.h);
  }
  out.final_h = out.state.lstm.h;
  return out;
}

template <typename T>
std::vector<HoiRollout<T>> HoiModule<T>::rollout_batch(Graph<T>& g, std::span<const VideoSample<T>* const> videos,
                                                       std::span<const Var<T>> contexts, const Pass& pass,
                                                       bool pooled) {
  if (contexts.size() != videos.size()) throw ShapeError("hoi rollout: one context matrix per video");
  std::vector<HoiRollout<T>> out;
  if (!pooled) {
    for (std::size_t i = 0; i < videos.size(); ++i) {
      out.push_back(rollout(g, ObjectSequence<T>::from_sample(*videos[i]), contexts[i], pass));
    }
    return out;
  }
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
      Tensor<T> cols = compact_objects(objects.objects[t], objects.masks[t]);
      spans[i].push_back({total, cols.shape()[1]});
      total += cols.shape()[1];
      parts.push_back(std::move(cols));
    }
  }
  std::vector<Var<T>> projected;
  if (total > 0) projected = project(g, g.constant(hstack(parts, config.object_dim)), pass);
  for (std::size_t i = 0; i < videos.size(); ++i) {
    std::vector<std::vector<Var<T>>> frames(spans[i].size());
    for (std::size_t t = 0; t < frames.size(); ++t) {
      const Span sp = spans[i][t];
      if (sp.count == 0) continue;
      for (const Var<T>& p : projected) frames[t].push_back(slice(p, 1, sp.begin, sp.begin + sp.count));
    }
    out.push_back(rollout_projected(g, frames, contexts[i]));
  }
  return out;
}

template <typename T>
void HoiModule<T>::collect(const std::string& prefix, TensorList<T>& params, TensorList<T>& buffers) {
  for (std::size_t k = 0; k < groups.size(); ++k) {
    const std::string p = prefix + ".group" + std::to_string(k);
    groups[k].projection.collect(p + ".projection", params, buffers);
    groups[k].w_h.collect(p + ".w_h", params);
    groups[k].w_c.collect(p + ".w_c", params);
    params.push_back({p + ".w_alpha", &groups[k].w_alpha});
  }
  lstm.collect(prefix + ".lstm", params);
}

// ---------------------------------------------------------------------------

std::string baseline_name(BaselineKind kind) {
  switch (kind) {
    case BaselineKind::kMeanPool:
      return "meanpool";
    case BaselineKind::kPairs:
      return "pairs";
    case BaselineKind::kTriplets:
      return "triplets";
  }
  return "unknown";
}

std::size_t combinations(std::size_t n, std::size_t k) {
  if (k > n) return 0;
  std::size_t result = 1;
  for (std::size_t i = 1; i <= k; ++i) result = result * (n - k + i) / i;
  return result;
}

std::vector<std::vector<std::size_t>> enumerate_combinations(std::size_t n, std::size_t k) {
  std::vector<std::vector<std::size_t>> out;
  if (k > n || k == 0) return out;
  std::vector<std::size_t> idx(k);
  for (std::size_t i = 0; i < k; ++i) idx[i] = i;
  while (true) {
    out.push_back(idx);
    std::size_t i = k;
    while (i > 0 && idx[i - 1] == n - k + (i - 1)) --i;
    if (i == 0) break;
    ++idx[i - 1];
    for (std::size_t j = i; j < k; ++j) idx[j] = idx[j - 1] + 1;
  }
  return out;
}

template <typename T>
BaselineInteraction<T>::BaselineInteraction(BaselineKind k, std::size_t object_dim,
                                            const std::vector<std::size_t>& widths, std::size_t lstm_hidden,
                                            double dropout)
    : kind(k), projection(object_dim * arity(), widths, dropout), lstm(widths.back(), lstm_hidden) {}

template <typename T>
void BaselineInteraction<T>::init(Rng& rng) {
  projection.init(rng);
  lstm.init(rng);
}

template <typename T>
std::size_t BaselineInteraction<T>::arity() const {
  switch (kind) {
    case BaselineKind::kMeanPool:
      return 1;
    case BaselineKind::kPairs:
      return 2;
    case BaselineKind::kTriplets:
      return 3;
  }
  return 1;
}

template <typename T>
Tensor<T> BaselineInteraction<T>::frame_input(const Tensor<T>& objects, const Mask& mask) const {
  Tensor<T> valid = compact_objects(objects, mask);
  const std::size_t m = valid.shape()[0];
  const std::size_t n = valid.shape()[1];
  const std::size_t k = arity();
  if (n < k || n == 0) {
    throw FrameSkippedError("baseline: frame has " + std::to_string(n) + " objects, needs " + std::to_string(k));
  }
  if (k == 1) return valid;
  const auto combos = enumerate_combinations(n, k);
  const std::size_t c = combos.size();
  Tensor<T> input({k * m, c});
  for (std::size_t col = 0; col < c; ++col) {
    for (std::size_t slot = 0; slot < k; ++slot) {
      const std::size_t obj = combos[col][slot];
      for (std::size_t i = 0; i < m; ++i) input[(slot * m + i) * c + col] = valid[i * n + obj];
    }
  }
  return input;
}

template <typename T>
Var<T> BaselineInteraction<T>::frame_summary(Graph<T>& g, const Tensor<T>& objects, const Mask& mask,
                                             const Pass& pass) {
  Var<T> projected = projection.forward(g, g.constant(frame_input(objects, mask)), pass);
  return reduce_mean_rows(transpose(projected));
}

template <typename T>
HoiRollout<T> BaselineInteraction<T>::rollout(Graph<T>& g, const ObjectSequence<T>& video, const Pass& pass) {
  std::vector<Var<T>> projected(video.timesteps());
  for (std::size_t t = 0; t < video.timesteps(); ++t) {
    try {
      projected[t] = projection.forward(g, g.constant(frame_input(video.objects[t], video.masks[t])), pass);
    } catch (const FrameSkippedError&) {
    }
  }
  return rollout_projected(g, projected);
}

template <typename T>
HoiRollout<T> BaselineInteraction<T>::rollout_projected(Graph<T>& g, const std::vector<Var<T>>& projected) {
  if (projected.empty()) throw EmptyInputError("baseline rollout: video has no frames");
  HoiRollout<T> out{Var<T>(), {}, {lstm.zero_state(g), {}}};
  for (const Var<T>& p : projected) {
    if (p.valid()) out.state.lstm = lstm.step(g, reduce_mean_rows(transpose(p)), out.state.lstm);
    out.per_step_h.push_back(out.state.lstm.h);
  }
  out.final_h = out.state.lstm.h;
  return out;
}

template <typename T>
void BaselineInteraction<T>::collect(const std::string& prefix, TensorList<T>& params, TensorList<T>& buffers) {
  projection.collect(prefix + ".projection", params, buffers);
  lstm.collect(prefix + ".lstm", params);
}

#define SINET_INSTANTIATE_HOI(T)                                            \
  template struct ObjectSequence<T>;                                        \
  template Tensor<T> compact_objects<T>(const Tensor<T>&, const Mask&);     \
  template class HoiModule<T>;                                              \
  template class BaselineInteraction<T>;

SINET_INSTANTIATE_HOI(float)
SINET_INSTANTIATE_HOI(double)

#undef SINET_INSTANTIATE_HOI

}  // namespace sinet
