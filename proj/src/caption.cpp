#include "sinet/caption.hpp"

#include <sstream>

namespace sinet {

std::string caption_mode_name(CaptionMode m) {
  switch (m) {
    case CaptionMode::kImageOnly:
      return "img";
    case CaptionMode::kObjectOnly:
      return "obj";
    case CaptionMode::kNoCoAttention:
      return "img+obj";
    case CaptionMode::kCoAttention:
      return "img+obj+coattn";
  }
  return "unknown";
}

CaptionMode parse_caption_mode(const std::string& name) {
  for (CaptionMode m : {CaptionMode::kImageOnly, CaptionMode::kObjectOnly, CaptionMode::kNoCoAttention,
                        CaptionMode::kCoAttention}) {
    if (caption_mode_name(m) == name) return m;
  }
  throw ConfigError("unknown caption mode '" + name + "' (expected img, obj, img+obj or img+obj+coattn)");
}

HoiConfig CaptionConfig::hoi_config() const {
  HoiConfig h;
  h.groups = groups;
  h.object_dim = feature_dim;
  h.context_dim = phi_dim;
  h.projection_widths = theta_widths;
  h.lstm_hidden = hoi_hidden;
  h.selection = selection;
  h.projection_dropout = theta_dropout;
  return h;
}

void CaptionConfig::validate() const {
  if (feature_dim == 0 || phi_dim == 0 || embed_dim == 0 || attn_hidden == 0 || lang_hidden == 0 ||
      attention_dim == 0) {
    throw ConfigError("caption: dimensions must be positive");
  }
  if (vocab_size <= Vocabulary::kReserved) {
    throw ConfigError("caption: vocabulary needs at least one word beyond the reserved tokens");
  }
  for (double r : {phi_dropout, theta_dropout, embed_dropout}) {
    if (!(r >= 0.0 && r < 1.0)) throw ConfigError("caption: dropout rates must lie in [0, 1)");
  }
  hoi_config().validate();
}

void CaptionConfig::write(ConfigMap& out) const {
  out.set("model", std::string("caption"));
  out.set("feature_dim", feature_dim);
  out.set("phi_dim", phi_dim);
  out.set("phi_dropout", phi_dropout);
  out.set("K", groups);
  out.set("selection", selection_name(selection));
  out.set("theta_widths", theta_widths);
  out.set("theta_dropout", theta_dropout);
  out.set("hoi_hidden", hoi_hidden);
  out.set("vocab_size", vocab_size);
  out.set("embed_dim", embed_dim);
  out.set("embed_dropout", embed_dropout);
  out.set("attn_hidden", attn_hidden);
  out.set("lang_hidden", lang_hidden);
  out.set("attention_dim", attention_dim);
  out.set("mode", caption_mode_name(mode));
  out.set("norm_scope", norm_scope_name(norm_scope));
}

CaptionConfig CaptionConfig::read(const ConfigMap& in) {
  CaptionConfig c;
  c.feature_dim = in.get_size("feature_dim", c.feature_dim);
  c.phi_dim = in.get_size("phi_dim", c.phi_dim);
  c.phi_dropout = in.get_double("phi_dropout", c.phi_dropout);
  c.groups = in.get_size("K", c.groups);
  c.selection = parse_selection(in.get_string("selection", selection_name(c.selection)));
  c.theta_widths = in.get_sizes("theta_widths", c.theta_widths);
  c.theta_dropout = in.get_double("theta_dropout", c.theta_dropout);
  c.hoi_hidden = in.get_size("hoi_hidden", c.hoi_hidden);
  c.vocab_size = in.get_size("vocab_size", c.vocab_size);
  c.embed_dim = in.get_size("embed_dim", c.embed_dim);
  c.embed_dropout = in.get_double("embed_dropout", c.embed_dropout);
  c.attn_hidden = in.get_size("attn_hidden", c.attn_hidden);
  c.lang_hidden = in.get_size("lang_hidden", c.lang_hidden);
  c.attention_dim = in.get_size("attention_dim", c.attention_dim);
  c.mode = parse_caption_mode(in.get_string("mode", caption_mode_name(c.mode)));
  c.norm_scope = parse_norm_scope(in.get_string("norm_scope", norm_scope_name(c.norm_scope)));
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------

template <typename T>
Var<T> masked_mean_columns(Var<T> x, const Mask& mask) {
  if (x.shape().size() != 2) throw ShapeError("masked mean: expected a matrix");
  const std::size_t n = x.shape()[1];
  if (!mask.empty() && mask.size() != n) throw ShapeError("masked mean: mask length mismatch");
  std::size_t valid = 0;
  for (std::size_t j = 0; j < n; ++j) valid += (mask.empty() || mask[j]) ? 1 : 0;
  if (valid == 0) throw EmptyInputError("masked mean: no valid column");
  Tensor<T> w({n});
  for (std::size_t j = 0; j < n; ++j) w[j] = (mask.empty() || mask[j]) ? T(1) / static_cast<T>(valid) : T(0);
  return matmul(x, x.graph().constant(std::move(w)));
}

template <typename T>
Var<T> co_attend(Var<T> alpha, Var<T> h_seq) {
  if (h_seq.shape().size() != 2) throw ShapeError("co-attention: hidden sequence must be [d x T]");
  const std::size_t t = h_seq.shape()[1];
  if (alpha.shape() != Shape{1, t} && alpha.shape() != Shape{t}) {
    throw ShapeError("co-attention: weights " + shape_string(alpha.shape()) + " for " + std::to_string(t) +
                     " hidden states");
  }
  return matmul(h_seq, reshape(alpha, Shape{t}));
}

void validate_caption(std::span<const std::size_t> tokens, std::size_t vocab) {
  if (tokens.size() < 2) throw SequenceError("caption needs at least BOS and EOS");
  if (tokens.front() != Vocabulary::kBos) throw SequenceError("caption must start with BOS");
  if (tokens.back() != Vocabulary::kEos) throw SequenceError("caption must end with EOS");
  if (tokens.size() - 2 > kMaxCaptionWords) {
    throw SequenceError("caption of " + std::to_string(tokens.size() - 2) + " words exceeds the limit of " +
                        std::to_string(kMaxCaptionWords));
  }
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] >= vocab) throw VocabError("token id " + std::to_string(tokens[i]) + " outside the vocabulary");
    if (i > 0 && i + 1 < tokens.size() && tokens[i] < Vocabulary::kReserved && tokens[i] != Vocabulary::kUnk) {
      throw SequenceError("reserved token inside caption at position " + std::to_string(i));
    }
  }
}

// ---------------------------------------------------------------------------

template <typename T>
CaptionModel<T>::CaptionModel(const CaptionConfig& cfg) : config(cfg) {
  config.validate();
  phi = MlpBlock<T>(config.feature_dim, {config.phi_dim}, config.phi_dropout);
  if (config.uses_objects()) hoi = HoiModule<T>(config.hoi_config());
  embed = Embedding<T>(config.vocab_size, config.embed_dim);
  attn_lstm = LstmCell<T>(config.attn_input(), config.attn_hidden);
  lang_lstm = LstmCell<T>(config.lang_input(), config.lang_hidden);
  att_h = Linear<T>(config.attn_hidden, config.attention_dim);
  att_c = Linear<T>(config.phi_dim, config.attention_dim);
  att_w = Tensor<T>({config.attention_dim});
  if (config.mode == CaptionMode::kNoCoAttention) {
    obj_h = Linear<T>(config.attn_hidden, config.attention_dim);
    obj_c = Linear<T>(config.hoi_hidden, config.attention_dim);
    obj_w = Tensor<T>({config.attention_dim});
  }
  out = Linear<T>(config.lang_hidden, config.vocab_size, false);
}

template <typename T>
void CaptionModel<T>::init(Rng& rng) {
  phi.init(rng);
  if (config.uses_objects()) hoi.init(rng);
  embed.init(rng);
  attn_lstm.init(rng);
  lang_lstm.init(rng);
  att_h.init(rng);
  att_c.init(rng);
  xavier_uniform(att_w, config.attention_dim, 1, rng);
  if (config.mode == CaptionMode::kNoCoAttention) {
    obj_h.init(rng);
    obj_c.init(rng);
    xavier_uniform(obj_w, config.attention_dim, 1, rng);
  }
  out.init(rng);
}

template <typename T>
std::vector<CaptionContext<T>> CaptionModel<T>::encode(Graph<T>& g, std::span<const VideoSample<T>* const> videos,
                                                       const Pass& pass) {
  if (videos.empty()) throw EmptyInputError("caption: empty batch");
  for (const VideoSample<T>* v : videos) {
    v->validate();
    if (v->feature_dim() != config.feature_dim) {
      throw ShapeError("caption: video '" + v->id + "' has feature dim " + std::to_string(v->feature_dim()) +
                       ", model expects " + std::to_string(config.feature_dim));
    }
  }
  const bool pooled = config.norm_scope == NormScope::kBatch;
  std::vector<Var<T>> frames = project_frames(g, phi, videos, pass, pooled);
  std::vector<CaptionContext<T>> out(videos.size());
  for (std::size_t i = 0; i < videos.size(); ++i) {
    out[i].frames = frames[i];
    out[i].mean_frame = masked_mean_columns(frames[i], out[i].frame_mask);
  }
  if (config.uses_objects()) {
    std::vector<HoiRollout<T>> rollouts = hoi.rollout_batch(g, videos, std::span<const Var<T>>(frames), pass, pooled);
    for (std::size_t i = 0; i < videos.size(); ++i) {
      out[i].hoi_states = stack_columns<T>(std::span<const Var<T>>(rollouts[i].per_step_h));
    }
  }
  return out;
}

template <typename T>
CaptionContext<T> CaptionModel<T>::encode(Graph<T>& g, const VideoSample<T>& video, const Pass& pass) {
  const VideoSample<T>* one[] = {&video};
  return encode(g, std::span<const VideoSample<T>* const>(one), pass).front();
}

template <typename T>
DecoderState<T> CaptionModel<T>::initial_state(Graph<T>& g) const {
  return {attn_lstm.zero_state(g), lang_lstm.zero_state(g)};
}

template <typename T>
LstmState<T> CaptionModel<T>::attention_lstm_step(Graph<T>& g, const LstmState<T>& attn, Var<T> h2_prev,
                                                  Var<T> mean_frame, std::size_t word, const Pass& pass) {
  if (word >= config.vocab_size) throw VocabError("word id " + std::to_string(word) + " outside the vocabulary");
  Var<T> w = dropout(g, relu(embed.lookup(g, word)), config.embed_dropout, pass);
  return attn_lstm.step(g, concat({h2_prev, mean_frame, w}, 0), attn);
}

template <typename T>
AttentionOutput<T> CaptionModel<T>::temporal_attend(Graph<T>& g, Var<T> h1, Var<T> frames, const Mask& mask) {
  Var<T> x = broadcast_add(att_h.forward(g, h1), att_c.forward(g, frames));
  return alpha_attend(x, frames, g.parameter(att_w), mask);
}

template <typename T>
AttentionOutput<T> CaptionModel<T>::object_attend(Graph<T>& g, Var<T> h1, Var<T> hoi_states, const Mask& mask) {
  if (config.mode != CaptionMode::kNoCoAttention) throw ConfigError("caption: object attention needs img+obj mode");
  Var<T> x = broadcast_add(obj_h.forward(g, h1), obj_c.forward(g, hoi_states));
  return alpha_attend(x, hoi_states, g.parameter(obj_w), mask);
}

template <typename T>
std::pair<LstmState<T>, Var<T>> CaptionModel<T>::language_lstm_step(Graph<T>& g, const LstmState<T>& lang, Var<T> h1,
                                                                    Var<T> v_hat, Var<T> h_hat) {
  LstmState<T> next = lang_lstm.step(g, concat({h1, v_hat, h_hat}, 0), lang);
  return {next, out.forward(g, next.h)};
}

template <typename T>
DecoderStep<T> CaptionModel<T>::step(Graph<T>& g, const CaptionContext<T>& ctx, const DecoderState<T>& state,
                                     std::size_t word, const Pass& pass) {
  DecoderStep<T> r;
  r.state.attn = attention_lstm_step(g, state.attn, state.lang.h, ctx.mean_frame, word, pass);
  Var<T> h1 = r.state.attn.h;
  AttentionOutput<T> temporal = temporal_attend(g, h1, ctx.frames, ctx.frame_mask);
  r.frame_weights = temporal.weights;
  Var<T> v_hat = temporal.attended;
  Var<T> h_hat;
  switch (config.mode) {
    case CaptionMode::kImageOnly:
      h_hat = g.constant(Tensor<T>({config.hoi_hidden}));
      break;
    case CaptionMode::kObjectOnly:
      v_hat = g.constant(Tensor<T>({config.phi_dim}));
      h_hat = co_attend(temporal.weights, ctx.hoi_states);
      r.object_weights = temporal.weights;
      break;
    case CaptionMode::kCoAttention:
      h_hat = co_attend(temporal.weights, ctx.hoi_states);
      r.object_weights = temporal.weights;
      break;
    case CaptionMode::kNoCoAttention: {
      AttentionOutput<T> own = object_attend(g, h1, ctx.hoi_states, ctx.frame_mask);
      h_hat = own.attended;
      r.object_weights = own.weights;
      break;
    }
  }
  auto [lang, logits] = language_lstm_step(g, state.lang, h1, v_hat, h_hat);
  r.state.lang = lang;
  r.logits = logits;
  return r;
}

template <typename T>
Var<T> CaptionModel<T>::caption_nll(Graph<T>& g, const CaptionContext<T>& ctx, std::span<const std::size_t> tokens,
                                    const Pass& pass) {
  validate_caption(tokens, config.vocab_size);
  DecoderState<T> state = initial_state(g);
  Var<T> total;
  for (std::size_t i = 0; i + 1 < tokens.size(); ++i) {
    DecoderStep<T> s = step(g, ctx, state, tokens[i], pass);
    const std::size_t target[] = {tokens[i + 1]};
    Var<T> ce = cross_entropy(s.logits, std::span<const std::size_t>(target));
    total = total.valid() ? add(total, ce) : ce;
    state = s.state;
  }
  return total;
}

template <typename T>
Var<T> CaptionModel<T>::loss(Graph<T>& g, std::span<const VideoSample<T>* const> videos, const Pass& pass) {
  for (const VideoSample<T>* v : videos) {
    if (v->caption.empty()) throw SequenceError("video '" + v->id + "' has no caption");
  }
  std::vector<CaptionContext<T>> ctx = encode(g, videos, pass);
  Var<T> total;
  for (std::size_t i = 0; i < videos.size(); ++i) {
    Var<T> nll = caption_nll(g, ctx[i], std::span<const std::size_t>(videos[i]->caption), pass);
    total = total.valid() ? add(total, nll) : nll;
  }
  return scale(total, T(1) / static_cast<T>(videos.size()));
}

template <typename T>
void CaptionModel<T>::collect(TensorList<T>& params, TensorList<T>& buffers) {
  phi.collect("phi", params, buffers);
  if (config.uses_objects()) hoi.collect("hoi", params, buffers);
  embed.collect("embed", params);
  attn_lstm.collect("attn_lstm", params);
  lang_lstm.collect("lang_lstm", params);
  att_h.collect("temporal.w_h", params);
  att_c.collect("temporal.w_c", params);
  params.push_back({"temporal.w", &att_w});
  if (config.mode == CaptionMode::kNoCoAttention) {
    obj_h.collect("object_attention.w_h", params);
    obj_c.collect("object_attention.w_c", params);
    params.push_back({"object_attention.w", &obj_w});
  }
  out.collect("out", params);
}

// ---------------------------------------------------------------------------

template <typename T>
std::vector<double> log_softmax(const Tensor<T>& logits) {
  std::vector<double> out(logits.size());
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < logits.size(); ++i) mx = std::max(mx, static_cast<double>(logits[i]));
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) sum += std::exp(static_cast<double>(logits[i]) - mx);
  const double lse = mx + std::log(sum);
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = static_cast<double>(logits[i]) - lse;
  return out;
}

std::vector<std::size_t> decodable_tokens(std::size_t vocab) {
  std::vector<std::size_t> out;
  if (vocab > Vocabulary::kEos) out.push_back(Vocabulary::kEos);
  for (std::size_t id = Vocabulary::kReserved; id < vocab; ++id) out.push_back(id);
  return out;
}

template <typename T>
DecodeResult decode_caption(CaptionModel<T>& model, const VideoSample<T>& video, const DecodeOptions& opt) {
  if (opt.beam < 1) throw ConfigError("beam size must be at least 1");
  Graph<T> g(false);
  const Pass pass = Pass::eval();
  const CaptionContext<T> ctx = model.encode(g, video, pass);
  auto step = [&](const DecoderState<T>& state, std::size_t prev) {
    DecoderStep<T> s = model.step(g, ctx, state, prev, pass);
    return std::pair<DecoderState<T>, std::vector<double>>(s.state, log_softmax(s.logits.value()));
  };
  const std::vector<std::size_t> candidates = decodable_tokens(model.config.vocab_size);
  if (opt.beam == 1 && !opt.length_normalize) {
    return greedy_search(model.initial_state(g), step, std::span<const std::size_t>(candidates), opt.max_len);
  }
  return beam_search(model.initial_state(g), step, std::span<const std::size_t>(candidates), opt);
}

std::string format_caption_line(const std::string& id, const std::vector<std::size_t>& words,
                                const Vocabulary& vocab) {
  std::ostringstream os;
  os << id << '\t';
  for (std::size_t i = 0; i < words.size(); ++i) os << (i ? " " : "") << vocab.token(words[i]);
  return os.str();
}

#define SINET_INSTANTIATE_CAPTION(T)                                                 \
  template Var<T> masked_mean_columns<T>(Var<T>, const Mask&);                       \
  template Var<T> co_attend<T>(Var<T>, Var<T>);                                      \
  template class CaptionModel<T>;                                                    \
  template std::vector<double> log_softmax<T>(const Tensor<T>&);                     \
  template DecodeResult decode_caption<T>(CaptionModel<T>&, const VideoSample<T>&, const DecodeOptions&);

SINET_INSTANTIATE_CAPTION(float)
SINET_INSTANTIATE_CAPTION(double)

#undef SINET_INSTANTIATE_CAPTION

}  // namespace sinet
