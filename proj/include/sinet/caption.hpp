#pragma once

// Caption decoder. Per word step:
//   h1 = AttnLSTM(h2_prev ++ mean_t g_phi(v_t) ++ drop(relu(E w_prev)))
//   alpha = softmax(w^T tanh(repeat(W_h h1) + W_c g_phi(V)))   over frames
//   v_hat = g_phi(V) alpha,  h_hat = H alpha   (H: HOI hidden states h_1..h_T)
//   h2 = LangLSTM(h1 ++ v_hat ++ h_hat),  logits = W_p h2
// Training is teacher forced; decoding is greedy or beam search.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sinet/config.hpp"
#include "sinet/dataio.hpp"
#include "sinet/hoi.hpp"
#include "sinet/sinet.hpp"

namespace sinet {

// Which encoder outputs reach the language LSTM.
//   img             frames only; HOI is not run and h_hat = 0
//   obj             objects only; v_hat = 0
//   img+obj         both, with a separate attention over H
//   img+obj+coattn  both, H pooled by the frame attention weights
enum class CaptionMode { kImageOnly, kObjectOnly, kNoCoAttention, kCoAttention };

std::string caption_mode_name(CaptionMode m);
CaptionMode parse_caption_mode(const std::string& name);

// Longest caption in words; the token sequence adds BOS and EOS.
inline constexpr std::size_t kMaxCaptionWords = 30;

struct CaptionConfig {
  std::size_t feature_dim = 2048;
  std::size_t phi_dim = 1024;
  double phi_dropout = 0.5;
  std::size_t groups = 2;
  Selection selection = Selection::kDotProduct;
  std::vector<std::size_t> theta_widths = {512};
  double theta_dropout = 0.5;
  std::size_t hoi_hidden = 1024;
  std::size_t vocab_size = 0;
  std::size_t embed_dim = 512;
  double embed_dropout = 0.25;
  std::size_t attn_hidden = 512;
  std::size_t lang_hidden = 512;
  std::size_t attention_dim = 512;  // width of the tanh scoring space
  CaptionMode mode = CaptionMode::kCoAttention;
  NormScope norm_scope = NormScope::kBatch;

  bool uses_objects() const { return mode != CaptionMode::kImageOnly; }
  std::size_t attn_input() const { return lang_hidden + phi_dim + embed_dim; }
  std::size_t lang_input() const { return attn_hidden + phi_dim + hoi_hidden; }
  HoiConfig hoi_config() const;
  void validate() const;

  void write(ConfigMap& out) const;
  static CaptionConfig read(const ConfigMap& in);
};

// Encoder outputs of one video.
template <typename T>
struct CaptionContext {
  Var<T> frames;      // g_phi(V) [phi_dim x T]
  Var<T> mean_frame;  // masked mean over frames [phi_dim]
  Var<T> hoi_states;  // H [hoi_hidden x T]; invalid in image-only mode
  Mask frame_mask;    // empty when every frame is valid
};

template <typename T>
struct DecoderState {
  LstmState<T> attn;
  LstmState<T> lang;
};

template <typename T>
struct DecoderStep {
  DecoderState<T> state;
  Var<T> logits;          // [vocab]
  Var<T> frame_weights;   // [1 x T]
  Var<T> object_weights;  // [1 x T]; equals frame_weights under co-attention
};

// Mean of the unmasked columns of x [d x T].
template <typename T>
Var<T> masked_mean_columns(Var<T> x, const Mask& mask);

// h_hat = sum_t alpha_t h_t for alpha [1 x T] and h_seq [d x T]. ShapeError
// when the lengths differ.
template <typename T>
Var<T> co_attend(Var<T> alpha, Var<T> h_seq);

template <typename T>
class CaptionModel {
 public:
  CaptionModel() = default;
  explicit CaptionModel(const CaptionConfig& config);

  void init(Rng& rng);

  std::vector<CaptionContext<T>> encode(Graph<T>& g, std::span<const VideoSample<T>* const> videos,
                                        const Pass& pass);
  CaptionContext<T> encode(Graph<T>& g, const VideoSample<T>& video, const Pass& pass);

  DecoderState<T> initial_state(Graph<T>& g) const;

  LstmState<T> attention_lstm_step(Graph<T>& g, const LstmState<T>& attn, Var<T> h2_prev, Var<T> mean_frame,
                                   std::size_t word, const Pass& pass);
  // Alpha attention over frames; values and scoring input from g_phi(V).
  AttentionOutput<T> temporal_attend(Graph<T>& g, Var<T> h1, Var<T> frames, const Mask& mask = {});
  // The independent attention over H used without co-attention.
  AttentionOutput<T> object_attend(Graph<T>& g, Var<T> h1, Var<T> hoi_states, const Mask& mask = {});
  // Returns the new language state; logits = W_p h2.
  std::pair<LstmState<T>, Var<T>> language_lstm_step(Graph<T>& g, const LstmState<T>& lang, Var<T> h1,
                                                     Var<T> v_hat, Var<T> h_hat);

  DecoderStep<T> step(Graph<T>& g, const CaptionContext<T>& ctx, const DecoderState<T>& state, std::size_t word,
                      const Pass& pass);

  // Sum over positions of -log p(tokens[i+1] | tokens[..i]). tokens must be
  // BOS w_1 .. w_n EOS with n <= kMaxCaptionWords and only word ids in
  // between (SequenceError otherwise).
  Var<T> caption_nll(Graph<T>& g, const CaptionContext<T>& ctx, std::span<const std::size_t> tokens,
                     const Pass& pass);
  // Mean caption_nll over a batch.
  Var<T> loss(Graph<T>& g, std::span<const VideoSample<T>* const> videos, const Pass& pass);

  void collect(TensorList<T>& params, TensorList<T>& buffers);

  CaptionConfig config;
  MlpBlock<T> phi;
  HoiModule<T> hoi;
  Embedding<T> embed;
  LstmCell<T> attn_lstm;
  LstmCell<T> lang_lstm;
  Linear<T> att_h;  // temporal attention W_h
  Linear<T> att_c;  // temporal attention W_c
  Tensor<T> att_w;
  Linear<T> obj_h;  // attention over H without co-attention
  Linear<T> obj_c;
  Tensor<T> obj_w;
  Linear<T> out;  // W_p, no bias
};

// Throws SequenceError unless tokens is BOS word* EOS with at most
// kMaxCaptionWords words; VocabError for ids outside [0, vocab).
void validate_caption(std::span<const std::size_t> tokens, std::size_t vocab);

// ---------------------------------------------------------------------------
// Decoding

struct DecodeOptions {
  std::size_t beam = 5;
  std::size_t max_len = kMaxCaptionWords;
  bool length_normalize = false;  // rank by log-prob / (words + 1)
};

struct DecodeResult {
  std::vector<std::size_t> words;  // without BOS / EOS
  double log_prob = 0.0;          // includes the EOS step
};

// log softmax in double precision.
template <typename T>
std::vector<double> log_softmax(const Tensor<T>& logits);

// Tokens a decoder may emit: EOS and every word id (PAD, BOS and UNK never).
std::vector<std::size_t> decodable_tokens(std::size_t vocab);

template <typename State>
struct DecodeHypothesis {
  std::vector<std::size_t> words;
  double log_prob = 0.0;
  State state;
  bool finished = false;
};

namespace detail {

inline double rank_score(double log_prob, std::size_t words, bool normalize) {
  return normalize ? log_prob / static_cast<double>(words + 1) : log_prob;
}

// Better hypothesis first: higher score, then fewer words, then smaller ids.
template <typename H>
bool ranks_before(const H& a, const H& b, bool normalize) {
  const double sa = rank_score(a.log_prob, a.words.size(), normalize);
  const double sb = rank_score(b.log_prob, b.words.size(), normalize);
  if (sa != sb) return sa > sb;
  if (a.words.size() != b.words.size()) return a.words.size() < b.words.size();
  return a.words < b.words;
}

}  // namespace detail

// Greedy decoding: the argmax candidate at every step (ties to the lower
// id). step(state, prev_token) returns {next state, log-probs over vocab}.
// The first step is fed BOS; after max_len words only EOS is allowed.
template <typename State, typename StepFn>
DecodeResult greedy_search(State state, StepFn&& step, std::span<const std::size_t> candidates,
                           std::size_t max_len) {
  DecodeResult out;
  std::size_t prev = Vocabulary::kBos;
  for (;;) {
    auto [next, logp] = step(state, prev);
    std::size_t best = Vocabulary::kEos;
    if (out.words.size() < max_len) {
      double best_lp = -std::numeric_limits<double>::infinity();
      for (std::size_t c : candidates) {
        if (logp.at(c) > best_lp) {
          best_lp = logp[c];
          best = c;
        }
      }
    }
    out.log_prob += logp.at(best);
    if (best == Vocabulary::kEos) return out;
    out.words.push_back(best);
    state = std::move(next);
    prev = best;
  }
}

// Beam search keeping the `beam` best hypotheses per step, finished ones
// included; stops once every kept hypothesis has emitted EOS.
template <typename State, typename StepFn>
DecodeResult beam_search(State initial, StepFn&& step, std::span<const std::size_t> candidates,
                         const DecodeOptions& opt) {
  if (opt.beam < 1) throw ConfigError("beam size must be at least 1");
  using Hyp = DecodeHypothesis<State>;
  std::vector<Hyp> beam;
  beam.push_back({{}, 0.0, std::move(initial), false});
  auto before = [&](const Hyp& a, const Hyp& b) { return detail::ranks_before(a, b, opt.length_normalize); };
  for (;;) {
    bool any_alive = false;
    std::vector<Hyp> pool;
    for (Hyp& h : beam) {
      if (h.finished) {
        pool.push_back(std::move(h));
        continue;
      }
      any_alive = true;
      const std::size_t prev = h.words.empty() ? Vocabulary::kBos : h.words.back();
      auto [next, logp] = step(h.state, prev);
      const bool at_limit = h.words.size() >= opt.max_len;
      for (std::size_t c : candidates) {
        if (at_limit && c != Vocabulary::kEos) continue;
        Hyp e;
        e.words = h.words;
        e.log_prob = h.log_prob + logp.at(c);
        if (c == Vocabulary::kEos) {
          e.finished = true;
        } else {
          e.words.push_back(c);
          e.state = next;
        }
        pool.push_back(std::move(e));
      }
    }
    if (!any_alive) {
      beam = std::move(pool);
      break;
    }
    const std::size_t keep = std::min(opt.beam, pool.size());
    std::partial_sort(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(keep), pool.end(), before);
    pool.resize(keep);
    beam = std::move(pool);
  }
  std::sort(beam.begin(), beam.end(), before);
  return {beam.front().words, beam.front().log_prob};
}

// Model decoding of one video; beam == 1 runs greedy_search.
template <typename T>
DecodeResult decode_caption(CaptionModel<T>& model, const VideoSample<T>& video, const DecodeOptions& opt);

// "<video_id>\t<space-joined tokens>"
std::string format_caption_line(const std::string& id, const std::vector<std::size_t>& words,
                                const Vocabulary& vocab);

}  // namespace sinet
