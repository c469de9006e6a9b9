#include "sinet/tasks.hpp"

#include <algorithm>

namespace sinet {
namespace {

template <typename T>
std::vector<const VideoSample<T>*> chunk(const Dataset<T>& data, std::size_t begin, std::size_t batch) {
  std::vector<const VideoSample<T>*> out;
  for (std::size_t i = begin; i < std::min(data.size(), begin + batch); ++i) out.push_back(&data.samples[i]);
  return out;
}

}  // namespace

template <typename T>
ActionEval evaluate_action(SinetModel<T>& model, const Dataset<T>& data, std::size_t batch) {
  if (data.empty()) throw EmptyInputError("evaluation set is empty");
  if (batch == 0) throw ConfigError("evaluation batch must be positive");
  ActionEval r;
  const std::size_t k5 = std::min<std::size_t>(5, model.config.num_classes);
  for (std::size_t s = 0; s < data.size(); s += batch) {
    std::vector<const VideoSample<T>*> b = chunk(data, s, batch);
    std::vector<std::size_t> labels;
    for (const VideoSample<T>* v : b) {
      if (!v->label) throw LabelError("video '" + v->id + "' has no class label");
      labels.push_back(*v->label);
    }
    Graph<T> g(false);
    Var<T> logits = model.forward_batch(g, std::span<const VideoSample<T>* const>(b), Pass::eval());
    const std::span<const std::size_t> ls(labels);
    const double n = static_cast<double>(b.size());
    r.loss += static_cast<double>(cross_entropy(logits, ls).value().item()) * n;
    r.top1 += topk_accuracy(logits.value(), ls, 1) * n;
    r.top5 += topk_accuracy(logits.value(), ls, k5) * n;
    const Tensor<T>& z = logits.value();
    const std::size_t cols = b.size();
    for (std::size_t j = 0; j < cols; ++j) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < model.config.num_classes; ++c) {
        if (z[c * cols + j] > z[best * cols + j]) best = c;
      }
      r.predictions.push_back(best);
    }
  }
  const double total = static_cast<double>(data.size());
  r.loss /= total;
  r.top1 /= total;
  r.top5 /= total;
  return r;
}

template <typename T>
CaptionEval evaluate_caption(CaptionModel<T>& model, const Dataset<T>& data, bool decode, const DecodeOptions& opt,
                             std::size_t batch) {
  if (data.empty()) throw EmptyInputError("evaluation set is empty");
  if (batch == 0) throw ConfigError("evaluation batch must be positive");
  CaptionEval r;
  for (std::size_t s = 0; s < data.size(); s += batch) {
    std::vector<const VideoSample<T>*> b = chunk(data, s, batch);
    Graph<T> g(false);
    const double n = static_cast<double>(b.size());
    r.nll += static_cast<double>(model.loss(g, std::span<const VideoSample<T>* const>(b), Pass::eval()).value().item()) * n;
  }
  r.nll /= static_cast<double>(data.size());
  if (!decode) return r;
  std::vector<Sentence> cands;
  std::vector<std::vector<Sentence>> refs;
  std::size_t exact = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const VideoSample<T>& v = data.samples[i];
    DecodeResult d = decode_caption(model, v, opt);
    const Sentence ref = data.vocab.decode(v.caption);
    const Sentence cand = data.vocab.decode(d.words);
    exact += cand == ref ? 1 : 0;
    cands.push_back(cand);
    refs.push_back({ref});
    r.decodes.push_back(std::move(d.words));
  }
  r.bleu4 = bleu(cands, refs, 4).back();
  r.rouge_l = rouge_l(cands, refs);
  r.exact = static_cast<double>(exact) / static_cast<double>(data.size());
  return r;
}

template <typename T>
TrainHooks<T> action_hooks(SinetModel<T>& model, const Dataset<T>& val) {
  TrainHooks<T> h;
  h.loss = [&model](Graph<T>& g, std::span<const VideoSample<T>* const> b, const Pass& p) {
    return model.loss(g, b, p);
  };
  h.evaluate = [&model, &val] {
    const ActionEval e = evaluate_action(model, val);
    return std::pair<double, double>(e.loss, e.top1);
  };
  model.collect(h.params, h.buffers);
  model.config.write(h.model_config);
  return h;
}

template <typename T>
TrainHooks<T> caption_hooks(CaptionModel<T>& model, const Dataset<T>& val) {
  TrainHooks<T> h;
  h.loss = [&model](Graph<T>& g, std::span<const VideoSample<T>* const> b, const Pass& p) {
    return model.loss(g, b, p);
  };
  h.evaluate = [&model, &val] {
    DecodeOptions greedy;
    greedy.beam = 1;
    const CaptionEval e = evaluate_caption(model, val, true, greedy);
    return std::pair<double, double>(e.nll, e.bleu4);
  };
  model.collect(h.params, h.buffers);
  model.config.write(h.model_config);
  return h;
}

#define SINET_INSTANTIATE_TASKS(T)                                                                     \
  template ActionEval evaluate_action<T>(SinetModel<T>&, const Dataset<T>&, std::size_t);              \
  template CaptionEval evaluate_caption<T>(CaptionModel<T>&, const Dataset<T>&, bool, const DecodeOptions&, \
                                           std::size_t);                                               \
  template TrainHooks<T> action_hooks<T>(SinetModel<T>&, const Dataset<T>&);                           \
  template TrainHooks<T> caption_hooks<T>(CaptionModel<T>&, const Dataset<T>&);

SINET_INSTANTIATE_TASKS(float)
SINET_INSTANTIATE_TASKS(double)

#undef SINET_INSTANTIATE_TASKS

}  // namespace sinet
