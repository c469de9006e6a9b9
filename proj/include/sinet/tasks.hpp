#pragma once

// Evaluation and training glue for the action and caption tasks.

#include <string>
#include <vector>

#include "sinet/caption.hpp"
#include "sinet/metrics.hpp"
#include "sinet/sinet.hpp"
#include "sinet/train.hpp"

namespace sinet {

struct ActionEval {
  double loss = 0;
  double top1 = 0;
  double top5 = 0;  // top-min(5, C)
  std::vector<std::size_t> predictions;
};

// Eval-mode pass over `data` in chunks of `batch` videos.
template <typename T>
ActionEval evaluate_action(SinetModel<T>& model, const Dataset<T>& data, std::size_t batch = 100);

struct CaptionEval {
  double nll = 0;  // mean teacher-forced NLL per caption
  double bleu4 = 0;
  double rouge_l = 0;
  double exact = 0;  // fraction of decodes equal to the reference
  std::vector<std::vector<std::size_t>> decodes;
};

// Teacher-forced NLL, plus decoding metrics when decode is set.
template <typename T>
CaptionEval evaluate_caption(CaptionModel<T>& model, const Dataset<T>& data, bool decode,
                             const DecodeOptions& opt = {}, std::size_t batch = 100);

// Hooks for train_loop. The evaluate hook reports top-1 (action) or greedy
// BLEU-4 (caption) on `val`.
template <typename T>
TrainHooks<T> action_hooks(SinetModel<T>& model, const Dataset<T>& val);
template <typename T>
TrainHooks<T> caption_hooks(CaptionModel<T>& model, const Dataset<T>& val);

}  // namespace sinet
