#include "sinet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <map>

#include "sinet/error.hpp"

namespace sinet {
namespace {

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts ngrams(const Sentence& s, std::size_t n) {
  NgramCounts out;
  if (s.size() < n) return out;
  for (std::size_t i = 0; i + n <= s.size(); ++i) ++out[Sentence(s.begin() + i, s.begin() + i + n)];
  return out;
}

}  // namespace

std::vector<double> bleu(const std::vector<Sentence>& candidates, const std::vector<std::vector<Sentence>>& references,
                         std::size_t n_max) {
  if (candidates.size() != references.size()) throw ShapeError("bleu: candidate and reference counts differ");
  if (n_max == 0) throw ConfigError("bleu: n_max must be at least 1");
  std::vector<double> matched(n_max, 0.0);
  std::vector<double> total(n_max, 0.0);
  double cand_len = 0;
  double ref_len = 0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const Sentence& cand = candidates[i];
    const auto& refs = references[i];
    if (refs.empty()) throw EmptyInputError("bleu: candidate " + std::to_string(i) + " has no reference");
    cand_len += static_cast<double>(cand.size());
    std::size_t closest = refs.front().size();
    for (const Sentence& r : refs) {
      const auto dr = std::labs(static_cast<long>(r.size()) - static_cast<long>(cand.size()));
      const auto dc = std::labs(static_cast<long>(closest) - static_cast<long>(cand.size()));
      if (dr < dc || (dr == dc && r.size() < closest)) closest = r.size();
    }
    ref_len += static_cast<double>(closest);
    for (std::size_t n = 1; n <= n_max; ++n) {
      NgramCounts max_ref;
      for (const Sentence& r : refs) {
        for (const auto& [gram, count] : ngrams(r, n)) max_ref[gram] = std::max(max_ref[gram], count);
      }
      for (const auto& [gram, count] : ngrams(cand, n)) {
        auto it = max_ref.find(gram);
        matched[n - 1] += static_cast<double>(std::min(count, it == max_ref.end() ? 0 : it->second));
        total[n - 1] += static_cast<double>(count);
      }
    }
  }
  std::vector<double> scores(n_max, 0.0);
  if (cand_len == 0) return scores;
  const double bp = cand_len > ref_len ? 1.0 : std::exp(1.0 - ref_len / cand_len);
  double log_sum = 0;
  for (std::size_t n = 1; n <= n_max; ++n) {
    if (matched[n - 1] == 0 || total[n - 1] == 0) break;
    log_sum += std::log(matched[n - 1] / total[n - 1]);
    scores[n - 1] = bp * std::exp(log_sum / static_cast<double>(n));
  }
  return scores;
}

std::vector<double> bleu(const Sentence& candidate, const std::vector<Sentence>& references, std::size_t n_max) {
  return bleu(std::vector<Sentence>{candidate}, std::vector<std::vector<Sentence>>{references}, n_max);
}

std::size_t lcs_length(const Sentence& a, const Sentence& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0);
  std::vector<std::size_t> cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l(const Sentence& candidate, const std::vector<Sentence>& references, double beta) {
  double best = 0;
  if (candidate.empty()) return 0;
  const double b2 = beta * beta;
  for (const Sentence& r : references) {
    if (r.empty()) continue;
    const double lcs = static_cast<double>(lcs_length(candidate, r));
    if (lcs == 0) continue;
    const double p = lcs / static_cast<double>(candidate.size());
    const double rec = lcs / static_cast<double>(r.size());
    best = std::max(best, (1 + b2) * p * rec / (rec + b2 * p));
  }
  return best;
}

double rouge_l(const std::vector<Sentence>& candidates, const std::vector<std::vector<Sentence>>& references,
               double beta) {
  if (candidates.size() != references.size()) throw ShapeError("rouge_l: candidate and reference counts differ");
  if (candidates.empty()) return 0;
  double sum = 0;
  for (std::size_t i = 0; i < candidates.size(); ++i) sum += rouge_l(candidates[i], references[i], beta);
  return sum / static_cast<double>(candidates.size());
}

}  // namespace sinet
