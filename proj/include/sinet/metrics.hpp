#pragma once

// Caption metrics over token sequences.

#include <string>
#include <vector>

namespace sinet {

using Sentence = std::vector<std::string>;

// Corpus BLEU@1..n_max: clipped n-gram precisions pooled over the corpus,
// geometric mean, brevity penalty against the closest reference length.
// references[i] holds the references of candidates[i]. A corpus of empty
// candidates scores 0.
std::vector<double> bleu(const std::vector<Sentence>& candidates, const std::vector<std::vector<Sentence>>& references,
                         std::size_t n_max = 4);
std::vector<double> bleu(const Sentence& candidate, const std::vector<Sentence>& references, std::size_t n_max = 4);

std::size_t lcs_length(const Sentence& a, const Sentence& b);

// LCS F-measure, the best over references; 0 for an empty candidate.
double rouge_l(const Sentence& candidate, const std::vector<Sentence>& references, double beta = 1.2);
// Mean sentence ROUGE-L over a corpus.
double rouge_l(const std::vector<Sentence>& candidates, const std::vector<std::vector<Sentence>>& references,
               double beta = 1.2);

}  // namespace sinet
