#pragma once

#include <functional>
#include <string>
#include <vector>

namespace sinet::acceptance {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int number;
  std::string title;
  std::function<Outcome()> run;
};

std::vector<Criterion> criteria();

Outcome flop_reproduction();
Outcome gradient_correctness();
Outcome attention_invariants();
Outcome compositional_oracles();
Outcome triad_ablation();
Outcome caption_pipeline();
Outcome determinism_and_resume();
Outcome scale_disclaimer();

}  // namespace sinet::acceptance
