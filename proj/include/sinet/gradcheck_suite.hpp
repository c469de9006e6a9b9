#pragma once

// Named finite-difference checks over every differentiable op and the
// end-to-end graphs (action loss, caption NLL, HOI rollout).

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "sinet/gradcheck.hpp"

namespace sinet {

struct GradcheckCase {
  std::string name;
  // Max coordinate error of one randomized instance.
  std::function<double(std::uint64_t seed)> run;
};

template <typename T>
std::vector<GradcheckCase> gradcheck_cases(T h);

struct GradcheckReport {
  std::string name;
  double max_error = 0.0;
  std::size_t seeds = 0;
};

// Runs each case (optionally only names containing `filter`) for seeds
// first_seed .. first_seed + seeds - 1.
template <typename T>
std::vector<GradcheckReport> run_gradcheck(std::size_t seeds, T h, const std::string& filter = "",
                                           std::uint64_t first_seed = 1);

}  // namespace sinet
