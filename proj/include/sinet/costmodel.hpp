#pragma once

// Analytic forward-pass FLOP counts per video. One multiply-accumulate
// counts as one operation; softmax and normalization are not counted.
//
// Recurrent HOI, per timestep:
//   mlp      N*K*(d_in*d + 2*d*d)     three projection layers per group
//   affines  2*K*d*d                  W_h h and W_c v per group
//   matmuls  2*K*N*N*d                X^T X and alpha * P^T per group
//   lstm     8*2*K*d*d
// Tuple baselines, per timestep (C = C(N, arity)):
//   mlp      C*(arity*d_in)*d + 2*C*d*d
//   lstm     8*2*d*d
// Every total is the per-step sum times T.

#include <optional>
#include <string>
#include <vector>

namespace sinet {

struct CostReport {
  std::string design;
  std::size_t timesteps = 0;
  // Per-timestep terms.
  double mlp = 0;
  double attention_affines = 0;
  double attention_matmuls = 0;
  double lstm = 0;
  // MLP cost split per layer, per timestep.
  std::vector<double> mlp_layers;
  std::optional<double> reference;  // published total, when there is one
  std::string note;

  double per_step() const { return mlp + attention_affines + attention_matmuls + lstm; }
  double total() const { return per_step() * static_cast<double>(timesteps); }
};

// ConfigError on any zero argument.
CostReport flop_hoi(std::size_t n, std::size_t t, std::size_t k, std::size_t d_in, std::size_t d_hid);
// ConfigError when n < arity or an argument is zero.
CostReport flop_tuples(std::size_t n, std::size_t t, std::size_t arity, std::size_t d_in, std::size_t d_hid);
// Mean pooling over `stages` projected objects, then the LSTM.
CostReport flop_meanpool(std::size_t n, std::size_t t, std::size_t d_in, std::size_t d_hid,
                         std::size_t stages = 3);

struct FlopTableParams {
  std::size_t objects = 15;
  std::size_t timesteps = 10;
  std::size_t feature_dim = 2048;
  std::size_t hidden = 2048;
};

// Rows in display order: mean-pool, pairs, triplets, K=1, K=2, K=3. With
// the default parameters each row carries its published total, and the
// rows whose formula departs from it carry a note.
std::vector<CostReport> flop_table(const FlopTableParams& params = {});

// Aligned text, or tab-separated with a header row.
std::string format_flop_table(const std::vector<CostReport>& rows, bool tsv);

}  // namespace sinet
