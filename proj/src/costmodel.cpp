#include "sinet/costmodel.hpp"

#include <algorithm>
#include <cstdio>

#include "sinet/error.hpp"
#include "sinet/hoi.hpp"

namespace sinet {
namespace {

void require_positive(std::initializer_list<std::size_t> args, const char* what) {
  for (std::size_t a : args) {
    if (a == 0) throw ConfigError(std::string(what) + ": all arguments must be >= 1");
  }
}

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

}  // namespace

CostReport flop_hoi(std::size_t n, std::size_t t, std::size_t k, std::size_t d_in, std::size_t d_hid) {
  require_positive({n, t, k, d_in, d_hid}, "flop_hoi");
  const double N = static_cast<double>(n);
  const double K = static_cast<double>(k);
  const double din = static_cast<double>(d_in);
  const double d = static_cast<double>(d_hid);
  CostReport r;
  r.design = "SINet (K=" + std::to_string(k) + ")";
  r.timesteps = t;
  r.mlp_layers = {N * din * d * K, N * d * d * K, N * d * d * K};
  for (double l : r.mlp_layers) r.mlp += l;
  r.attention_affines = 2 * d * d * K;
  r.attention_matmuls = 2 * N * N * d * K;
  r.lstm = 8 * 2 * K * d * d;
  return r;
}

CostReport flop_tuples(std::size_t n, std::size_t t, std::size_t arity, std::size_t d_in, std::size_t d_hid) {
  require_positive({n, t, arity, d_in, d_hid}, "flop_tuples");
  if (n < arity) {
    throw ConfigError("flop_tuples: " + std::to_string(n) + " objects cannot form tuples of " +
                      std::to_string(arity));
  }
  const double c = static_cast<double>(combinations(n, arity));
  const double din = static_cast<double>(d_in);
  const double d = static_cast<double>(d_hid);
  CostReport r;
  r.design = arity == 2 ? "Obj pairs" : arity == 3 ? "Obj triplets" : "Obj " + std::to_string(arity) + "-tuples";
  r.timesteps = t;
  r.mlp_layers = {c * static_cast<double>(arity) * din * d, c * d * d, c * d * d};
  for (double l : r.mlp_layers) r.mlp += l;
  r.lstm = 8 * 2 * d * d;
  return r;
}

CostReport flop_meanpool(std::size_t n, std::size_t t, std::size_t d_in, std::size_t d_hid, std::size_t stages) {
  require_positive({n, t, d_in, d_hid, stages}, "flop_meanpool");
  const double N = static_cast<double>(n);
  const double d = static_cast<double>(d_hid);
  CostReport r;
  r.design = "Obj mean-pool";
  r.timesteps = t;
  r.mlp_layers.push_back(N * static_cast<double>(d_in) * d);
  for (std::size_t s = 1; s < stages; ++s) r.mlp_layers.push_back(N * d * d);
  for (double l : r.mlp_layers) r.mlp += l;
  r.lstm = 8 * 2 * d * d;
  return r;
}

std::vector<CostReport> flop_table(const FlopTableParams& p) {
  const std::size_t n = p.objects;
  const std::size_t t = p.timesteps;
  std::vector<CostReport> rows;
  rows.push_back(flop_meanpool(n, t, p.feature_dim, p.hidden));
  rows.push_back(flop_tuples(n, t, 2, p.feature_dim, p.hidden));
  if (n >= 3) rows.push_back(flop_tuples(n, t, 3, p.feature_dim, p.hidden));
  for (std::size_t k = 1; k <= 3; ++k) rows.push_back(flop_hoi(n, t, k, p.feature_dim, p.hidden));

  const FlopTableParams defaults;
  const bool canonical = p.objects == defaults.objects && p.timesteps == defaults.timesteps &&
                         p.feature_dim == defaults.feature_dim && p.hidden == defaults.hidden;
  if (!canonical) return rows;
  const double published[] = {1.9e9, 18.3e9, 77.0e9, 2.7e9, 5.3e9, 8.0e9};
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i].reference = published[i];
  const CostReport two_stage = flop_meanpool(n, t, p.feature_dim, p.hidden, 2);
  rows[0].note = "deviation: published 1.9e9; a two-stage projection gives " + sci(two_stage.total());
  rows[2].note = "deviation: published 77.0e9 is not derivable from the pair-row convention";
  return rows;
}

std::string format_flop_table(const std::vector<CostReport>& rows, bool tsv) {
  const std::vector<std::string> header = {"design", "mlp/step",  "affine/step", "matmul/step", "lstm/step",
                                           "T",      "total",     "reference",   "ratio",       "note"};
  std::vector<std::vector<std::string>> cells = {header};
  for (const CostReport& r : rows) {
    std::vector<std::string> row = {r.design,
                                    sci(r.mlp),
                                    sci(r.attention_affines),
                                    sci(r.attention_matmuls),
                                    sci(r.lstm),
                                    std::to_string(r.timesteps),
                                    sci(r.total()),
                                    r.reference ? sci(*r.reference) : "-",
                                    "-",
                                    r.note.empty() ? "-" : r.note};
    if (r.reference) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.3f", r.total() / *r.reference);
      row[8] = buf;
    }
    cells.push_back(std::move(row));
  }
  std::string out;
  if (tsv) {
    for (const auto& row : cells) {
      for (std::size_t i = 0; i < row.size(); ++i) out += (i ? "\t" : "") + row[i];
      out += "\n";
    }
    return out;
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& row : cells)
    for (std::size_t i = 0; i + 1 < row.size(); ++i) width[i] = std::max(width[i], row[i].size());
  for (const auto& row : cells) {
    std::string line;
    for (std::size_t i = 0; i < row.size(); ++i) {
      line += row[i];
      if (i + 1 < row.size()) line += std::string(width[i] - row[i].size() + 2, ' ');
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out += line + "\n";
  }
  return out;
}

}  // namespace sinet
