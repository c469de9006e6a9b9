#include "sinet/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace sinet {
namespace {

template <typename T>
T checked(T v) {
  if (!std::isfinite(v)) throw NumericError("grad_check: non-finite loss evaluation");
  return v;
}

double relative_gap(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic));
}

// The central difference, unless a one-sided difference agrees better: a
// ReLU kink within h on one side corrupts only that side.
double coordinate_error(double analytic, double up, double base, double down, double h) {
  const double central = relative_gap(analytic, (up - down) / (2.0 * h));
  const double forward = relative_gap(analytic, (up - base) / h);
  const double backward = relative_gap(analytic, (base - down) / h);
  return std::min({central, forward, backward});
}

}  // namespace

template <typename T>
double grad_check(const LeafLossFn<T>& f, const std::vector<Tensor<T>>& point, T h) {
  if (!(h > T(0))) throw ConfigError("grad_check: step must be positive");
  for (const auto& t : point) {
    if (!t.all_finite()) throw NumericError("grad_check: non-finite point");
  }
  auto evaluate = [&](const std::vector<Tensor<T>>& at) {
    Graph<T> g(false);
    std::vector<Var<T>> leaves;
    for (const auto& t : at) leaves.push_back(g.constant(t));
    return checked(f(g, leaves).value().item());
  };

  std::vector<Tensor<T>> analytic;
  {
    Graph<T> g;
    std::vector<Var<T>> leaves;
    for (const auto& t : point) leaves.push_back(g.leaf(t));
    Var<T> loss = f(g, leaves);
    checked(loss.value().item());
    g.backward(loss);
    for (const auto& v : leaves) analytic.push_back(g.grad(v));
  }

  double worst = 0.0;
  const double base = evaluate(point);
  std::vector<Tensor<T>> probe = point;
  for (std::size_t p = 0; p < probe.size(); ++p) {
    for (std::size_t i = 0; i < probe[p].size(); ++i) {
      const T saved = probe[p][i];
      probe[p][i] = saved + h;
      const double up = evaluate(probe);
      probe[p][i] = saved - h;
      const double down = evaluate(probe);
      probe[p][i] = saved;
      worst = std::max(worst, coordinate_error(analytic[p][i], up, base, down, static_cast<double>(h)));
    }
  }
  return worst;
}

template <typename T>
double grad_check_parameters(const LossFn<T>& f, std::span<Tensor<T>* const> params, T h) {
  if (!(h > T(0))) throw ConfigError("grad_check: step must be positive");
  auto evaluate = [&]() {
    Graph<T> g(false);
    return checked(f(g).value().item());
  };

  std::vector<Tensor<T>> analytic;
  {
    Graph<T> g;
    Var<T> loss = f(g);
    checked(loss.value().item());
    g.backward(loss);
    for (Tensor<T>* p : params) analytic.push_back(g.parameter_grad(*p));
  }

  double worst = 0.0;
  const double base = evaluate();
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor<T>& t = *params[p];
    for (std::size_t i = 0; i < t.size(); ++i) {
      const T saved = t[i];
      t[i] = saved + h;
      const double up = evaluate();
      t[i] = saved - h;
      const double down = evaluate();
      t[i] = saved;
      worst = std::max(worst, coordinate_error(analytic[p][i], up, base, down, static_cast<double>(h)));
    }
  }
  return worst;
}

template double grad_check<float>(const LeafLossFn<float>&, const std::vector<Tensor<float>>&, float);
template double grad_check<double>(const LeafLossFn<double>&, const std::vector<Tensor<double>>&, double);
template double grad_check_parameters<float>(const LossFn<float>&, std::span<Tensor<float>* const>, float);
template double grad_check_parameters<double>(const LossFn<double>&, std::span<Tensor<double>* const>, double);

}  // namespace sinet
