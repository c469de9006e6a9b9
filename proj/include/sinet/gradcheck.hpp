#pragma once

// Finite-difference verification of reverse-mode gradients. For each
// coordinate the error is
//   |analytic - numeric| / max(1, |analytic|)
// with numeric the central difference (f(x + h e_i) - f(x - h e_i)) / 2h, or
// one of the one-sided differences when it agrees better (a ReLU kink
// closer than h spoils only one side). grad_check returns the maximum over
// all coordinates.

#include <functional>
#include <span>
#include <vector>

#include "sinet/autograd.hpp"

namespace sinet {

template <typename T>
using LeafLossFn = std::function<Var<T>(Graph<T>&, std::span<const Var<T>>)>;

template <typename T>
using LossFn = std::function<Var<T>(Graph<T>&)>;

// Differentiates f with respect to every tensor in `point`, each entering f
// as a graph leaf in the given order.
template <typename T>
double grad_check(const LeafLossFn<T>& f, const std::vector<Tensor<T>>& point, T h);

// Differentiates f with respect to tensors that f reads by address (model
// parameters). Each tensor is perturbed in place and restored afterwards.
template <typename T>
double grad_check_parameters(const LossFn<T>& f, std::span<Tensor<T>* const> params, T h);

}  // namespace sinet
