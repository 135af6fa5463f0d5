#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "mpa/error.hpp"
#include "mpa/tensor.hpp"

namespace mpa {

// Central-difference gradient check in 64-bit. `f` rebuilds the loss graph
// from the current values of `params` on every call; elements of params are
// perturbed in place. Optionally restricts each parameter tensor to a subset
// of element indices (empty = all), which keeps large-model checks tractable
// while still touching every parameter tensor.
//
// Returns max over checked elements of |analytic - numeric| / max(1, |numeric|).
inline double grad_check(
    const std::function<TensorPtr<double>()>& f,
    const std::vector<TensorPtr<double>>& params, double eps,
    const std::vector<std::vector<std::size_t>>* element_subsets = nullptr) {
  if (!(eps >= 1e-6 && eps <= 1e-4))
    throw std::invalid_argument("grad_check: eps must lie in [1e-6, 1e-4]");
  if (element_subsets && element_subsets->size() != params.size())
    throw std::invalid_argument("grad_check: subset list length mismatch");

  auto eval = [&]() {
    auto root = f();
    double v = root->scalar();
    if (!std::isfinite(v)) throw NumericError("grad_check: non-finite loss");
    return root;
  };

  auto root = eval();
  Backprop<double> bp(root);
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (const auto& p : params) analytic.push_back(bp.grad(p));

  double worst = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& val = params[pi]->value;
    std::vector<std::size_t> all;
    const std::vector<std::size_t>* idx = nullptr;
    if (element_subsets && !(*element_subsets)[pi].empty()) {
      idx = &(*element_subsets)[pi];
    } else {
      all.resize(val.size());
      for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
      idx = &all;
    }
    for (std::size_t i : *idx) {
      double saved = val[i];
      val[i] = saved + eps;
      double fp = eval()->scalar();
      val[i] = saved - eps;
      double fm = eval()->scalar();
      val[i] = saved;
      double numeric = (fp - fm) / (2.0 * eps);
      double err = std::fabs(analytic[pi][i] - numeric) /
                   std::max(1.0, std::fabs(numeric));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace mpa
