#pragma once

// Central finite-difference oracle. Independent of the backward rules: it
// only evaluates forward passes on fresh graphs.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "motalign/autodiff.hpp"
#include "motalign/random.hpp"

namespace motalign::check {

using ScalarFn = std::function<ad::Var(ad::Graph&, const std::vector<ad::Var>&)>;

struct GradCheckResult {
  double relative_error = 0.0;  // |analytic - numeric|_2 / max(|analytic|_2, |numeric|_2)
  double max_abs_diff = 0.0;
};

inline double evaluate(const ScalarFn& fn, const std::vector<ad::Tensor>& inputs) {
  ad::Graph g;
  std::vector<ad::Var> vars;
  for (const auto& t : inputs) vars.push_back(g.constant(t));
  return fn(g, vars).value().item();
}

inline GradCheckResult gradient_check(const ScalarFn& fn, const std::vector<ad::Tensor>& inputs, double h = 1e-4) {
  std::vector<ad::Tensor> analytic;
  {
    ad::Graph g;
    std::vector<ad::Var> vars;
    for (auto t : inputs) vars.push_back(g.leaf(t.set_requires_grad(true)));
    g.backward(fn(g, vars));
    for (const auto& v : vars) analytic.push_back(g.grad(v));
  }
  double diff2 = 0.0, a2 = 0.0, n2 = 0.0, max_abs = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      auto plus = inputs;
      auto minus = inputs;
      plus[k].mutable_data()[i] += h;
      minus[k].mutable_data()[i] -= h;
      const double numeric = (evaluate(fn, plus) - evaluate(fn, minus)) / (2.0 * h);
      const double a = analytic[k][i];
      diff2 += (a - numeric) * (a - numeric);
      a2 += a * a;
      n2 += numeric * numeric;
      max_abs = std::max(max_abs, std::abs(a - numeric));
    }
  }
  const double denom = std::max(std::sqrt(a2), std::sqrt(n2));
  return {denom > 0.0 ? std::sqrt(diff2) / denom : std::sqrt(diff2), max_abs};
}

inline ad::Tensor random_tensor(Rng& rng, ad::Shape shape, double scale = 1.0) {
  std::vector<double> v(ad::shape_numel(shape));
  for (auto& x : v) x = scale * rng.normal();
  return ad::Tensor(std::move(shape), std::move(v));
}

// Contracts an arbitrary-shaped output with fixed random weights so that
// every output element influences the scalar root.
inline ad::Var weighted_sum(ad::Graph& g, ad::Var out, std::uint64_t seed) {
  Rng rng(seed);
  auto w = g.constant(random_tensor(rng, out.shape()));
  return ad::dot(out, w);
}

}  // namespace motalign::check
