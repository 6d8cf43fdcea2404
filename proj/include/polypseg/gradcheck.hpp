#pragma once
// Central finite-difference verification of analytic gradients.

#include <cmath>
#include <functional>
#include <limits>
#include <random>

#include "polypseg/tensor.hpp"

namespace polypseg {

struct GradCheckOptions {
  double eps = 1e-5;
  // 0 checks every coordinate; otherwise a seeded sample of this many per input.
  std::size_t max_coords_per_input = 0;
  std::uint64_t seed = 0;
  // When the one-sided differences disagree by more than `kink_threshold`
  // (relative), a ReLU or max corner lies within ±eps; retry with eps/10 up
  // to this many times. Only forward values drive this, never the analytic
  // gradient.
  int kink_refinements = 3;
  double kink_threshold = 1e-3;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_coordinate = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coordinates_checked = 0;
  // Coordinates whose step had to be shrunk to step over a corner.
  std::size_t coordinates_refined = 0;
};

namespace detail {

template <Real T>
bool all_finite(std::span<const T> v) {
  return std::all_of(v.begin(), v.end(), [](T x) { return std::isfinite(x); });
}

// Throws NumericError naming the earliest recorded op whose output is not finite.
template <Real T>
void require_finite_graph(const Tensor<T>& out) {
  if (all_finite<T>(out.data())) return;
  const Node<T>* first = out.node();
  std::vector<const Node<T>*> stack{out.node()};
  std::unordered_set<const Node<T>*> seen{out.node()};
  while (!stack.empty()) {
    const auto* n = stack.back();
    stack.pop_back();
    if (!all_finite<T>(n->value) && n->id < first->id) first = n;
    for (const auto& p : n->parents)
      if (seen.insert(p.get()).second) stack.push_back(p.get());
  }
  throw NumericError(std::string("non-finite values produced by op '") + first->op + "' (node " +
                     std::to_string(first->id) + ")");
}

}  // namespace detail

/// Max over checked coordinates of
///   |analytic − central difference| / max(1, |analytic|, |numeric|).
/// `fn` must return a scalar and read the current values of `inputs`, which
/// are perturbed in place and restored afterwards.
template <Real T>
GradCheckResult grad_check(const std::function<Tensor<T>()>& fn, std::vector<Tensor<T>> inputs,
                           const GradCheckOptions& options = {}) {
  if (!(options.eps > 0)) throw ConfigError("grad_check: eps must be positive");
  if (options.kink_refinements < 0 || !(options.kink_threshold > 0))
    throw ConfigError("grad_check: invalid kink refinement settings");
  for (auto& in : inputs) {
    if (!in.requires_grad()) throw ConfigError("grad_check: inputs must require gradients");
    in.zero_grad();
  }
  auto out = fn();
  detail::require_finite_graph(out);
  backward(out);

  std::mt19937_64 rng(options.seed);
  GradCheckResult result;
  auto evaluate = [&]() {
    NoGradGuard guard;
    auto v = fn();
    detail::require_finite_graph(v);
    return static_cast<double>(v.item());
  };
  const double center = evaluate();
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto& in = inputs[k];
    const std::vector<T> analytic = in.has_grad() ? std::vector<T>(in.grad().begin(), in.grad().end())
                                                  : std::vector<T>(in.numel(), T(0));
    std::vector<std::size_t> coords(in.numel());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (options.max_coords_per_input && coords.size() > options.max_coords_per_input) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(options.max_coords_per_input);
      std::sort(coords.begin(), coords.end());
    }
    auto values = in.mutable_data();
    for (auto i : coords) {
      const T saved = values[i];
      double h = options.eps;
      double numeric = 0.0;
      for (int attempt = 0;; ++attempt) {
        values[i] = saved + static_cast<T>(h);
        const double plus = evaluate();
        values[i] = saved - static_cast<T>(h);
        const double minus = evaluate();
        values[i] = saved;
        numeric = (plus - minus) / (2.0 * h);
        const double fwd = (plus - center) / h, bwd = (center - minus) / h;
        const double gap = std::abs(fwd - bwd) / std::max({1.0, std::abs(fwd), std::abs(bwd)});
        if (gap <= options.kink_threshold || attempt >= options.kink_refinements) break;
        if (attempt == 0) ++result.coordinates_refined;
        h /= 10.0;
      }
      const double a = analytic[i];
      const double err = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      ++result.coordinates_checked;
      if (err >= result.max_rel_error) {
        result.max_rel_error = err;
        result.worst_input = k;
        result.worst_coordinate = i;
        result.worst_analytic = a;
        result.worst_numeric = numeric;
      }
    }
  }
  return result;
}

template <Real T>
GradCheckResult grad_check(const std::function<Tensor<T>()>& fn, std::vector<Tensor<T>> inputs, double eps) {
  GradCheckOptions options;
  options.eps = eps;
  return grad_check(fn, std::move(inputs), options);
}

}  // namespace polypseg
