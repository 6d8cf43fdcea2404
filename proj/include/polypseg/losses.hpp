#pragma once
// Segmentation losses over probability maps and binary targets.

#include "polypseg/ops.hpp"

namespace polypseg {

/// Coefficients of  alpha·dice + beta·bce + gamma·focal.
struct LossWeights {
  double alpha = 1.0;
  double beta = 1.0;
  double gamma = 1.0;
};

/// Focal loss: balance · (1 − x)^focusing · (−log x), x = probability of the true class.
struct FocalParams {
  double balance = 0.25;
  double focusing = 2.0;
};

inline constexpr double kProbabilityClamp = 1e-7;

namespace detail {

template <Real T>
void check_loss_inputs(const Tensor<T>& pred, const Tensor<T>& target, std::string_view op) {
  if (pred.shape() != target.shape())
    throw DimensionError(std::string(op) + ": prediction " + pred.shape().str() + " vs target " +
                         target.shape().str());
  for (T y : target.data())
    if (y != T(0) && y != T(1))
      throw ValidationError(std::string(op) + ": target values must be 0 or 1");
}

template <Real T>
T clamp_probability(T p) {
  const T lo = static_cast<T>(kProbabilityClamp);
  return std::clamp(p, lo, T(1) - lo);
}

template <Real T>
bool clamped(T p) {
  const T lo = static_cast<T>(kProbabilityClamp);
  return p < lo || p > T(1) - lo;
}

}  // namespace detail

/// Pixel mean of −[y log p + (1 − y) log(1 − p)], p clamped to [1e-7, 1 − 1e-7].
template <Real T>
Tensor<T> bce_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  detail::check_loss_inputs(pred, target, "bce_loss");
  auto P = pred.data();
  auto Y = target.data();
  const T inv = T(1) / static_cast<T>(P.size());
  T acc = 0;
  for (std::size_t i = 0; i < P.size(); ++i) {
    const T p = detail::clamp_probability(P[i]);
    acc += -(Y[i] * std::log(p) + (T(1) - Y[i]) * std::log(T(1) - p));
  }
  auto *pn = pred.node(), *yn = target.node();
  return make_result<T>(Shape{}, {acc * inv}, "bce_loss", {pred}, [=](std::span<const T> g) {
    T* gp = grad_sink(pn);
    if (!gp) return;
    for (std::size_t i = 0; i < pn->value.size(); ++i) {
      if (detail::clamped(pn->value[i])) continue;
      const T p = pn->value[i], y = yn->value[i];
      gp[i] += g[0] * inv * (-y / p + (T(1) - y) / (T(1) - p));
    }
  });
}

/// 1 − (2 Σ c·d + ε) / (Σ c² + Σ d² + ε) over every pixel of the batch.
template <Real T>
Tensor<T> dice_loss(const Tensor<T>& pred, const Tensor<T>& target, double eps = 1.0) {
  if (!(eps > 0)) throw ConfigError("dice_loss: eps must be positive");
  detail::check_loss_inputs(pred, target, "dice_loss");
  auto C = pred.data();
  auto D = target.data();
  T cd = 0, cc = 0, dd = 0;
  for (std::size_t i = 0; i < C.size(); ++i) {
    cd += C[i] * D[i];
    cc += C[i] * C[i];
    dd += D[i] * D[i];
  }
  const T e = static_cast<T>(eps);
  const T num = T(2) * cd + e, den = cc + dd + e;
  auto *pn = pred.node(), *yn = target.node();
  return make_result<T>(Shape{}, {T(1) - num / den}, "dice_loss", {pred}, [=](std::span<const T> g) {
    T* gp = grad_sink(pn);
    if (!gp) return;
    const T den2 = den * den;
    for (std::size_t i = 0; i < pn->value.size(); ++i)
      gp[i] += g[0] * -(T(2) * yn->value[i] * den - num * T(2) * pn->value[i]) / den2;
  });
}

template <Real T>
Tensor<T> focal_loss(const Tensor<T>& pred, const Tensor<T>& target, const FocalParams& params = {}) {
  if (!(params.balance > 0 && params.balance <= 1) || params.focusing < 0)
    throw ConfigError("focal_loss: balance must lie in (0, 1] and focusing be >= 0");
  detail::check_loss_inputs(pred, target, "focal_loss");
  auto P = pred.data();
  auto Y = target.data();
  const T beta = static_cast<T>(params.balance), gamma = static_cast<T>(params.focusing);
  const T inv = T(1) / static_cast<T>(P.size());
  T acc = 0;
  for (std::size_t i = 0; i < P.size(); ++i) {
    const T p = detail::clamp_probability(P[i]);
    const T x = Y[i] == T(1) ? p : T(1) - p;
    acc += beta * std::pow(T(1) - x, gamma) * -std::log(x);
  }
  auto *pn = pred.node(), *yn = target.node();
  return make_result<T>(Shape{}, {acc * inv}, "focal_loss", {pred}, [=](std::span<const T> g) {
    T* gp = grad_sink(pn);
    if (!gp) return;
    for (std::size_t i = 0; i < pn->value.size(); ++i) {
      if (detail::clamped(pn->value[i])) continue;
      const bool positive = yn->value[i] == T(1);
      const T x = positive ? pn->value[i] : T(1) - pn->value[i];
      // d/dx [−β (1−x)^γ log x] = β [γ (1−x)^(γ−1) log x − (1−x)^γ / x]
      T d = -std::pow(T(1) - x, gamma) / x;
      if (gamma != T(0)) d += gamma * std::pow(T(1) - x, gamma - T(1)) * std::log(x);
      d *= beta;
      gp[i] += g[0] * inv * (positive ? d : -d);
    }
  });
}

/// alpha·dice + beta·bce + gamma·focal; a zero coefficient drops its term.
template <Real T>
Tensor<T> hybrid_loss(const Tensor<T>& pred, const Tensor<T>& target, const LossWeights& w,
                      const FocalParams& focal = {}, double dice_eps = 1.0) {
  if (w.alpha < 0 || w.beta < 0 || w.gamma < 0) throw ConfigError("hybrid_loss: weights must be non-negative");
  if (!(w.alpha + w.beta + w.gamma > 0)) throw ConfigError("hybrid_loss: at least one weight must be positive");
  std::vector<Tensor<T>> terms;
  std::vector<T> coefficients;
  if (w.alpha != 0) {
    terms.push_back(dice_loss(pred, target, dice_eps));
    coefficients.push_back(static_cast<T>(w.alpha));
  }
  if (w.beta != 0) {
    terms.push_back(bce_loss(pred, target));
    coefficients.push_back(static_cast<T>(w.beta));
  }
  if (w.gamma != 0) {
    terms.push_back(focal_loss(pred, target, focal));
    coefficients.push_back(static_cast<T>(w.gamma));
  }
  return linear_combination(terms, coefficients);
}

}  // namespace polypseg
