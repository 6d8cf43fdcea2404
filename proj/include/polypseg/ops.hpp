#pragma once
// Elementwise, reduction and affine ops.

#include <Eigen/Core>

#include "polypseg/tensor.hpp"

namespace polypseg {

enum class Activation { relu, sigmoid };
enum class Elementwise { add, mul };

namespace detail {

template <Real T>
T stable_sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

// How `b` lines up against `a` in a broadcasting binary op.
enum class Broadcast { none, spatial_map, channel_map };

inline Broadcast classify_broadcast(const Shape& a, const Shape& b) {
  if (a == b) return Broadcast::none;
  if (a.rank() == 4 && b.rank() == 4 && a.n() == b.n()) {
    if (b.c() == 1 && b.h() == a.h() && b.w() == a.w()) return Broadcast::spatial_map;
    if (b.c() == a.c() && b.h() == 1 && b.w() == 1) return Broadcast::channel_map;
  }
  throw DimensionError("elementwise: cannot broadcast " + b.str() + " onto " + a.str());
}

}  // namespace detail

/// a (+|⊙) b where b either matches a, is an (N,1,H,W) spatial map or an
/// (N,C,1,1) channel map. Gradients for b are summed over broadcast axes.
template <Real T>
Tensor<T> elementwise(const Tensor<T>& a, const Tensor<T>& b, Elementwise kind) {
  using detail::Broadcast;
  const auto mode = detail::classify_broadcast(a.shape(), b.shape());
  const auto& s = a.shape();
  const std::size_t total = a.numel();
  // Index of the b element paired with flat a-index i.
  std::size_t N = 1, C = 1, HW = total;
  if (mode != Broadcast::none) {
    N = s.n();
    C = s.c();
    HW = s.h() * s.w();
  }
  auto b_index = [=](std::size_t i) -> std::size_t {
    switch (mode) {
      case Broadcast::none: return i;
      case Broadcast::spatial_map: return (i / (C * HW)) * HW + i % HW;
      case Broadcast::channel_map: return i / HW;
    }
    return i;
  };
  auto av = a.data();
  auto bv = b.data();
  std::vector<T> out(total);
  if (kind == Elementwise::add)
    for (std::size_t i = 0; i < total; ++i) out[i] = av[i] + bv[b_index(i)];
  else
    for (std::size_t i = 0; i < total; ++i) out[i] = av[i] * bv[b_index(i)];

  auto* an = a.node();
  auto* bn = b.node();
  return make_result<T>(s, std::move(out), kind == Elementwise::add ? "add" : "mul", {a, b},
                        [=](std::span<const T> g) {
                          T* ga = grad_sink(an);
                          T* gb = grad_sink(bn);
                          const auto& A = an->value;
                          const auto& B = bn->value;
                          for (std::size_t i = 0; i < g.size(); ++i) {
                            const std::size_t j = b_index(i);
                            if (kind == Elementwise::add) {
                              if (ga) ga[i] += g[i];
                              if (gb) gb[j] += g[i];
                            } else {
                              if (ga) ga[i] += g[i] * B[j];
                              if (gb) gb[j] += g[i] * A[i];
                            }
                          }
                        });
}

template <Real T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return elementwise(a, b, Elementwise::add);
}

template <Real T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return elementwise(a, b, Elementwise::mul);
}

template <Real T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  std::vector<T> out(x.data().begin(), x.data().end());
  for (auto& v : out) v *= factor;
  auto* xn = x.node();
  return make_result<T>(x.shape(), std::move(out), "scale", {x}, [=](std::span<const T> g) {
    if (T* gx = grad_sink(xn))
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * factor;
  });
}

template <Real T>
Tensor<T> activation(const Tensor<T>& x, Activation kind) {
  auto xv = x.data();
  std::vector<T> out(xv.size());
  if (kind == Activation::relu)
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] > T(0) ? xv[i] : T(0);
  else
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = detail::stable_sigmoid(xv[i]);

  auto* xn = x.node();
  if (kind == Activation::relu)
    return make_result<T>(x.shape(), std::move(out), "relu", {x}, [=](std::span<const T> g) {
      if (T* gx = grad_sink(xn))
        for (std::size_t i = 0; i < g.size(); ++i)
          if (xn->value[i] > T(0)) gx[i] += g[i];
    });
  // Sigmoid backward needs its own output; recompute rather than hold a
  // reference to the result node (which would form a cycle).
  return make_result<T>(x.shape(), std::move(out), "sigmoid", {x}, [=](std::span<const T> g) {
    if (T* gx = grad_sink(xn))
      for (std::size_t i = 0; i < g.size(); ++i) {
        const T y = detail::stable_sigmoid(xn->value[i]);
        gx[i] += g[i] * y * (T(1) - y);
      }
  });
}

template <Real T>
Tensor<T> relu(const Tensor<T>& x) {
  return activation(x, Activation::relu);
}

template <Real T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return activation(x, Activation::sigmoid);
}

/// Channel-axis concatenation of NCHW tensors.
template <Real T>
Tensor<T> concat(const std::vector<Tensor<T>>& inputs) {
  if (inputs.empty()) throw DimensionError("concat: no inputs");
  const auto& s0 = inputs.front().shape();
  require_rank4(s0, "concat");
  std::size_t channels = 0;
  for (const auto& t : inputs) {
    const auto& s = t.shape();
    require_rank4(s, "concat");
    if (s.n() != s0.n() || s.h() != s0.h() || s.w() != s0.w())
      throw DimensionError("concat: " + s.str() + " does not match " + s0.str());
    channels += s.c();
  }
  const std::size_t N = s0.n(), HW = s0.h() * s0.w();
  std::vector<T> out(N * channels * HW);
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& t : inputs) {
    offsets.push_back(off);
    const std::size_t block = t.shape().c() * HW;
    for (std::size_t n = 0; n < N; ++n)
      std::copy_n(t.data().begin() + n * block, block, out.begin() + (n * channels * HW + off * HW));
    off += t.shape().c();
  }
  std::vector<detail::Node<T>*> nodes;
  for (const auto& t : inputs) nodes.push_back(t.node());
  return make_result<T>(Shape{N, channels, s0.h(), s0.w()}, std::move(out), "concat", inputs,
                        [=](std::span<const T> g) {
                          for (std::size_t k = 0; k < nodes.size(); ++k) {
                            T* gi = grad_sink(nodes[k]);
                            if (!gi) continue;
                            const std::size_t block = nodes[k]->shape.c() * HW;
                            for (std::size_t n = 0; n < N; ++n) {
                              const T* src = g.data() + n * channels * HW + offsets[k] * HW;
                              for (std::size_t i = 0; i < block; ++i) gi[n * block + i] += src[i];
                            }
                          }
                        });
}

/// Channels [begin, begin + count) of an NCHW tensor.
template <Real T>
Tensor<T> slice_channels(const Tensor<T>& x, std::size_t begin, std::size_t count) {
  const auto& s = x.shape();
  require_rank4(s, "slice_channels");
  if (count == 0 || begin + count > s.c())
    throw DimensionError("slice_channels: range out of bounds for " + s.str());
  const std::size_t N = s.n(), C = s.c(), HW = s.h() * s.w();
  std::vector<T> out(N * count * HW);
  for (std::size_t n = 0; n < N; ++n)
    std::copy_n(x.data().begin() + (n * C + begin) * HW, count * HW, out.begin() + n * count * HW);
  auto* xn = x.node();
  return make_result<T>(Shape{N, count, s.h(), s.w()}, std::move(out), "slice_channels", {x},
                        [=](std::span<const T> g) {
                          if (T* gx = grad_sink(xn))
                            for (std::size_t n = 0; n < N; ++n)
                              for (std::size_t i = 0; i < count * HW; ++i)
                                gx[(n * C + begin) * HW + i] += g[n * count * HW + i];
                        });
}

template <Real T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (shape.numel() != x.numel())
    throw DimensionError("reshape: " + x.shape().str() + " -> " + shape.str());
  std::vector<T> out(x.data().begin(), x.data().end());
  auto* xn = x.node();
  return make_result<T>(std::move(shape), std::move(out), "reshape", {x}, [=](std::span<const T> g) {
    if (T* gx = grad_sink(xn))
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

/// Left-to-right sum of all elements.
template <Real T>
Tensor<T> sum(const Tensor<T>& x) {
  T acc = 0;
  for (T v : x.data()) acc += v;
  auto* xn = x.node();
  return make_result<T>(Shape{}, {acc}, "sum", {x}, [=](std::span<const T> g) {
    if (T* gx = grad_sink(xn))
      for (std::size_t i = 0; i < xn->value.size(); ++i) gx[i] += g[0];
  });
}

template <Real T>
Tensor<T> mean(const Tensor<T>& x) {
  T acc = 0;
  for (T v : x.data()) acc += v;
  const T inv = T(1) / static_cast<T>(x.numel());
  auto* xn = x.node();
  return make_result<T>(Shape{}, {acc * inv}, "mean", {x}, [=](std::span<const T> g) {
    if (T* gx = grad_sink(xn))
      for (std::size_t i = 0; i < xn->value.size(); ++i) gx[i] += g[0] * inv;
  });
}

/// Σ coefficients[i] · terms[i] over scalar tensors.
template <Real T>
Tensor<T> linear_combination(const std::vector<Tensor<T>>& terms, const std::vector<T>& coefficients) {
  if (terms.empty() || terms.size() != coefficients.size())
    throw ConfigError("linear_combination: terms and coefficients differ in length");
  T acc = 0;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    if (terms[i].numel() != 1) throw DimensionError("linear_combination: terms must be scalars");
    acc += coefficients[i] * terms[i].item();
  }
  std::vector<detail::Node<T>*> nodes;
  for (const auto& t : terms) nodes.push_back(t.node());
  return make_result<T>(Shape{}, {acc}, "linear_combination", terms, [=](std::span<const T> g) {
    for (std::size_t i = 0; i < nodes.size(); ++i)
      if (T* gi = grad_sink(nodes[i])) gi[0] += g[0] * coefficients[i];
  });
}

/// y = x·Wᵀ + b with x flattened to (N, in_features); weight is (out, in).
template <Real T>
Tensor<T> dense(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias) {
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using Vec = Eigen::Matrix<T, 1, Eigen::Dynamic>;
  if (input.shape().rank() < 1) throw DimensionError("dense: input must have a batch axis");
  if (weight.shape().rank() != 2) throw DimensionError("dense: weight must be (out, in)");
  const std::size_t N = input.shape()[0];
  const std::size_t F = input.numel() / N;
  const std::size_t O = weight.shape()[0];
  if (weight.shape()[1] != F)
    throw DimensionError("dense: input features " + std::to_string(F) + " vs weight " +
                         weight.shape().str());
  if (bias.numel() != O) throw DimensionError("dense: bias length mismatch");

  std::vector<T> out(N * O);
  {
    Eigen::Map<const Mat> X(input.data().data(), N, F);
    Eigen::Map<const Mat> W(weight.data().data(), O, F);
    Eigen::Map<const Vec> b(bias.data().data(), O);
    Eigen::Map<Mat> Y(out.data(), N, O);
    Y.noalias() = X * W.transpose();
    Y.rowwise() += b;
  }
  auto *xn = input.node(), *wn = weight.node(), *bn = bias.node();
  return make_result<T>(Shape{N, O}, std::move(out), "dense", {input, weight, bias},
                        [=](std::span<const T> g) {
                          Eigen::Map<const Mat> G(g.data(), N, O);
                          if (T* gx = grad_sink(xn)) {
                            Eigen::Map<const Mat> W(wn->value.data(), O, F);
                            Eigen::Map<Mat>(gx, N, F).noalias() += G * W;
                          }
                          if (T* gw = grad_sink(wn)) {
                            Eigen::Map<const Mat> X(xn->value.data(), N, F);
                            Eigen::Map<Mat>(gw, O, F).noalias() += G.transpose() * X;
                          }
                          if (T* gb = grad_sink(bn)) Eigen::Map<Vec>(gb, O) += G.colwise().sum();
                        });
}

}  // namespace polypseg
