#pragma once
// Parameterized layers and the ordered parameter registry.

#include <cmath>
#include <random>
#include <sstream>
#include <unordered_map>

#include "polypseg/conv.hpp"
#include "polypseg/ops.hpp"

namespace polypseg {

/// Seeded generator with platform-independent real conversions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(engine_() % span);
  }
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }
  template <class It>
  void shuffle(It first, It last) {
    const auto n = static_cast<std::int64_t>(last - first);
    for (std::int64_t i = n - 1; i > 0; --i) std::iter_swap(first + i, first + uniform_int(0, i));
  }

  std::string state() const {
    std::ostringstream os;
    os << engine_;
    return os.str();
  }
  void set_state(const std::string& s) {
    std::istringstream is(s);
    is >> engine_;
    if (!is) throw FormatError("invalid RNG state");
  }

 private:
  std::mt19937_64 engine_;
};

/// Named parameters in insertion order. Names are slash-delimited paths.
template <Real T>
class ParamRegistry {
 public:
  using Entry = std::pair<std::string, Tensor<T>>;

  Tensor<T> add(const std::string& name, Tensor<T> param) {
    if (!index_.emplace(name, entries_.size()).second)
      throw ConfigError("duplicate parameter name '" + name + "'");
    param.set_requires_grad(true);
    entries_.emplace_back(name, param);
    return param;
  }

  const Tensor<T>& at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter '" + name + "'");
    return entries_[it->second].second;
  }
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }
  const Entry& operator[](std::size_t i) const { return entries_.at(i); }

  void zero_grad() {
    for (auto& [name, p] : entries_) p.zero_grad();
  }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

template <Real T>
std::size_t param_count(const ParamRegistry<T>& registry) {
  std::size_t total = 0;
  for (const auto& [name, p] : registry) total += p.numel();
  return total;
}

/// Glorot-uniform draw in ±sqrt(6 / (fan_in + fan_out)).
template <Real T>
Tensor<T> init_params(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<T> v(shape.numel());
  for (auto& x : v) x = static_cast<T>(rng.uniform(-limit, limit));
  return Tensor<T>::from(std::move(shape), std::move(v), true);
}

/// Fans read off a weight shape: (out, in) for dense, (out, in/groups, kh, kw)
/// for convolutions, with fan_out counted per group.
template <Real T>
Tensor<T> init_params(Shape shape, std::uint64_t seed, std::size_t groups = 1) {
  Rng rng(seed);
  std::size_t fan_in = 0, fan_out = 0;
  if (shape.rank() == 2) {
    fan_in = shape[1];
    fan_out = shape[0];
  } else if (shape.rank() == 4) {
    fan_in = shape[1] * shape[2] * shape[3];
    fan_out = shape[0] / groups * shape[2] * shape[3];
  } else {
    throw ConfigError("init_params: expected rank-2 or rank-4 weight shape");
  }
  return init_params<T>(std::move(shape), fan_in, fan_out, rng);
}

template <Real T>
Tensor<T> zero_bias(std::size_t n) {
  return Tensor<T>::zeros(Shape{n}, true);
}

template <Real T>
struct Conv2dLayer {
  Tensor<T> weight;
  Tensor<T> bias;
  ConvSpec spec;

  Conv2dLayer() = default;
  Conv2dLayer(ParamRegistry<T>& reg, const std::string& name, std::size_t in, std::size_t out,
              ConvSpec conv, Rng& rng)
      : spec(conv) {
    const std::size_t k = conv.kernel_h * conv.kernel_w;
    weight = reg.add(name + "/w",
                     init_params<T>(Shape{out, in / conv.groups, conv.kernel_h, conv.kernel_w},
                                    in / conv.groups * k, out / conv.groups * k, rng));
    bias = reg.add(name + "/b", zero_bias<T>(out));
  }

  Tensor<T> forward(const Tensor<T>& x) const { return conv2d(x, weight, std::optional{bias}, spec); }
  std::size_t param_count() const { return weight.numel() + bias.numel(); }
};

/// Depthwise convolution (one kernel per input channel, no bias) followed by
/// a biased pointwise 1×1 convolution.
template <Real T>
struct SeparableConvLayer {
  Tensor<T> depthwise;  // (C_in, 1, kh, kw)
  Tensor<T> pointwise;  // (C_out, C_in, 1, 1)
  Tensor<T> bias;       // (C_out)
  ConvSpec spec;        // kernel, stride and dilation of the depthwise stage

  SeparableConvLayer() = default;
  SeparableConvLayer(ParamRegistry<T>& reg, const std::string& name, std::size_t in, std::size_t out,
                     std::size_t kh, std::size_t kw, Rng& rng, std::size_t dilation = 1, std::size_t stride = 1)
      : spec(ConvSpec::same(kh, kw, dilation, stride, in)) {
    depthwise = reg.add(name + "/dw", init_params<T>(Shape{in, 1, kh, kw}, kh * kw, kh * kw, rng));
    pointwise = reg.add(name + "/pw", init_params<T>(Shape{out, in, 1, 1}, in, out, rng));
    bias = reg.add(name + "/b", zero_bias<T>(out));
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    require_rank4(x.shape(), "separable_conv");
    if (x.shape().c() != depthwise.shape().n())
      throw DimensionError("separable_conv: expected " + std::to_string(depthwise.shape().n()) +
                           " input channels, got " + x.shape().str());
    auto d = conv2d<T>(x, depthwise, std::nullopt, spec);
    return conv2d(d, pointwise, std::optional{bias}, ConvSpec::same(1, 1));
  }

  std::size_t param_count() const { return depthwise.numel() + pointwise.numel() + bias.numel(); }
};

template <Real T>
struct DenseLayer {
  Tensor<T> weight;  // (out, in)
  Tensor<T> bias;

  DenseLayer() = default;
  DenseLayer(ParamRegistry<T>& reg, const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
    weight = reg.add(name + "/w", init_params<T>(Shape{out, in}, in, out, rng));
    bias = reg.add(name + "/b", zero_bias<T>(out));
  }

  Tensor<T> forward(const Tensor<T>& x) const { return dense(x, weight, bias); }
  std::size_t param_count() const { return weight.numel() + bias.numel(); }
};

}  // namespace polypseg
