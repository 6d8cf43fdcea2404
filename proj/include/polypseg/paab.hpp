#pragma once
// Parallel attention aggregation: a spatial map and a channel map computed
// side by side from the same feature, each gating the feature through a
// Hadamard product, with the two gated copies summed.

#include "polypseg/layers.hpp"

namespace polypseg {

struct PaabConfig {
  std::size_t channels = 0;
  std::size_t reduction = 8;

  std::size_t hidden() const { return std::max<std::size_t>(1, (channels + reduction - 1) / reduction); }
};

template <Real T>
struct PaabParams {
  // Depthwise kernels over the 2-channel [avg ‖ max] pooled map.
  Conv2dLayer<T> dw3, dw5, dw7;
  // Merges the 6 concatenated depthwise outputs into one channel.
  Conv2dLayer<T> merge;
  // Channel MLP: 2C -> hidden -> C.
  DenseLayer<T> fc1, fc2;
  PaabConfig config;

  PaabParams() = default;
  PaabParams(ParamRegistry<T>& reg, const std::string& name, const PaabConfig& cfg, Rng& rng)
      : config(cfg) {
    if (cfg.channels == 0 || cfg.reduction == 0) throw ConfigError("paab: channels and reduction must be >= 1");
    dw3 = Conv2dLayer<T>(reg, name + "/spatial/dw3", 2, 2, ConvSpec::same(3, 3, 1, 1, 2), rng);
    dw5 = Conv2dLayer<T>(reg, name + "/spatial/dw5", 2, 2, ConvSpec::same(5, 5, 1, 1, 2), rng);
    dw7 = Conv2dLayer<T>(reg, name + "/spatial/dw7", 2, 2, ConvSpec::same(7, 7, 1, 1, 2), rng);
    merge = Conv2dLayer<T>(reg, name + "/spatial/pw", 6, 1, ConvSpec::same(1, 1), rng);
    fc1 = DenseLayer<T>(reg, name + "/channel/fc1", 2 * cfg.channels, cfg.hidden(), rng);
    fc2 = DenseLayer<T>(reg, name + "/channel/fc2", cfg.hidden(), cfg.channels, rng);
  }

  std::size_t param_count() const {
    return dw3.param_count() + dw5.param_count() + dw7.param_count() + merge.param_count() +
           fc1.param_count() + fc2.param_count();
  }
};

/// M_s(F), shape (N, 1, H, W), every value in (0, 1).
template <Real T>
Tensor<T> spatial_attention(const Tensor<T>& F, const PaabParams<T>& p) {
  require_rank4(F.shape(), "spatial_attention");
  auto pooled = concat<T>({channel_pool(F, PoolKind::avg), channel_pool(F, PoolKind::max)});
  auto merged = concat<T>({sigmoid(p.dw3.forward(pooled)), sigmoid(p.dw5.forward(pooled)),
                           sigmoid(p.dw7.forward(pooled))});
  return sigmoid(p.merge.forward(merged));
}

/// M_c(F), shape (N, C, 1, 1), every value in (0, 1).
template <Real T>
Tensor<T> channel_attention(const Tensor<T>& F, const PaabParams<T>& p) {
  require_rank4(F.shape(), "channel_attention");
  const auto& s = F.shape();
  if (s.c() != p.config.channels)
    throw DimensionError("channel_attention: expected " + std::to_string(p.config.channels) +
                         " channels, got " + s.str());
  auto pooled = concat<T>({global_pool(F, PoolKind::avg), global_pool(F, PoolKind::max)});
  auto hidden = relu(p.fc1.forward(pooled));
  auto gate = sigmoid(p.fc2.forward(hidden));
  return reshape(gate, Shape{s.n(), s.c(), 1, 1});
}

/// F ⊙ M_s + F ⊙ M_c with both maps broadcast over F.
template <Real T>
Tensor<T> paab_refine(const Tensor<T>& F, const Tensor<T>& ms, const Tensor<T>& mc) {
  const auto& s = F.shape();
  require_rank4(s, "paab_refine");
  if (ms.shape() != Shape{s.n(), 1, s.h(), s.w()})
    throw DimensionError("paab_refine: spatial map " + ms.shape().str() + " does not fit " + s.str());
  if (mc.shape() != Shape{s.n(), s.c(), 1, 1})
    throw DimensionError("paab_refine: channel map " + mc.shape().str() + " does not fit " + s.str());
  return add(mul(F, ms), mul(F, mc));
}

template <Real T>
Tensor<T> paab_forward(const Tensor<T>& F, const PaabParams<T>& p) {
  return paab_refine(F, spatial_attention(F, p), channel_attention(F, p));
}

}  // namespace polypseg
