#pragma once
// Multi-scale pyramid pooling: nine parallel branches over the encoder output,
// a shared 1×1 branch added into every convolutional branch, one attention
// block per branch, then channel concatenation and a 1×1 projection.
//
// Branch order (fixed, also the concatenation order):
//   B1 5×5 separable     B2 3×3 separable     B3 1×1 conv (skip source)
//   B4/B5/B6 3×3 separable with dilation d0/d1/d2
//   B7 5×1 separable then 1×5 separable
//   B8 global average pool -> 1×1 conv -> bilinear resize to H×W
//   B9 global max pool     -> 1×1 conv -> bilinear resize to H×W
// B3 is added to B1, B2 and B4..B7 after their activations.

#include <array>
#include <optional>

#include "polypseg/paab.hpp"

namespace polypseg {

struct MsppConfig {
  std::size_t in_channels = 128;
  std::size_t branch_channels = 64;
  std::size_t out_channels = 128;
  std::array<std::size_t, 3> dilation_rates{4, 8, 12};
  bool use_paab = true;
  std::size_t paab_reduction = 8;
};

inline constexpr std::size_t kMsppBranches = 9;

template <Real T>
struct MsppParams {
  SeparableConvLayer<T> b1, b2, b4, b5, b6, b7_vertical, b7_horizontal;
  Conv2dLayer<T> b3, b8, b9;
  std::vector<PaabParams<T>> paab;  // empty when attention is disabled
  Conv2dLayer<T> projection;
  MsppConfig config;

  MsppParams() = default;
  MsppParams(ParamRegistry<T>& reg, const std::string& name, const MsppConfig& cfg, Rng& rng) : config(cfg) {
    const auto in = cfg.in_channels, cb = cfg.branch_channels;
    if (in == 0 || cb == 0 || cfg.out_channels == 0) throw ConfigError("mspp: channel counts must be >= 1");
    for (auto d : cfg.dilation_rates)
      if (d == 0) throw ConfigError("mspp: dilation rates must be >= 1");
    b1 = SeparableConvLayer<T>(reg, name + "/branch1", in, cb, 5, 5, rng);
    b2 = SeparableConvLayer<T>(reg, name + "/branch2", in, cb, 3, 3, rng);
    b3 = Conv2dLayer<T>(reg, name + "/branch3", in, cb, ConvSpec::same(1, 1), rng);
    b4 = SeparableConvLayer<T>(reg, name + "/branch4", in, cb, 3, 3, rng, cfg.dilation_rates[0]);
    b5 = SeparableConvLayer<T>(reg, name + "/branch5", in, cb, 3, 3, rng, cfg.dilation_rates[1]);
    b6 = SeparableConvLayer<T>(reg, name + "/branch6", in, cb, 3, 3, rng, cfg.dilation_rates[2]);
    b7_vertical = SeparableConvLayer<T>(reg, name + "/branch7/5x1", in, cb, 5, 1, rng);
    b7_horizontal = SeparableConvLayer<T>(reg, name + "/branch7/1x5", cb, cb, 1, 5, rng);
    b8 = Conv2dLayer<T>(reg, name + "/branch8", in, cb, ConvSpec::same(1, 1), rng);
    b9 = Conv2dLayer<T>(reg, name + "/branch9", in, cb, ConvSpec::same(1, 1), rng);
    if (cfg.use_paab)
      for (std::size_t i = 0; i < kMsppBranches; ++i)
        paab.emplace_back(reg, name + "/paab" + std::to_string(i + 1), PaabConfig{cb, cfg.paab_reduction}, rng);
    projection = Conv2dLayer<T>(reg, name + "/project", kMsppBranches * cb, cfg.out_channels,
                                ConvSpec::same(1, 1), rng);
  }

  std::size_t param_count() const {
    std::size_t n = b1.param_count() + b2.param_count() + b3.param_count() + b4.param_count() +
                    b5.param_count() + b6.param_count() + b7_vertical.param_count() +
                    b7_horizontal.param_count() + b8.param_count() + b9.param_count() +
                    projection.param_count();
    for (const auto& p : paab) n += p.param_count();
    return n;
  }
};

template <Real T>
struct MsppTrace {
  std::vector<Tensor<T>> fused;     // per-branch output before attention
  std::vector<Tensor<T>> branches;  // per-branch output after attention
  Tensor<T> concatenated;           // (N, 9·C_b, H, W)
  Tensor<T> output;                 // (N, C_out, H, W)
};

template <Real T>
MsppTrace<T> mspp_trace(const Tensor<T>& F, const MsppParams<T>& p) {
  require_rank4(F.shape(), "mspp");
  const auto& s = F.shape();
  if (s.c() != p.config.in_channels)
    throw DimensionError("mspp: expected " + std::to_string(p.config.in_channels) + " channels, got " + s.str());
  const std::size_t H = s.h(), W = s.w();

  auto skip = relu(p.b3.forward(F));
  auto fuse = [&](const Tensor<T>& branch) { return add(branch, skip); };
  auto pooled = [&](PoolKind kind, const Conv2dLayer<T>& conv) {
    return resize_bilinear(relu(conv.forward(global_pool(F, kind))), H, W);
  };

  MsppTrace<T> trace;
  trace.fused = {
      fuse(relu(p.b1.forward(F))),
      fuse(relu(p.b2.forward(F))),
      skip,
      fuse(relu(p.b4.forward(F))),
      fuse(relu(p.b5.forward(F))),
      fuse(relu(p.b6.forward(F))),
      fuse(relu(p.b7_horizontal.forward(relu(p.b7_vertical.forward(F))))),
      pooled(PoolKind::avg, p.b8),
      pooled(PoolKind::max, p.b9),
  };
  trace.branches.reserve(kMsppBranches);
  for (std::size_t i = 0; i < kMsppBranches; ++i)
    trace.branches.push_back(p.paab.empty() ? trace.fused[i] : paab_forward(trace.fused[i], p.paab[i]));
  trace.concatenated = concat(trace.branches);
  trace.output = relu(p.projection.forward(trace.concatenated));
  return trace;
}

template <Real T>
Tensor<T> mspp_forward(const Tensor<T>& F, const MsppParams<T>& p) {
  return mspp_trace(F, p).output;
}

/// Post-attention branch tensors B1..B9.
template <Real T>
std::vector<Tensor<T>> mspp_branch_outputs(const Tensor<T>& F, const MsppParams<T>& p) {
  return mspp_trace(F, p).branches;
}

}  // namespace polypseg
