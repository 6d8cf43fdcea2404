#pragma once
// Encoder / bottleneck / decoder assembly and the ablation variants.

#include <variant>

#include "polypseg/mspp.hpp"

namespace polypseg {

enum class Variant { full, no_mspp, no_paab, baseline_aspp };

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::no_mspp: return "no_mspp";
    case Variant::no_paab: return "no_paab";
    case Variant::baseline_aspp: return "baseline_aspp";
  }
  return "?";
}

inline Variant parse_variant(std::string_view s) {
  if (s == "full") return Variant::full;
  if (s == "no_mspp") return Variant::no_mspp;
  if (s == "no_paab") return Variant::no_paab;
  if (s == "baseline_aspp") return Variant::baseline_aspp;
  throw ConfigError("unknown model variant '" + std::string(s) + "'");
}

struct ModelConfig {
  Variant variant = Variant::full;
  std::size_t input_size = 256;
  // Encoder widths: stem (stride 2), low-level tap (stride 4), stride 8, high-level (stride 16).
  std::array<std::size_t, 4> encoder_channels{16, 32, 64, 128};
  std::size_t mspp_branch_channels = 64;
  std::size_t bottleneck_channels = 128;
  std::size_t paab_reduction = 8;
  std::array<std::size_t, 3> mspp_dilations{4, 8, 12};
  std::array<std::size_t, 3> aspp_dilations{6, 12, 18};
  std::size_t decoder_low_channels = 48;
  std::size_t decoder_channels = 128;

  void validate() const {
    if (input_size == 0 || input_size % 16 != 0)
      throw ConfigError("input size must be a positive multiple of 16, got " + std::to_string(input_size));
    for (auto c : encoder_channels)
      if (c == 0) throw ConfigError("encoder channels must be >= 1");
    if (mspp_branch_channels == 0 || bottleneck_channels == 0 || decoder_low_channels == 0 ||
        decoder_channels == 0 || paab_reduction == 0)
      throw ConfigError("channel counts must be >= 1");
  }

  MsppConfig mspp() const {
    return MsppConfig{encoder_channels[3], mspp_branch_channels, bottleneck_channels, mspp_dilations,
                      variant == Variant::full, paab_reduction};
  }
};

template <Real T>
struct EncoderParams {
  Conv2dLayer<T> stem;
  SeparableConvLayer<T> stage2, stage3, stage4;

  EncoderParams() = default;
  EncoderParams(ParamRegistry<T>& reg, const ModelConfig& cfg, Rng& rng) {
    const auto& c = cfg.encoder_channels;
    stem = Conv2dLayer<T>(reg, "encoder/stem", 3, c[0], ConvSpec::same(3, 3, 1, 2), rng);
    stage2 = SeparableConvLayer<T>(reg, "encoder/stage2", c[0], c[1], 3, 3, rng, 1, 2);
    stage3 = SeparableConvLayer<T>(reg, "encoder/stage3", c[1], c[2], 3, 3, rng, 1, 2);
    stage4 = SeparableConvLayer<T>(reg, "encoder/stage4", c[2], c[3], 3, 3, rng, 1, 2);
  }
};

/// Classic atrous pyramid: 1×1, three dilated 3×3 convs and image pooling.
template <Real T>
struct AsppParams {
  Conv2dLayer<T> pointwise, pool;
  std::vector<Conv2dLayer<T>> atrous;
  Conv2dLayer<T> projection;

  AsppParams() = default;
  AsppParams(ParamRegistry<T>& reg, const ModelConfig& cfg, Rng& rng) {
    const auto in = cfg.encoder_channels[3], cb = cfg.mspp_branch_channels;
    pointwise = Conv2dLayer<T>(reg, "aspp/branch1", in, cb, ConvSpec::same(1, 1), rng);
    for (std::size_t i = 0; i < 3; ++i)
      atrous.emplace_back(reg, "aspp/atrous" + std::to_string(cfg.aspp_dilations[i]), in, cb,
                          ConvSpec::same(3, 3, cfg.aspp_dilations[i]), rng);
    pool = Conv2dLayer<T>(reg, "aspp/image_pool", in, cb, ConvSpec::same(1, 1), rng);
    projection = Conv2dLayer<T>(reg, "aspp/project", 5 * cb, cfg.bottleneck_channels, ConvSpec::same(1, 1), rng);
  }

  Tensor<T> forward(const Tensor<T>& F) const {
    std::vector<Tensor<T>> branches{relu(pointwise.forward(F))};
    for (const auto& a : atrous) branches.push_back(relu(a.forward(F)));
    branches.push_back(
        resize_bilinear(relu(pool.forward(global_pool(F, PoolKind::avg))), F.shape().h(), F.shape().w()));
    return relu(projection.forward(concat(branches)));
  }
};

template <Real T>
struct DecoderParams {
  Conv2dLayer<T> low_projection, fuse, refine1, refine2, head;

  DecoderParams() = default;
  DecoderParams(ParamRegistry<T>& reg, const ModelConfig& cfg, Rng& rng) {
    const auto dc = cfg.decoder_channels;
    low_projection = Conv2dLayer<T>(reg, "decoder/low_project", cfg.encoder_channels[1], cfg.decoder_low_channels,
                                    ConvSpec::same(1, 1), rng);
    fuse = Conv2dLayer<T>(reg, "decoder/fuse", cfg.bottleneck_channels + cfg.decoder_low_channels, dc,
                          ConvSpec::same(1, 1), rng);
    refine1 = Conv2dLayer<T>(reg, "decoder/refine1", dc, dc, ConvSpec::same(3, 3), rng);
    refine2 = Conv2dLayer<T>(reg, "decoder/refine2", dc, dc, ConvSpec::same(3, 3), rng);
    head = Conv2dLayer<T>(reg, "decoder/head", dc, 1, ConvSpec::same(3, 3), rng);
  }
};

template <Real T>
struct EncoderOutput {
  Tensor<T> low;   // stride 4
  Tensor<T> high;  // stride 16
};

template <Real T>
struct DecoderTrace {
  Tensor<T> pre_skip;   // after the 1×1 fuse conv
  Tensor<T> post_skip;  // pre_skip + refine(pre_skip)
  Tensor<T> output;     // (N, 1, H, W) probabilities
};

template <Real T>
EncoderOutput<T> encoder_forward(const Tensor<T>& image, const EncoderParams<T>& p) {
  require_rank4(image.shape(), "encoder");
  const auto& s = image.shape();
  if (s.c() != 3) throw DimensionError("encoder: expected 3 input channels, got " + s.str());
  if (s.h() % 16 != 0 || s.w() % 16 != 0)
    throw ConfigError("encoder: input height and width must be divisible by 16, got " + s.str());
  auto x = relu(p.stem.forward(image));
  auto low = relu(p.stage2.forward(x));
  auto mid = relu(p.stage3.forward(low));
  auto high = relu(p.stage4.forward(mid));
  return {low, high};
}

template <Real T>
DecoderTrace<T> decoder_trace(const Tensor<T>& high, const Tensor<T>& low, const DecoderParams<T>& p) {
  require_rank4(high.shape(), "decoder");
  require_rank4(low.shape(), "decoder");
  const auto &hs = high.shape(), &ls = low.shape();
  if (ls.n() != hs.n() || ls.h() != 4 * hs.h() || ls.w() != 4 * hs.w())
    throw DimensionError("decoder: low-level " + ls.str() + " is not 4x the high-level " + hs.str());
  auto up = upsample_bilinear(high, 4);
  auto lowp = relu(p.low_projection.forward(low));
  DecoderTrace<T> t;
  t.pre_skip = relu(p.fuse.forward(concat<T>({up, lowp})));
  auto refined = relu(p.refine2.forward(relu(p.refine1.forward(t.pre_skip))));
  t.post_skip = add(t.pre_skip, refined);
  t.output = sigmoid(p.head.forward(upsample_bilinear(t.post_skip, 4)));
  return t;
}

template <Real T>
Tensor<T> decoder_forward(const Tensor<T>& high, const Tensor<T>& low, const DecoderParams<T>& p) {
  return decoder_trace(high, low, p).output;
}

template <Real T>
class Model {
 public:
  Model(const ModelConfig& config, std::uint64_t seed) : config_(config) {
    config_.validate();
    Rng rng(seed);
    encoder_ = EncoderParams<T>(registry_, config_, rng);
    switch (config_.variant) {
      case Variant::full:
      case Variant::no_paab: bottleneck_ = MsppParams<T>(registry_, "mspp", config_.mspp(), rng); break;
      case Variant::no_mspp:
        bottleneck_ = Conv2dLayer<T>(registry_, "bridge", config_.encoder_channels[3], config_.bottleneck_channels,
                                     ConvSpec::same(1, 1), rng);
        break;
      case Variant::baseline_aspp: bottleneck_ = AsppParams<T>(registry_, config_, rng); break;
    }
    decoder_ = DecoderParams<T>(registry_, config_, rng);
  }

  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  Model(Model&&) noexcept = default;
  Model& operator=(Model&&) noexcept = default;

  const ModelConfig& config() const { return config_; }
  const ParamRegistry<T>& params() const { return registry_; }
  ParamRegistry<T>& params() { return registry_; }
  std::size_t param_count() const { return polypseg::param_count(registry_); }

  const EncoderParams<T>& encoder() const { return encoder_; }
  const DecoderParams<T>& decoder() const { return decoder_; }
  const MsppParams<T>* mspp() const { return std::get_if<MsppParams<T>>(&bottleneck_); }

  Tensor<T> bottleneck(const Tensor<T>& high) const {
    return std::visit(
        [&](const auto& b) -> Tensor<T> {
          using B = std::decay_t<decltype(b)>;
          if constexpr (std::is_same_v<B, MsppParams<T>>)
            return mspp_forward(high, b);
          else if constexpr (std::is_same_v<B, AsppParams<T>>)
            return b.forward(high);
          else
            return relu(b.forward(high));
        },
        bottleneck_);
  }

  /// Probability map (N, 1, H, W).
  Tensor<T> forward(const Tensor<T>& image) const {
    auto enc = encoder_forward(image, encoder_);
    return decoder_forward(bottleneck(enc.high), enc.low, decoder_);
  }

 private:
  ModelConfig config_;
  ParamRegistry<T> registry_;
  EncoderParams<T> encoder_;
  std::variant<MsppParams<T>, Conv2dLayer<T>, AsppParams<T>> bottleneck_;
  DecoderParams<T> decoder_;
};

template <Real T>
Model<T> model_init(const ModelConfig& config, std::uint64_t seed) {
  return Model<T>(config, seed);
}

template <Real T>
Tensor<T> model_forward(const Model<T>& model, const Tensor<T>& image) {
  return model.forward(image);
}

}  // namespace polypseg
