#pragma once
// The finite-difference suite run by `polypseg gradcheck` and the acceptance
// binary: every differentiable op on small random inputs, then the whole
// model on a 1×3×32×32 image, all in double precision.

#include <functional>
#include <string>
#include <vector>

#include "polypseg/gradcheck.hpp"
#include "polypseg/losses.hpp"
#include "polypseg/network.hpp"

namespace polypseg {

inline constexpr double kOpGradTolerance = 1e-4;
inline constexpr double kModelGradTolerance = 1e-3;

struct GradSuiteEntry {
  std::string name;
  GradCheckResult result;
  double tolerance = 0;

  bool passed() const { return result.max_rel_error <= tolerance; }
};

struct GradSuiteOptions {
  std::uint64_t seed = 1234;
  // Input coordinates of the whole-model check; 0 checks all of them.
  std::size_t model_input_coords = 0;
  // Sampled coordinates per parameter tensor of the whole-model check.
  std::size_t model_coords_per_param = 6;
  bool include_model = true;
};

namespace detail {

inline Tensor<double> random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(shape.numel());
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor<double>::from(shape, std::move(v), true);
}

inline Tensor<double> random_mask(const Shape& shape, Rng& rng) {
  std::vector<double> v(shape.numel());
  for (auto& x : v) x = rng.uniform() < 0.4 ? 1.0 : 0.0;
  return Tensor<double>::from(shape, std::move(v));
}

// Contracts a tensor-valued op to a scalar with fixed random weights so every
// output coordinate contributes a distinct amount.
inline std::function<Tensor<double>()> weighted(std::function<Tensor<double>()> op, const Shape& out_shape,
                                                Rng& rng) {
  auto w = random_tensor(out_shape, rng);
  w.set_requires_grad(false);
  return [op = std::move(op), w] { return sum(mul(op(), w)); };
}

// Zero-initialised biases leave some ReLU inputs exactly at 0, where the
// function has a corner and central differences are meaningless.
inline void randomize_biases(const ParamRegistry<double>& reg, Rng& rng) {
  for (const auto& [name, p] : reg) {
    if (!name.ends_with("/b")) continue;
    auto t = p;
    for (auto& x : t.mutable_data()) x = rng.uniform(-0.2, 0.2);
  }
}

}  // namespace detail

/// Runs every check; `report` (if set) is called after each one.
inline std::vector<GradSuiteEntry> run_grad_suite(const GradSuiteOptions& options = {},
                                                  const std::function<void(const GradSuiteEntry&)>& report = {}) {
  using D = double;
  using T4 = Tensor<D>;
  Rng rng(options.seed);
  std::vector<GradSuiteEntry> out;
  auto check = [&](const std::string& name, std::function<T4()> fn, std::vector<T4> inputs,
                   const Shape* out_shape = nullptr, double tolerance = kOpGradTolerance,
                   GradCheckOptions gopts = {}) {
    if (out_shape) fn = detail::weighted(std::move(fn), *out_shape, rng);
    gopts.seed = rng.next();
    GradSuiteEntry e{name, grad_check<D>(fn, std::move(inputs), gopts), tolerance};
    if (report) report(e);
    out.push_back(std::move(e));
  };
  auto R = [&](Shape s, double lo = -1.0, double hi = 1.0) { return detail::random_tensor(s, rng, lo, hi); };

  const Shape s4{2, 3, 5, 4};
  {
    auto a = R(s4), b = R(s4);
    check("add", [=] { return add(a, b); }, {a, b}, &s4);
    check("mul", [=] { return mul(a, b); }, {a, b}, &s4);
    check("scale", [=] { return scale(a, 1.7); }, {a}, &s4);
    check("relu", [=] { return relu(a); }, {a}, &s4);
    check("sigmoid", [=] { return sigmoid(scale(a, 3.0)); }, {a}, &s4);
    auto spatial = R(Shape{2, 1, 5, 4}), channel = R(Shape{2, 3, 1, 1});
    check("mul_broadcast_spatial", [=] { return mul(a, spatial); }, {a, spatial}, &s4);
    check("add_broadcast_channel", [=] { return add(a, channel); }, {a, channel}, &s4);
    auto c = R(Shape{2, 2, 5, 4});
    const Shape cat{2, 5, 5, 4};
    check("concat", [=] { return concat<D>({a, c}); }, {a, c}, &cat);
    const Shape sl{2, 2, 5, 4};
    check("slice_channels", [=] { return slice_channels(a, 1, 2); }, {a}, &sl);
    const Shape rs{2, 60};
    check("reshape", [=] { return reshape(a, rs); }, {a}, &rs);
    check("sum", [=] { return sum(a); }, {a});
    check("mean", [=] { return mean(a); }, {a});
    check("linear_combination", [=] { return linear_combination<D>({sum(a), mean(b)}, {0.3, -1.2}); }, {a, b});
  }
  {
    auto x = R(Shape{2, 6}), w = R(Shape{4, 6}), b = R(Shape{4});
    const Shape os{2, 4};
    check("dense", [=] { return dense(x, w, b); }, {x, w, b}, &os);
  }
  struct ConvCase {
    std::string name;
    std::size_t cin, cout, k_h, k_w;
    ConvSpec spec;
  };
  const std::vector<ConvCase> convs{
      {"conv2d_3x3", 3, 4, 3, 3, ConvSpec::same(3, 3)},
      {"conv2d_stride2", 3, 4, 3, 3, ConvSpec::same(3, 3, 1, 2)},
      {"conv2d_dilation2", 2, 3, 3, 3, ConvSpec::same(3, 3, 2)},
      {"conv2d_pointwise", 4, 3, 1, 1, ConvSpec::same(1, 1)},
      {"conv2d_depthwise", 3, 3, 3, 3, ConvSpec::same(3, 3, 1, 1, 3)},
      {"conv2d_depthwise_dilated", 3, 3, 3, 3, ConvSpec::same(3, 3, 3, 1, 3)},
      {"conv2d_grouped", 4, 4, 3, 3, ConvSpec::same(3, 3, 1, 1, 2)},
      {"conv2d_5x1", 2, 2, 5, 1, ConvSpec::same(5, 1)},
      {"conv2d_explicit_pad", 2, 3, 3, 3, ConvSpec{3, 3, 1, 1, std::size_t{1}, 1}},
  };
  for (const auto& cc : convs) {
    auto x = R(Shape{2, cc.cin, 6, 7});
    auto w = R(Shape{cc.cout, cc.cin / cc.spec.groups, cc.k_h, cc.k_w});
    auto b = R(Shape{cc.cout});
    auto probe = conv2d<D>(x.detach(), w.detach(), b.detach(), cc.spec);
    const Shape os = probe.shape();
    const auto spec = cc.spec;
    check(cc.name, [=] { return conv2d<D>(x, w, b, spec); }, {x, w, b}, &os);
  }
  {
    auto x = R(Shape{2, 3, 6, 6});
    const Shape ps{2, 3, 3, 3};
    check("avg_pool2d", [=] { return pool2d(x, PoolKind::avg, 2, 2); }, {x}, &ps);
    check("max_pool2d", [=] { return pool2d(x, PoolKind::max, 2, 2); }, {x}, &ps);
    const Shape gs{2, 3, 1, 1}, cs{2, 1, 6, 6};
    check("global_avg_pool", [=] { return global_pool(x, PoolKind::avg); }, {x}, &gs);
    check("global_max_pool", [=] { return global_pool(x, PoolKind::max); }, {x}, &gs);
    check("channel_avg_pool", [=] { return channel_pool(x, PoolKind::avg); }, {x}, &cs);
    check("channel_max_pool", [=] { return channel_pool(x, PoolKind::max); }, {x}, &cs);
    const Shape up{2, 3, 11, 9}, down{2, 3, 4, 3}, x4{2, 3, 24, 24};
    check("resize_bilinear_up", [=] { return resize_bilinear(x, 11, 9); }, {x}, &up);
    check("resize_bilinear_down", [=] { return resize_bilinear(x, 4, 3); }, {x}, &down);
    check("upsample_bilinear_x4", [=] { return upsample_bilinear(x, 4); }, {x}, &x4);
  }
  {
    const Shape ls{2, 1, 4, 5};
    auto logits = R(ls, -2.0, 2.0);
    auto y = detail::random_mask(ls, rng);
    check("bce_loss", [=] { return bce_loss(sigmoid(logits), y); }, {logits});
    check("dice_loss", [=] { return dice_loss(sigmoid(logits), y); }, {logits});
    check("focal_loss", [=] { return focal_loss(sigmoid(logits), y); }, {logits});
    check("focal_loss_gamma0", [=] { return focal_loss(sigmoid(logits), y, FocalParams{0.5, 0.0}); }, {logits});
    check("hybrid_loss", [=] { return hybrid_loss(sigmoid(logits), y, LossWeights{0.7, 1.3, 2.0}); }, {logits});
  }
  {
    ParamRegistry<D> reg;
    Rng init(options.seed + 1);
    PaabParams<D> paab(reg, "paab", PaabConfig{5, 2}, init);
    detail::randomize_biases(reg, init);
    auto F = R(Shape{2, 5, 6, 6});
    std::vector<T4> inputs{F};
    for (const auto& [name, p] : reg) inputs.push_back(p);
    const Shape fs = F.shape(), ms{2, 1, 6, 6}, cs{2, 5, 1, 1};
    check("spatial_attention", [=] { return spatial_attention(F, paab); }, inputs, &ms);
    check("channel_attention", [=] { return channel_attention(F, paab); }, inputs, &cs);
    check("paab", [=] { return paab_forward(F, paab); }, inputs, &fs);
  }
  {
    ParamRegistry<D> reg;
    Rng init(options.seed + 2);
    SeparableConvLayer<D> sep(reg, "sep", 3, 4, 3, 3, init, 2);
    detail::randomize_biases(reg, init);
    auto x = R(Shape{1, 3, 7, 6});
    std::vector<T4> inputs{x};
    for (const auto& [name, p] : reg) inputs.push_back(p);
    const Shape os{1, 4, 7, 6};
    check("separable_conv", [=] { return sep.forward(x); }, inputs, &os);
  }
  {
    ParamRegistry<D> reg;
    Rng init(options.seed + 3);
    MsppParams<D> mspp(reg, "mspp", MsppConfig{4, 3, 5, {1, 2, 3}, true, 2}, init);
    detail::randomize_biases(reg, init);
    auto F = R(Shape{1, 4, 6, 6});
    std::vector<T4> inputs{F};
    for (const auto& [name, p] : reg) inputs.push_back(p);
    const Shape os{1, 5, 6, 6};
    GradCheckOptions sampled;
    sampled.max_coords_per_input = 24;
    check("mspp", [=] { return mspp_forward(F, mspp); }, inputs, &os, kOpGradTolerance, sampled);
  }
  if (options.include_model) {
    ModelConfig cfg;
    cfg.input_size = 32;
    Model<D> model(cfg, options.seed + 4);
    Rng bias_rng(options.seed + 5);
    detail::randomize_biases(model.params(), bias_rng);
    auto image = R(Shape{1, 3, 32, 32}, 0.0, 1.0);
    auto target = detail::random_mask(Shape{1, 1, 32, 32}, rng);
    const Model<D>* m = &model;
    auto loss = [=] { return hybrid_loss(m->forward(image), target, LossWeights{}); };

    GradCheckOptions in_opts;
    in_opts.max_coords_per_input = options.model_input_coords;
    check("model_full_input", loss, {image}, nullptr, kModelGradTolerance, in_opts);

    std::vector<T4> params;
    for (const auto& [name, p] : model.params()) params.push_back(p);
    GradCheckOptions p_opts;
    p_opts.max_coords_per_input = options.model_coords_per_param;
    check("model_full_params", loss, params, nullptr, kModelGradTolerance, p_opts);
  }
  return out;
}

}  // namespace polypseg
