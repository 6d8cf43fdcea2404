#include <gtest/gtest.h>

#include "oracles.hpp"
#include "polypseg/gradcheck.hpp"
#include "polypseg/mspp.hpp"

using namespace polypseg;

namespace {

struct Block {
  ParamRegistry<double> reg;
  MsppParams<double> params;

  explicit Block(const MsppConfig& cfg, std::uint64_t seed = 1) {
    Rng rng(seed);
    params = MsppParams<double>(reg, "mspp", cfg, rng);
  }
};

MsppConfig small(bool paab = true) { return MsppConfig{4, 3, 5, {4, 8, 12}, paab, 2}; }

}  // namespace

TEST(Mspp, DefaultConfig) {
  MsppConfig cfg;
  EXPECT_EQ(cfg.dilation_rates, (std::array<std::size_t, 3>{4, 8, 12}));
  EXPECT_EQ(cfg.branch_channels, 64u);
  EXPECT_EQ(cfg.out_channels, 128u);
}

TEST(Mspp, OutputShapeDefaultWidths) {
  Block b(MsppConfig{32, 64, 128, {4, 8, 12}, true, 8});
  auto F = oracle::random_tensor(Shape{1, 32, 16, 16}, 2);
  auto t = mspp_trace(F, b.params);
  EXPECT_EQ(t.output.shape(), (Shape{1, 128, 16, 16}));
  EXPECT_EQ(t.concatenated.shape(), (Shape{1, 9 * 64, 16, 16}));
}

TEST(Mspp, SpatialSizePreserved) {
  Block b(small());
  for (std::size_t hw : {4, 5, 16, 32, 64}) {
    auto F = oracle::random_tensor(Shape{2, 4, hw, hw}, 3);
    EXPECT_EQ(mspp_forward(F, b.params).shape(), (Shape{2, 5, hw, hw}));
  }
}

TEST(Mspp, BranchOutputs) {
  Block b(small());
  auto F = oracle::random_tensor(Shape{2, 4, 8, 6}, 4);
  auto branches = mspp_branch_outputs(F, b.params);
  ASSERT_EQ(branches.size(), 9u);
  for (const auto& t : branches) EXPECT_EQ(t.shape(), (Shape{2, 3, 8, 6}));
}

TEST(Mspp, ConcatenationOrderFollowsBranches) {
  Block b(small());
  auto F = oracle::random_tensor(Shape{1, 4, 6, 6}, 5);
  auto t = mspp_trace(F, b.params);
  for (std::size_t k = 0; k < 9; ++k)
    EXPECT_EQ(oracle::to_vec(slice_channels(t.concatenated, 3 * k, 3)), oracle::to_vec(t.branches[k]));
}

TEST(Mspp, PooledBranchOfConstantInputIsConstant) {
  Block b(small());
  auto F = Tensor<double>::full(Shape{1, 4, 8, 8}, 0.3);
  auto t = mspp_trace(F, b.params);
  for (std::size_t k : {7, 8}) {
    const auto& fused = t.fused[k];
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t p = 1; p < 64; ++p) EXPECT_EQ(fused[c * 64 + p], fused[c * 64]);
  }
}

TEST(Mspp, PooledBranchesMatchDefinition) {
  Block b(small(false));
  auto F = oracle::random_tensor(Shape{1, 4, 5, 5}, 6);
  auto t = mspp_trace(F, b.params);
  auto avg = relu(b.params.b8.forward(global_pool(F, PoolKind::avg)));
  auto mx = relu(b.params.b9.forward(global_pool(F, PoolKind::max)));
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t p = 0; p < 25; ++p) {
      EXPECT_EQ(t.fused[7][c * 25 + p], avg[c]);
      EXPECT_EQ(t.fused[8][c * 25 + p], mx[c]);
    }
}

TEST(Mspp, ZeroSkipLeavesBranchesUnfused) {
  Block b(small(false));
  for (auto t : {b.params.b3.weight, b.params.b3.bias}) {
    auto v = t.mutable_data();
    std::fill(v.begin(), v.end(), 0.0);
  }
  auto F = oracle::random_tensor(Shape{1, 4, 7, 7}, 7);
  auto t = mspp_trace(F, b.params);
  const auto& p = b.params;
  std::vector<Tensor<double>> unfused{relu(p.b1.forward(F)), relu(p.b2.forward(F)), relu(p.b4.forward(F)),
                                      relu(p.b5.forward(F)), relu(p.b6.forward(F)),
                                      relu(p.b7_horizontal.forward(relu(p.b7_vertical.forward(F))))};
  const std::size_t idx[] = {0, 1, 3, 4, 5, 6};
  for (std::size_t k = 0; k < 6; ++k) EXPECT_EQ(oracle::to_vec(t.fused[idx[k]]), oracle::to_vec(unfused[k]));
  for (double v : t.fused[2].data()) EXPECT_EQ(v, 0.0);
}

TEST(Mspp, SkipIsAddedToConvolutionalBranches) {
  Block b(small(false));
  auto F = oracle::random_tensor(Shape{1, 4, 6, 6}, 8);
  auto t = mspp_trace(F, b.params);
  auto skip = relu(b.params.b3.forward(F));
  auto b2 = relu(b.params.b2.forward(F));
  for (std::size_t i = 0; i < skip.numel(); ++i) EXPECT_EQ(t.fused[1][i], b2[i] + skip[i]);
  EXPECT_EQ(oracle::to_vec(t.fused[2]), oracle::to_vec(skip));
}

TEST(Mspp, DilatedBranchesReachDistanceDilation) {
  MsppConfig cfg{1, 1, 1, {4, 8, 12}, false, 1};
  Block b(cfg);
  // Same kernel for all three dilated branches: all-ones depthwise, identity pointwise.
  for (auto* layer : {&b.params.b4, &b.params.b5, &b.params.b6}) {
    auto dw = layer->depthwise.mutable_data();
    std::fill(dw.begin(), dw.end(), 1.0);
    layer->pointwise.mutable_data()[0] = 1.0;
  }
  const std::size_t S = 33, c = 16;
  std::vector<double> impulse(S * S, 0.0);
  impulse[c * S + c] = 1.0;
  auto F = Tensor<double>::from(Shape{1, 1, S, S}, impulse);
  const std::size_t rates[] = {4, 8, 12};
  const SeparableConvLayer<double>* layers[] = {&b.params.b4, &b.params.b5, &b.params.b6};
  for (std::size_t k = 0; k < 3; ++k) {
    auto y = layers[k]->forward(F);
    const std::size_t d = rates[k];
    for (std::size_t y0 = 0; y0 < S; ++y0)
      for (std::size_t x0 = 0; x0 < S; ++x0) {
        const std::size_t dy = y0 > c ? y0 - c : c - y0, dx = x0 > c ? x0 - c : c - x0;
        const bool on_grid = (dy == 0 || dy == d) && (dx == 0 || dx == d);
        EXPECT_EQ(y[y0 * S + x0] != 0.0, on_grid) << "rate " << d << " at " << y0 << "," << x0;
      }
  }
}

TEST(Mspp, DisablingAttentionRemovesParameters) {
  Block with(small(true));
  Block without(small(false));
  EXPECT_EQ(with.params.paab.size(), 9u);
  EXPECT_TRUE(without.params.paab.empty());
  EXPECT_LT(param_count(without.reg), param_count(with.reg));
  EXPECT_EQ(param_count(with.reg), with.params.param_count());
  EXPECT_EQ(param_count(without.reg), without.params.param_count());
  auto F = oracle::random_tensor(Shape{1, 4, 6, 6}, 9);
  auto t = mspp_trace(F, without.params);
  for (std::size_t k = 0; k < 9; ++k) EXPECT_EQ(oracle::to_vec(t.branches[k]), oracle::to_vec(t.fused[k]));
}

TEST(Mspp, ParameterCountClosedForm) {
  const std::size_t in = 6, cb = 4, out = 5;
  Block b(MsppConfig{in, cb, out, {4, 8, 12}, false, 2});
  auto sep = [](std::size_t i, std::size_t o, std::size_t kh, std::size_t kw) { return i * kh * kw + i * o + o; };
  const std::size_t expected = sep(in, cb, 5, 5) + sep(in, cb, 3, 3) + (in * cb + cb) + 3 * sep(in, cb, 3, 3) +
                               sep(in, cb, 5, 1) + sep(cb, cb, 1, 5) + 2 * (in * cb + cb) + (9 * cb * out + out);
  EXPECT_EQ(param_count(b.reg), expected);
}

TEST(Mspp, WrongChannelsIsDimensionError) {
  Block b(small());
  EXPECT_THROW(mspp_forward(oracle::random_tensor(Shape{1, 3, 8, 8}, 10), b.params), DimensionError);
}

TEST(Mspp, InvalidConfigIsConfigError) {
  ParamRegistry<double> reg;
  Rng rng(1);
  EXPECT_THROW(MsppParams<double>(reg, "m", MsppConfig{4, 0, 5, {4, 8, 12}, true, 2}, rng), ConfigError);
  ParamRegistry<double> reg2;
  EXPECT_THROW(MsppParams<double>(reg2, "m", MsppConfig{4, 3, 5, {4, 0, 12}, true, 2}, rng), ConfigError);
}

TEST(Mspp, GradientCheck) {
  Block b(small(), 11);
  auto F = oracle::random_tensor(Shape{1, 4, 8, 8}, 12, -1, 1, true);
  std::vector<Tensor<double>> inputs{F};
  for (const auto& [name, p] : b.reg) inputs.push_back(p);
  GradCheckOptions o;
  o.max_coords_per_input = 32;
  auto r = grad_check<double>([&] { return mean(mspp_forward(F, b.params)); }, inputs, o);
  EXPECT_LE(r.max_rel_error, 1e-3);
}
