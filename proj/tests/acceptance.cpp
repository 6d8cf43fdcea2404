// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.
// Usage: acceptance [criterion numbers...]   (no arguments runs all nine)

#include <chrono>
#include <filesystem>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "oracles.hpp"
#include "polypseg/polypseg.hpp"

using namespace polypseg;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << "[failed: " << what << "] ";
    }
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// 1. Finite-difference gradients of every op and the whole model.
Outcome gradients() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  double worst_op = 0, worst_model = 0;
  std::size_t count = 0;
  for (const auto& e : run_grad_suite()) {
    ++count;
    o.require(e.passed(), e.name);
    (e.name.starts_with("model") ? worst_model : worst_op) =
        std::max(e.name.starts_with("model") ? worst_model : worst_op, e.result.max_rel_error);
  }
  const double secs = seconds_since(t0);
  o.require(worst_op <= 1e-4, "op tolerance");
  o.require(worst_model <= 1e-3, "model tolerance");
  o.require(secs <= 300, "runtime");
  o.detail << count << " checks, worst op rel " << worst_op << ", worst model rel " << worst_model << ", " << secs
           << " s";
  return o;
}

// 2. Separable and dilated convolutions against direct loops.
Outcome convolution_oracles() {
  Outcome o;
  std::mt19937_64 gen(2024);
  auto pick = [&](std::size_t lo, std::size_t hi) { return lo + gen() % (hi - lo + 1); };
  double worst_sep = 0, worst_dil = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = pick(1, 2), cin = pick(1, 4), cout = pick(1, 5), h = pick(3, 12), w = pick(3, 12);
    const std::size_t k = pick(1, 5), d = pick(1, 3), stride = pick(1, 2);
    ParamRegistry<double> reg;
    Rng rng(static_cast<std::uint64_t>(trial));
    SeparableConvLayer<double> sep(reg, "s", cin, cout, k, k, rng, d, stride);
    auto b = sep.bias.mutable_data();
    for (std::size_t i = 0; i < b.size(); ++i) b[i] = 0.01 * static_cast<double>(i + 1);
    auto x = oracle::random_tensor(Shape{n, cin, h, w}, 100 + static_cast<std::uint64_t>(trial));
    auto stage1 = oracle::direct_conv(oracle::to_vec(x), {n, cin, h, w}, oracle::to_vec(sep.depthwise), cin, k, k, {},
                                      stride, d, cin);
    auto stage2 = oracle::direct_conv(stage1.values, stage1.dims, oracle::to_vec(sep.pointwise), cout, 1, 1,
                                      oracle::to_vec(sep.bias));
    worst_sep = std::max(worst_sep, oracle::max_abs_diff(sep.forward(x).data(), stage2.values));

    const std::size_t groups = trial % 3 == 0 ? cin : 1, co = groups == 1 ? cout : cin;
    auto weight = oracle::random_tensor(Shape{co, cin / groups, k, k}, 200 + static_cast<std::uint64_t>(trial));
    auto bias = oracle::random_tensor(Shape{co}, 300 + static_cast<std::uint64_t>(trial));
    ConvSpec spec = ConvSpec::same(k, k, d, stride);
    spec.groups = groups;
    auto y = conv2d(x, weight, std::optional<Tensor<double>>(bias), spec);
    std::size_t ekh = 0, ekw = 0;
    auto inflated = oracle::zero_inflate(oracle::to_vec(weight), co, cin / groups, k, k, d, ekh, ekw);
    auto ref = oracle::direct_conv(oracle::to_vec(x), {n, cin, h, w}, inflated, co, ekh, ekw, oracle::to_vec(bias),
                                   stride, 1, groups);
    worst_dil = std::max(worst_dil, oracle::max_abs_diff(y.data(), ref.values));
  }
  o.require(worst_sep <= 1e-6, "separable composition");
  o.require(worst_dil <= 1e-6, "dilated vs zero-inflated");
  o.detail << "50 cases each, max abs diff separable " << worst_sep << ", dilated " << worst_dil;
  return o;
}

// 3. Attention refinement identities.
Outcome attention_identities() {
  Outcome o;
  auto F = oracle::random_tensor(Shape{2, 6, 9, 7}, 31);
  auto ms = oracle::random_tensor(Shape{2, 1, 9, 7}, 32, 0, 1);
  auto mc = oracle::random_tensor(Shape{2, 6, 1, 1}, 33, 0, 1);
  auto r = paab_refine(F, ms, mc);
  double worst = 0;
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t c = 0; c < 6; ++c)
      for (std::size_t p = 0; p < 63; ++p) {
        const std::size_t i = (n * 6 + c) * 63 + p;
        worst = std::max(worst, std::abs(r[i] - F[i] * (ms[n * 63 + p] + mc[n * 6 + c])));
      }
  o.require(worst <= 1e-12, "broadcast identity");

  auto twice = paab_refine(F, Tensor<double>::full(ms.shape(), 1.0), Tensor<double>::full(mc.shape(), 1.0));
  bool doubled = true;
  for (std::size_t i = 0; i < F.numel(); ++i) doubled = doubled && twice[i] == 2 * F[i];
  o.require(doubled, "ones give 2F");

  ParamRegistry<double> reg;
  Rng rng(34);
  PaabParams<double> params(reg, "paab", PaabConfig{6, 2}, rng);
  std::vector<std::size_t> perm(63);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::mt19937_64 gen(35);
  bool invariant = true;
  for (int trial = 0; trial < 20; ++trial) {
    std::shuffle(perm.begin(), perm.end(), gen);
    std::vector<double> shuffled(F.numel());
    for (std::size_t nc = 0; nc < 12; ++nc)
      for (std::size_t p = 0; p < 63; ++p) shuffled[nc * 63 + p] = F[nc * 63 + perm[p]];
    invariant = invariant && oracle::to_vec(channel_attention(F, params)) ==
                                 oracle::to_vec(channel_attention(Tensor<double>::from(F.shape(), shuffled), params));
  }
  o.require(invariant, "channel attention permutation invariance");
  o.detail << "refine max abs diff " << worst << ", 2F exact " << doubled << ", 20 permutations exact " << invariant;
  return o;
}

// 4. Pyramid block contract.
Outcome pyramid_contract() {
  Outcome o;
  MsppConfig cfg;  // 128 in, 64 per branch, 128 out
  ParamRegistry<float> with_reg, without_reg;
  Rng rng(41), rng2(41);
  MsppParams<float> with(with_reg, "mspp", cfg, rng);
  cfg.use_paab = false;
  MsppParams<float> without(without_reg, "mspp", cfg, rng2);
  for (std::size_t s : {16, 32, 64}) {
    auto F = oracle::random_tensor<float>(Shape{1, 128, s, s}, 42 + s);
    auto t = mspp_trace(F, with);
    o.require(t.output.shape() == Shape{1, 128, s, s}, "spatial size " + std::to_string(s));
    o.require(t.concatenated.shape().c() == 9 * 64, "concat channels");
    auto plain = mspp_trace(F, without);
    bool unrefined = true;
    for (std::size_t k = 0; k < kMsppBranches; ++k)
      unrefined = unrefined && oracle::to_vec(plain.branches[k]) == oracle::to_vec(plain.fused[k]);
    o.require(unrefined && plain.output.shape() == t.output.shape(), "no-attention wiring");
  }
  const auto a = param_count(with_reg), b = param_count(without_reg);
  o.require(b < a, "parameter count decreases");
  ModelConfig mc;
  mc.input_size = 64;
  mc.variant = Variant::full;
  const auto full = Model<float>(mc, 1).param_count();
  mc.variant = Variant::no_paab;
  const auto no_paab = Model<float>(mc, 1).param_count();
  o.require(no_paab < full, "model parameter count decreases");
  o.detail << "sizes 16/32/64 preserved, concat 576 channels, block params " << a << " -> " << b << ", model "
           << full << " -> " << no_paab;
  return o;
}

// 5. Loss identities.
Outcome loss_identities() {
  Outcome o;
  auto one = [](double v) { return Tensor<double>::from(Shape{1}, {v}); };
  const double bce = bce_loss(one(0.5), one(1.0)).item();
  const double focal = focal_loss(one(0.5), one(1.0)).item();
  o.require(std::abs(bce - std::log(2.0)) <= 1e-9, "bce ln2");
  o.require(std::abs(focal - 0.25 * 0.25 * std::log(2.0)) <= 1e-9, "focal closed form");

  std::mt19937_64 gen(51);
  std::uniform_real_distribution<double> u(0.001, 0.999);
  std::vector<double> p(4096), y(4096);
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = u(gen);
    y[i] = u(gen) < 0.3 ? 1.0 : 0.0;
  }
  auto P = Tensor<double>::from(Shape{4, 1, 32, 32}, p), Y = Tensor<double>::from(Shape{4, 1, 32, 32}, y);
  const bool focal_is_bce = focal_loss(P, Y, FocalParams{1.0, 0.0}).item() == bce_loss(P, Y).item();
  o.require(focal_is_bce, "focal(0, 1) == bce");
  const double d = dice_loss(P, Y).item(), b = bce_loss(P, Y).item(), f = focal_loss(P, Y).item();
  double worst_linear = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const LossWeights w{u(gen) * 3, u(gen) * 3, u(gen) * 3};
    worst_linear = std::max(worst_linear, std::abs(hybrid_loss(P, Y, w).item() - (w.alpha * d + w.beta * b + w.gamma * f)));
  }
  o.require(worst_linear <= 1e-12, "hybrid linearity");
  const double perfect = dice_loss(Y, Y).item();
  o.require(perfect == 0.0, "perfect dice");
  o.detail << "ln2 err " << std::abs(bce - std::log(2.0)) << ", focal err "
           << std::abs(focal - 0.25 * 0.25 * std::log(2.0)) << ", focal==bce " << focal_is_bce << ", linearity "
           << worst_linear << ", perfect dice " << perfect;
  return o;
}

// 6. Metric identities.
Outcome metric_identities() {
  Outcome o;
  std::mt19937_64 gen(61);
  double worst_iou = 0, worst_f1 = 0;
  bool xor_ok = true;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 64 + gen() % 4096;
    std::bernoulli_distribution dp(std::uniform_real_distribution<double>(0.05, 0.95)(gen)), dg(0.3);
    Mask pred(n), gt(n);
    for (std::size_t i = 0; i < n; ++i) {
      pred[i] = dp(gen);
      gt[i] = dg(gen);
    }
    const auto c = confusion_counts(pred, gt);
    const auto r = compute_metrics(c);
    worst_iou = std::max(worst_iou, std::abs(r.dice - 2 * r.miou / (1 + r.miou)));
    if (r.precision + r.recall > 0)
      worst_f1 = std::max(worst_f1, std::abs(r.dice - 2 * r.precision * r.recall / (r.precision + r.recall)));
    const auto x = xor_error_map(pred, gt);
    const auto ones = static_cast<std::uint64_t>(std::count(x.begin(), x.end(), std::uint8_t{1}));
    xor_ok = xor_ok && ones == c.fp + c.fn;
  }
  o.require(worst_iou <= 1e-12, "dice vs miou");
  o.require(worst_f1 <= 1e-12, "dice vs precision/recall");
  o.require(xor_ok, "xor count");
  o.detail << "1000 pairs, dice/miou err " << worst_iou << ", dice/F1 err " << worst_f1 << ", xor exact " << xor_ok;
  return o;
}

// 7. Plateau schedule and early stopping.
Outcome schedule() {
  Outcome o;
  ScheduleState s;
  std::size_t reduced_at = 0, stopped_at = 0;
  plateau_step(s, 1.0);
  for (std::size_t e = 1; e <= 25 && stopped_at == 0; ++e) {
    const auto d = plateau_step(s, 1.0 + 0.01 * static_cast<double>(e));
    if (reduced_at == 0 && d.lr != 1e-4) reduced_at = e;
    if (d.should_stop) stopped_at = e;
  }
  o.require(reduced_at == 15, "reduction epoch");
  o.require(stopped_at == 20, "stop epoch");
  o.require(s.lr == 1e-4 * 0.1, "reduced lr value");

  ScheduleState r;
  plateau_step(r, 1.0);
  for (int e = 0; e < 10; ++e) plateau_step(r, 1.0);
  const bool reset = plateau_step(r, 0.5).improved && r.epochs_since_improve_lr == 0 && r.epochs_since_improve_stop == 0;
  o.require(reset, "improvement resets counters");
  o.detail << "lr reduced after non-improving epoch " << reduced_at << " to " << s.lr << ", stop after epoch "
           << stopped_at << ", reset " << reset;
  return o;
}

// 8. Desk-scale training of the full model and the ablation without the pyramid block.
Outcome end_to_end() {
  Outcome o;
  const auto splits = split_dataset(generate_dataset(200, 42), 42);
  o.require(splits.train.size() == 160 && splits.val.size() == 20 && splits.test.size() == 20, "split sizes");
  auto run = [&](Variant v, double& best_val, double& test_dice, double& secs) {
    ModelConfig mc;
    mc.variant = v;
    mc.input_size = 64;
    Model<float> model(mc, 42);
    TrainConfig tc;
    tc.epochs = 60;
    tc.seed = 42;
    const auto t0 = std::chrono::steady_clock::now();
    const auto result = train(model, splits, tc);
    best_val = 0;
    for (const auto& e : result.history) best_val = std::max(best_val, e.val_dice);
    test_dice = evaluate(model, splits.test).macro.dice;
    secs = seconds_since(t0);
    std::cout << "  " << to_string(v) << ": " << result.history.size() << " epochs, best val dice " << best_val
              << ", test dice " << test_dice << ", " << secs << " s" << std::endl;
  };
  double full_val = 0, full_test = 0, full_secs = 0, abl_val = 0, abl_test = 0, abl_secs = 0;
  run(Variant::full, full_val, full_test, full_secs);
  run(Variant::no_mspp, abl_val, abl_test, abl_secs);
  o.require(full_val >= 0.90, "full val dice >= 0.90");
  o.require(full_test >= 0.88, "full test dice >= 0.88");
  o.require(full_secs <= 900, "full run within 15 min");
  o.require(abl_test < full_test, "no_mspp test dice below full");
  o.detail << "full val " << full_val << " test " << full_test << " (" << full_secs << " s, " << std::thread::hardware_concurrency()
           << " core(s)); no_mspp test " << abl_test;
  return o;
}

// 9. Bitwise-reproducible checkpoints and exact resume.
Outcome determinism() {
  Outcome o;
  const fs::path dir = fs::temp_directory_path() / "polypseg_acceptance_determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const auto splits = split_dataset(generate_dataset(40, 7), 7);
  ModelConfig mc;
  mc.input_size = 64;
  auto config = [&](const std::string& tag, std::size_t epochs) {
    TrainConfig tc;
    tc.epochs = epochs;
    tc.seed = 9;
    tc.lr = 1e-3;
    tc.checkpoint_path = dir / (tag + ".ckpt");
    tc.history_path = dir / (tag + ".csv");
    return tc;
  };

  Model<float> a(mc, 9), b(mc, 9);
  const auto ra = train(a, splits, config("a", 3));
  train(b, splits, config("b", 3));
  const bool same_best = detail::read_file(dir / "a.ckpt") == detail::read_file(dir / "b.ckpt");
  const bool same_last = detail::read_file(dir / "a.ckpt.last") == detail::read_file(dir / "b.ckpt.last");
  o.require(same_best && same_last, "bitwise identical checkpoints");

  Model<float> c(mc, 9);
  train(c, splits, config("c", 2));
  auto ck = load_checkpoint<float>(dir / "c.ckpt.last");
  const auto rc = train(ck.model, splits, config("c", 3), &*ck.state);
  double worst = 0;
  o.require(rc.history.size() == ra.history.size(), "resumed history length");
  for (std::size_t i = 0; i < std::min(rc.history.size(), ra.history.size()); ++i) {
    worst = std::max(worst, std::abs(rc.history[i].train_loss - ra.history[i].train_loss));
    worst = std::max(worst, std::abs(rc.history[i].val_loss - ra.history[i].val_loss));
  }
  o.require(worst <= 1e-6, "resume loss match");
  fs::remove_all(dir);
  o.detail << "checkpoints identical " << (same_best && same_last) << ", resume max loss diff " << worst;
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
  const std::vector<std::pair<const char*, Outcome (*)()>> criteria{
      {"gradient suite", gradients},
      {"convolution oracles", convolution_oracles},
      {"attention identities", attention_identities},
      {"pyramid block contract", pyramid_contract},
      {"loss identities", loss_identities},
      {"metric identities", metric_identities},
      {"plateau schedule", schedule},
      {"desk-scale training", end_to_end},
      {"determinism and resume", determinism},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!wanted.empty() && !wanted.count(id)) continue;
    Outcome out;
    try {
      out = criteria[i].second();
    } catch (const std::exception& e) {
      out.pass = false;
      out.detail << "exception: " << e.what();
    }
    failures += out.pass ? 0 : 1;
    std::cout << "criterion " << id << " (" << criteria[i].first << "): " << (out.pass ? "PASS" : "FAIL") << "  "
              << out.detail.str() << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
