#include "cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "polypseg/polypseg.hpp"

namespace polypseg::cli {
namespace {

namespace fs = std::filesystem;

struct SynthArgs {
  std::size_t n = 200;
  std::size_t size = 64;
  std::uint64_t seed = 42;
  std::string out;
};

struct TrainArgs {
  std::string data;
  std::string variant = "full";
  std::size_t epochs = 150;
  std::size_t batch_size = 4;
  double lr = 1e-4;
  double alpha = 1.0, beta = 1.0, gamma = 1.0;
  double focal_balance = 0.25, focal_focusing = 2.0;
  double dice_eps = 1.0;
  std::size_t size = 256;
  std::uint64_t seed = 42;
  std::size_t aug_factor = 0;
  std::string ckpt = "model.ckpt";
  std::string history = "history.csv";
  bool resume = false;
};

struct EvalArgs {
  std::string ckpt = "model.ckpt";
  std::string data;
  std::string split = "test";
  std::string out = "-";
  std::string xor_maps;
  double threshold = 0.5;
};

struct PredictArgs {
  std::string ckpt = "model.ckpt";
  std::string image;
  std::string out = "mask.pgm";
  std::string prob = "prob.pgm";
  double threshold = 0.5;
};

struct GradArgs {
  std::uint64_t seed = 1234;
  std::size_t coords_per_param = 6;
};

std::vector<Sample> resized(const std::vector<Sample>& samples, std::size_t size) {
  std::vector<Sample> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(resize_sample(s, size));
  return out;
}

Image probability_image(const std::vector<float>& prob, std::size_t h, std::size_t w) {
  Image img(1, h, w);
  img.data = prob;
  return img;
}

int do_synth(const SynthArgs& a, std::ostream& out) {
  if (a.n < 3) throw ConfigError("--n must be at least 3 to form train/val/test splits");
  SynthConfig cfg;
  cfg.size = a.size;
  const auto splits = split_dataset(generate_dataset(a.n, a.seed, cfg), a.seed);
  write_dataset(a.out, splits);
  out << "wrote " << a.n << " samples (" << splits.train.size() << " train, " << splits.val.size() << " val, "
      << splits.test.size() << " test) to " << a.out << '\n';
  return kExitOk;
}

int do_train(const TrainArgs& a, std::ostream& out) {
  ModelConfig mc;
  mc.variant = parse_variant(a.variant);
  mc.input_size = a.size;
  mc.validate();
  auto raw = read_dataset(a.data);
  DatasetSplits splits{resized(raw.train, a.size), resized(raw.val, a.size), resized(raw.test, a.size)};

  TrainConfig tc;
  tc.epochs = a.epochs;
  tc.batch_size = a.batch_size;
  tc.lr = a.lr;
  tc.loss_weights = {a.alpha, a.beta, a.gamma};
  tc.focal = {a.focal_balance, a.focal_focusing};
  tc.dice_eps = a.dice_eps;
  tc.seed = a.seed;
  tc.aug_factor = a.aug_factor;
  tc.checkpoint_path = a.ckpt;
  tc.history_path = a.history;
  tc.on_epoch = [&out](const EpochRecord& r) {
    out << "epoch " << r.epoch << " train_loss " << r.train_loss << " val_loss " << r.val_loss << " val_dice "
        << r.val_dice << " lr " << r.lr << " (" << r.seconds << " s)" << std::endl;
  };

  std::optional<Checkpoint<float>> resumed;
  if (a.resume) {
    resumed.emplace(load_checkpoint<float>(last_checkpoint_path(a.ckpt)));
    if (!resumed->state) throw FormatError("checkpoint has no training state to resume from");
    if (resumed->model.config().variant != mc.variant || resumed->model.config().input_size != mc.input_size)
      throw ConfigError("--variant/--size differ from the checkpoint being resumed");
  }
  Model<float> model = resumed ? std::move(resumed->model) : Model<float>(mc, a.seed);
  const auto result = train(model, splits, tc, resumed ? &*resumed->state : nullptr);
  out << "best epoch " << result.best_epoch << " val_loss " << result.best_val_loss << '\n';
  if (!splits.test.empty()) out << "test dice " << evaluate(model, splits.test).macro.dice << '\n';
  return kExitOk;
}

int do_eval(const EvalArgs& a, std::ostream& out) {
  auto ckpt = load_checkpoint<float>(a.ckpt);
  const auto size = ckpt.model.config().input_size;
  auto raw = read_dataset(a.data);
  std::vector<Sample> samples;
  if (a.split == "train" || a.split == "all") samples.insert(samples.end(), raw.train.begin(), raw.train.end());
  if (a.split == "val" || a.split == "all") samples.insert(samples.end(), raw.val.begin(), raw.val.end());
  if (a.split == "test" || a.split == "all") samples.insert(samples.end(), raw.test.begin(), raw.test.end());
  samples = resized(samples, size);

  const auto probs = predict_all(ckpt.model, samples);
  std::size_t next = 0;
  const auto result = evaluate([&](const Sample&) { return probs[next++]; }, samples, a.threshold);

  if (!a.xor_maps.empty()) {
    fs::create_directories(a.xor_maps);
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const auto pred = binarize(std::span<const float>(probs[i]), a.threshold);
      const auto err = xor_error_map(std::span<const std::uint8_t>(pred), std::span<const float>(samples[i].mask.data));
      Image img(1, size, size);
      std::transform(err.begin(), err.end(), img.data.begin(), [](std::uint8_t v) { return float(v); });
      write_image(fs::path(a.xor_maps) / (samples[i].id + "_xor.pgm"), img);
    }
  }
  if (a.out == "-") {
    write_metrics_csv(out, result.ids, result.per_image);
  } else {
    std::ofstream f(a.out);
    if (!f) throw FormatError("cannot create " + a.out);
    write_metrics_csv(f, result.ids, result.per_image);
    out << "macro dice " << result.macro.dice << " over " << samples.size() << " images\n";
  }
  return kExitOk;
}

int do_predict(const PredictArgs& a, std::ostream& out) {
  auto ckpt = load_checkpoint<float>(a.ckpt);
  const auto size = ckpt.model.config().input_size;
  const Image img = read_image(a.image);
  if (img.channels != 3) throw FormatError(a.image + ": expected an RGB (P6) image");
  Sample s;
  s.image = resize_normalize(img, size);
  s.mask = Image(1, size, size);
  const auto prob = predict_all(ckpt.model, std::vector<Sample>{s}).front();
  // Back to the input resolution before thresholding.
  const Image full = resize_bilinear(probability_image(prob, size, size), img.height, img.width);
  const auto bits = binarize(std::span<const float>(full.data), a.threshold);
  Image mask(1, img.height, img.width);
  std::transform(bits.begin(), bits.end(), mask.data.begin(), [](std::uint8_t v) { return float(v); });
  write_image(a.out, mask);
  if (!a.prob.empty()) write_image(a.prob, full);
  const auto fg = std::count(bits.begin(), bits.end(), std::uint8_t{1});
  out << "wrote " << a.out << " (" << fg << " of " << bits.size() << " pixels foreground)\n";
  return kExitOk;
}

int do_gradcheck(const GradArgs& a, std::ostream& out) {
  GradSuiteOptions o;
  o.seed = a.seed;
  o.model_coords_per_param = a.coords_per_param;
  bool ok = true;
  out << std::left << std::setw(28) << "op" << std::setw(16) << "max_rel_error" << std::setw(12) << "tolerance"
      << "status\n";
  run_grad_suite(o, [&](const GradSuiteEntry& e) {
    ok = ok && e.passed();
    out << std::left << std::setw(28) << e.name << std::setw(16) << std::setprecision(4) << e.result.max_rel_error
        << std::setw(12) << e.tolerance << (e.passed() ? "ok" : "FAIL") << std::endl;
  });
  return ok ? kExitOk : kExitNumeric;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Polyp segmentation: synthetic data, training, evaluation and gradient checks", "polypseg"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset directory");
  synth->add_option("--n", sa.n, "Number of samples");
  synth->add_option("--size", sa.size, "Image side length in pixels")->check(CLI::PositiveNumber);
  synth->add_option("--seed", sa.seed, "Base seed; sample i uses seed + i");
  synth->add_option("--out", sa.out, "Output directory")->required();

  TrainArgs ta;
  auto* trn = app.add_subcommand("train", "Train a model on a dataset directory");
  trn->add_option("--data", ta.data, "Dataset directory")->required();
  trn->add_option("--variant", ta.variant, "Model variant")
      ->check(CLI::IsMember({"full", "no_mspp", "no_paab", "baseline_aspp"}));
  trn->add_option("--epochs", ta.epochs, "Maximum number of epochs");
  trn->add_option("--batch-size", ta.batch_size, "Mini-batch size");
  trn->add_option("--lr", ta.lr, "Initial Adam learning rate");
  trn->add_option("--alpha", ta.alpha, "Dice loss weight");
  trn->add_option("--beta", ta.beta, "BCE loss weight");
  trn->add_option("--gamma", ta.gamma, "Focal loss weight");
  trn->add_option("--focal-balance", ta.focal_balance, "Focal balance factor");
  trn->add_option("--focal-focusing", ta.focal_focusing, "Focal focusing exponent");
  trn->add_option("--dice-eps", ta.dice_eps, "Dice smoothing constant");
  trn->add_option("--size", ta.size, "Network input size (multiple of 16)");
  trn->add_option("--seed", ta.seed, "Seed for initialization, shuffling and augmentation");
  trn->add_option("--aug-factor", ta.aug_factor, "Augmented copies per training image");
  trn->add_option("--ckpt", ta.ckpt, "Best checkpoint path; the latest state goes to <ckpt>.last");
  trn->add_option("--history", ta.history, "Per-epoch history CSV");
  trn->add_flag("--resume", ta.resume, "Continue from <ckpt>.last");

  EvalArgs ea;
  auto* evl = app.add_subcommand("eval", "Evaluate a checkpoint and write per-image metrics");
  evl->add_option("--ckpt", ea.ckpt, "Checkpoint path");
  evl->add_option("--data", ea.data, "Dataset directory")->required();
  evl->add_option("--split", ea.split, "Which split to evaluate")->check(CLI::IsMember({"train", "val", "test", "all"}));
  evl->add_option("--out", ea.out, "Metrics CSV path, - for standard output");
  evl->add_option("--xor-maps", ea.xor_maps, "Directory for XOR error-map PGMs (disabled when empty)");
  evl->add_option("--threshold", ea.threshold, "Binarization threshold");

  PredictArgs pa;
  auto* prd = app.add_subcommand("predict", "Segment a single PPM image");
  prd->add_option("--ckpt", pa.ckpt, "Checkpoint path");
  prd->add_option("--image", pa.image, "Input P6 image")->required();
  prd->add_option("--out", pa.out, "Output mask PGM");
  prd->add_option("--prob", pa.prob, "Output probability PGM (disabled when empty)");
  prd->add_option("--threshold", pa.threshold, "Binarization threshold");

  GradArgs ga;
  auto* grd = app.add_subcommand("gradcheck", "Run the finite-difference gradient suite in double precision");
  grd->add_option("--seed", ga.seed, "Seed for inputs and parameters");
  grd->add_option("--coords-per-param", ga.coords_per_param,
                  "Sampled coordinates per parameter tensor in the whole-model check");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*synth) return do_synth(sa, out);
    if (*trn) return do_train(ta, out);
    if (*evl) return do_eval(ea, out);
    if (*prd) return do_predict(pa, out);
    return do_gradcheck(ga, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const Error& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  }
}

int run(int argc, const char* const* argv) { return run(argc, argv, std::cout, std::cerr); }

}  // namespace polypseg::cli
