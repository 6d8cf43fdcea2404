#pragma once
// Adam, reduce-on-plateau scheduling with early stopping, the training and
// evaluation loops, and binary checkpoints.

#include <chrono>
#include <cstring>
#include <functional>
#include <limits>
#include <optional>

#include "polypseg/data.hpp"
#include "polypseg/losses.hpp"
#include "polypseg/metrics.hpp"
#include "polypseg/network.hpp"

namespace polypseg {

// ---------------------------------------------------------------------------
// Adam

template <Real T>
struct AdamState {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t t = 0;
  std::vector<std::vector<T>> m, v;  // parallel to the registry order
};

/// One bias-corrected Adam update of every parameter; a parameter without a
/// gradient is treated as having a zero gradient.
template <Real T>
void adam_step(ParamRegistry<T>& params, AdamState<T>& state) {
  if (state.m.empty() && state.v.empty()) {
    for (const auto& [name, p] : params) {
      state.m.emplace_back(p.numel(), T(0));
      state.v.emplace_back(p.numel(), T(0));
    }
  }
  if (state.m.size() != params.size() || state.v.size() != params.size())
    throw StateError("adam_step: optimizer holds " + std::to_string(state.m.size()) + " moments for " +
                     std::to_string(params.size()) + " parameters");
  ++state.t;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  const T b1 = static_cast<T>(state.beta1), b2 = static_cast<T>(state.beta2);
  const T step = static_cast<T>(state.lr / bc1);
  const T inv_bc2 = static_cast<T>(1.0 / bc2);
  const T eps = static_cast<T>(state.eps);
  std::size_t k = 0;
  for (auto entry : params) {
    auto& p = entry.second;
    auto& m = state.m[k];
    auto& v = state.v[k];
    if (m.size() != p.numel() || v.size() != p.numel())
      throw StateError("adam_step: moment shape mismatch for '" + entry.first + "'");
    auto values = p.mutable_data();
    auto g = p.grad();
    const bool has = !g.empty();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const T gi = has ? g[i] : T(0);
      m[i] = b1 * m[i] + (T(1) - b1) * gi;
      v[i] = b2 * v[i] + (T(1) - b2) * gi * gi;
      values[i] -= step * m[i] / (std::sqrt(v[i] * inv_bc2) + eps);
    }
    ++k;
  }
}

// ---------------------------------------------------------------------------
// Plateau schedule and early stopping

struct ScheduleState {
  double lr = 1e-4;
  double best_val_loss = std::numeric_limits<double>::infinity();
  std::uint32_t epochs_since_improve_lr = 0;
  std::uint32_t epochs_since_improve_stop = 0;
  std::uint32_t plateau_patience = 15;
  double plateau_factor = 0.1;
  std::uint32_t stop_patience = 20;
  double min_delta = 1e-5;
};

struct PlateauDecision {
  double lr;
  bool should_stop;
  bool improved;
};

/// Call once per epoch with the validation loss. An improvement larger than
/// min_delta resets both counters; otherwise the lr is multiplied by the
/// factor each time its counter reaches the plateau patience, and stopping is
/// requested once the stop counter reaches its patience.
inline PlateauDecision plateau_step(ScheduleState& s, double val_loss) {
  const bool improved = val_loss < s.best_val_loss - s.min_delta;
  if (improved) {
    s.best_val_loss = val_loss;
    s.epochs_since_improve_lr = 0;
    s.epochs_since_improve_stop = 0;
  } else {
    ++s.epochs_since_improve_lr;
    ++s.epochs_since_improve_stop;
    if (s.epochs_since_improve_lr >= s.plateau_patience) {
      s.lr *= s.plateau_factor;
      s.epochs_since_improve_lr = 0;
    }
  }
  return {s.lr, s.epochs_since_improve_stop >= s.stop_patience, improved};
}

// ---------------------------------------------------------------------------
// Checkpoints

template <Real T>
struct TrainingState {
  std::uint32_t epoch = 0;  // completed epochs
  AdamState<T> adam;
  ScheduleState schedule;
  std::string rng_state;
};

inline constexpr char kCheckpointMagic[4] = {'D', 'L', 'V', '3'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

class ByteWriter {
 public:
  template <class V>
  void pod(V v) {
    static_assert(std::is_arithmetic_v<V>);
    char b[sizeof(V)];
    std::memcpy(b, &v, sizeof(V));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(V));
    buf_.append(b, sizeof(V));
  }
  void u32(std::uint32_t v) { pod(v); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    buf_ += s;
  }
  void raw(const char* p, std::size_t n) { buf_.append(p, n); }

  template <Real T>
  void array(const std::string& name, const Shape& shape, std::span<const T> values) {
    str(name);
    u32(static_cast<std::uint32_t>(shape.rank()));
    for (auto d : shape.dims()) u32(static_cast<std::uint32_t>(d));
    for (T v : values) pod(static_cast<float>(v));
  }

  const std::string& bytes() const { return buf_; }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string bytes, std::string name) : b_(std::move(bytes)), name_(std::move(name)) {}

  [[noreturn]] void fail(const std::string& what) const {
    throw FormatError(name_ + ": " + what + " at byte offset " + std::to_string(pos_));
  }
  void need(std::size_t n) const {
    if (b_.size() - pos_ < n) fail("unexpected end of file");
  }
  template <class V>
  V pod() {
    need(sizeof(V));
    char b[sizeof(V)];
    std::memcpy(b, b_.data() + pos_, sizeof(V));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(V));
    pos_ += sizeof(V);
    V v;
    std::memcpy(&v, b, sizeof(V));
    return v;
  }
  std::uint32_t u32() { return pod<std::uint32_t>(); }
  std::string str() {
    const auto n = u32();
    need(n);
    std::string s = b_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::string raw(std::size_t n) {
    need(n);
    std::string s = b_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  struct Array {
    std::string name;
    Shape shape;
    std::vector<float> values;
  };
  Array array() {
    Array a;
    a.name = str();
    const auto rank = u32();
    if (rank > 8) fail("implausible tensor rank " + std::to_string(rank));
    std::vector<std::size_t> dims(rank);
    std::size_t numel = 1;
    for (auto& d : dims) {
      d = u32();
      if (d == 0) fail("zero tensor dimension");
      numel *= d;
    }
    need(numel * sizeof(float));
    a.shape = Shape(std::move(dims));
    a.values.resize(numel);
    for (auto& v : a.values) v = pod<float>();
    return a;
  }
  bool at_end() const { return pos_ == b_.size(); }

 private:
  std::string b_;
  std::string name_;
  std::size_t pos_ = 0;
};

inline std::string serialize_config(const ModelConfig& c) {
  std::ostringstream os;
  auto list = [&](const auto& arr) {
    for (std::size_t i = 0; i < arr.size(); ++i) os << (i ? "," : "") << arr[i];
  };
  os << "variant=" << to_string(c.variant) << '\n' << "input_size=" << c.input_size << '\n' << "encoder_channels=";
  list(c.encoder_channels);
  os << '\n'
     << "mspp_branch_channels=" << c.mspp_branch_channels << '\n'
     << "bottleneck_channels=" << c.bottleneck_channels << '\n'
     << "paab_reduction=" << c.paab_reduction << '\n'
     << "mspp_dilations=";
  list(c.mspp_dilations);
  os << "\naspp_dilations=";
  list(c.aspp_dilations);
  os << "\ndecoder_low_channels=" << c.decoder_low_channels << '\n'
     << "decoder_channels=" << c.decoder_channels << '\n';
  return os.str();
}

inline ModelConfig parse_config(const std::string& text) {
  ModelConfig c;
  std::istringstream is(text);
  std::string line;
  auto num = [](const std::string& s) -> std::size_t {
    try {
      return std::stoull(s);
    } catch (const std::exception&) {
      throw FormatError("checkpoint config: bad number '" + s + "'");
    }
  };
  auto list = [&](const std::string& s, auto& arr) {
    std::istringstream ls(s);
    std::string item;
    std::size_t i = 0;
    while (std::getline(ls, item, ',')) {
      if (i >= arr.size()) throw FormatError("checkpoint config: list too long");
      arr[i++] = num(item);
    }
    if (i != arr.size()) throw FormatError("checkpoint config: list too short");
  };
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("checkpoint config: malformed line '" + line + "'");
    const std::string key = line.substr(0, eq), val = line.substr(eq + 1);
    if (key == "variant")
      c.variant = parse_variant(val);
    else if (key == "input_size")
      c.input_size = num(val);
    else if (key == "encoder_channels")
      list(val, c.encoder_channels);
    else if (key == "mspp_branch_channels")
      c.mspp_branch_channels = num(val);
    else if (key == "bottleneck_channels")
      c.bottleneck_channels = num(val);
    else if (key == "paab_reduction")
      c.paab_reduction = num(val);
    else if (key == "mspp_dilations")
      list(val, c.mspp_dilations);
    else if (key == "aspp_dilations")
      list(val, c.aspp_dilations);
    else if (key == "decoder_low_channels")
      c.decoder_low_channels = num(val);
    else if (key == "decoder_channels")
      c.decoder_channels = num(val);
    else
      throw FormatError("checkpoint config: unknown key '" + key + "'");
  }
  return c;
}

}  // namespace detail

/// Layout (little-endian): "DLV3", u32 version, config text, u32 parameter
/// count, named f32 arrays, u8 has-state flag, then optionally the Adam
/// hyper-parameters and moments, schedule counters, completed epochs and the
/// shuffle RNG state.
template <Real T>
std::string encode_checkpoint(const Model<T>& model, const TrainingState<T>* state) {
  detail::ByteWriter w;
  w.raw(kCheckpointMagic, 4);
  w.u32(kCheckpointVersion);
  w.str(detail::serialize_config(model.config()));
  w.u32(static_cast<std::uint32_t>(model.params().size()));
  for (const auto& [name, p] : model.params()) w.array<T>(name, p.shape(), p.data());
  w.pod<std::uint8_t>(state ? 1 : 0);
  if (state) {
    const auto& a = state->adam;
    w.pod<std::uint64_t>(a.t);
    w.pod(a.lr);
    w.pod(a.beta1);
    w.pod(a.beta2);
    w.pod(a.eps);
    w.u32(static_cast<std::uint32_t>(a.m.size()));
    std::size_t k = 0;
    for (const auto& [name, p] : model.params()) {
      if (k >= a.m.size()) break;
      w.array<T>("adam.m/" + name, p.shape(), a.m[k]);
      w.array<T>("adam.v/" + name, p.shape(), a.v[k]);
      ++k;
    }
    const auto& s = state->schedule;
    w.pod(s.lr);
    w.pod(s.best_val_loss);
    w.u32(s.epochs_since_improve_lr);
    w.u32(s.epochs_since_improve_stop);
    w.u32(s.plateau_patience);
    w.pod(s.plateau_factor);
    w.u32(s.stop_patience);
    w.pod(s.min_delta);
    w.u32(state->epoch);
    w.str(state->rng_state);
  }
  return w.bytes();
}

template <Real T>
void save_checkpoint(const std::filesystem::path& path, const Model<T>& model, const TrainingState<T>* state) {
  const auto bytes = encode_checkpoint(model, state);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw FormatError("cannot create " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

template <Real T>
struct Checkpoint {
  Model<T> model;
  std::optional<TrainingState<T>> state;
};

template <Real T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path) {
  detail::ByteReader r(detail::read_file(path), path.string());
  if (r.raw(4) != std::string(kCheckpointMagic, 4)) throw FormatError(path.string() + ": bad magic (expected DLV3)");
  const auto version = r.u32();
  if (version != kCheckpointVersion)
    throw FormatError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  ModelConfig cfg = detail::parse_config(r.str());
  Model<T> model(cfg, 0);
  const auto n = r.u32();
  if (n != model.params().size())
    r.fail("parameter count " + std::to_string(n) + " does not match the configured model (" +
           std::to_string(model.params().size()) + ")");
  auto load_into = [&](const std::string& expected, const Shape& shape, auto&& sink) {
    auto a = r.array();
    if (a.name != expected) r.fail("expected array '" + expected + "', found '" + a.name + "'");
    if (a.shape != shape) r.fail("shape mismatch for '" + expected + "'");
    sink(a.values);
  };
  for (std::size_t i = 0; i < n; ++i) {
    auto param = model.params()[i].second;
    load_into(model.params()[i].first, param.shape(), [&](const std::vector<float>& v) {
      auto dst = param.mutable_data();
      for (std::size_t k = 0; k < v.size(); ++k) dst[k] = static_cast<T>(v[k]);
    });
  }
  std::optional<TrainingState<T>> state;
  if (r.pod<std::uint8_t>()) {
    TrainingState<T> s;
    auto& a = s.adam;
    a.t = r.pod<std::uint64_t>();
    a.lr = r.pod<double>();
    a.beta1 = r.pod<double>();
    a.beta2 = r.pod<double>();
    a.eps = r.pod<double>();
    const auto moments = r.u32();
    if (moments != 0 && moments != n) r.fail("optimizer moment count mismatch");
    for (std::size_t i = 0; i < moments; ++i) {
      const auto& [name, p] = model.params()[i];
      auto to_vec = [&](std::vector<T>& dst) {
        return [&dst](const std::vector<float>& v) { dst.assign(v.begin(), v.end()); };
      };
      a.m.emplace_back();
      a.v.emplace_back();
      load_into("adam.m/" + name, p.shape(), to_vec(a.m.back()));
      load_into("adam.v/" + name, p.shape(), to_vec(a.v.back()));
    }
    auto& sc = s.schedule;
    sc.lr = r.pod<double>();
    sc.best_val_loss = r.pod<double>();
    sc.epochs_since_improve_lr = r.u32();
    sc.epochs_since_improve_stop = r.u32();
    sc.plateau_patience = r.u32();
    sc.plateau_factor = r.pod<double>();
    sc.stop_patience = r.u32();
    sc.min_delta = r.pod<double>();
    s.epoch = r.u32();
    s.rng_state = r.str();
    state = std::move(s);
  }
  if (!r.at_end()) r.fail("trailing bytes");
  return {std::move(model), std::move(state)};
}

// ---------------------------------------------------------------------------
// Evaluation

struct EvalResult {
  std::vector<std::string> ids;
  std::vector<MetricsReport> per_image;
  MetricsReport macro;
  // Pixel-pooled metrics over the whole set.
  MetricsReport micro;
};

/// Probability map (H·W values) for one sample.
using Predictor = std::function<std::vector<float>(const Sample&)>;

inline EvalResult evaluate(const Predictor& predict, const std::vector<Sample>& samples, double threshold = 0.5) {
  if (samples.empty()) throw ConfigError("evaluate: empty dataset");
  EvalResult r;
  ConfusionCounts pooled;
  for (const auto& s : samples) {
    const auto prob = predict(s);
    const auto pred = binarize(std::span<const float>(prob), threshold);
    const auto counts = confusion_counts(std::span<const std::uint8_t>(pred), std::span<const float>(s.mask.data));
    pooled += counts;
    r.ids.push_back(s.id);
    r.per_image.push_back(compute_metrics(counts));
  }
  r.macro = macro_average(r.per_image);
  r.micro = compute_metrics(pooled);
  return r;
}

/// Forward pass in chunks of `batch_size` without recording a graph.
template <Real T>
std::vector<std::vector<float>> predict_all(const Model<T>& model, const std::vector<Sample>& samples,
                                            std::size_t batch_size = 8) {
  NoGradGuard guard;
  std::vector<std::vector<float>> out;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < samples.size(); start += batch_size) {
    idx.clear();
    for (std::size_t i = start; i < std::min(samples.size(), start + batch_size); ++i) idx.push_back(i);
    auto batch = make_batch<T>(samples, idx);
    auto prob = model.forward(batch.images);
    const std::size_t plane = prob.numel() / idx.size();
    for (std::size_t k = 0; k < idx.size(); ++k)
      out.emplace_back(prob.data().begin() + static_cast<std::ptrdiff_t>(k * plane),
                       prob.data().begin() + static_cast<std::ptrdiff_t>((k + 1) * plane));
  }
  return out;
}

template <Real T>
EvalResult evaluate(const Model<T>& model, const std::vector<Sample>& samples, double threshold = 0.5) {
  if (samples.empty()) throw ConfigError("evaluate: empty dataset");
  const auto probs = predict_all(model, samples);
  std::size_t next = 0;
  return evaluate([&](const Sample&) { return probs[next++]; }, samples, threshold);
}

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  std::size_t epochs = 150;
  std::size_t batch_size = 4;
  double lr = 1e-4;
  LossWeights loss_weights{};
  FocalParams focal{};
  double dice_eps = 1.0;
  std::uint64_t seed = 42;
  std::size_t aug_factor = 0;
  double threshold = 0.5;
  std::filesystem::path checkpoint_path;  // best model; empty disables checkpointing
  std::filesystem::path history_path;     // CSV, rewritten every epoch; empty disables
  std::function<void(const struct EpochRecord&)> on_epoch;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0, val_loss = 0, val_dice = 0, lr = 0, seconds = 0;
};

using History = std::vector<EpochRecord>;

inline constexpr const char* kHistoryCsvHeader = "epoch,train_loss,val_loss,val_dice,lr,seconds";

inline void write_history_csv(std::ostream& os, const History& h) {
  os << kHistoryCsvHeader << '\n' << std::setprecision(10);
  for (const auto& e : h)
    os << e.epoch << ',' << e.train_loss << ',' << e.val_loss << ',' << e.val_dice << ',' << e.lr << ','
       << e.seconds << '\n';
}

/// Parses rows written by write_history_csv.
inline History read_history_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kHistoryCsvHeader) throw FormatError("history: bad header");
  History h;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    EpochRecord e;
    char c[5];
    std::istringstream row(line);
    if (!(row >> e.epoch >> c[0] >> e.train_loss >> c[1] >> e.val_loss >> c[2] >> e.val_dice >> c[3] >> e.lr >> c[4] >>
          e.seconds))
      throw FormatError("history: malformed row '" + line + "'");
    h.push_back(e);
  }
  return h;
}

/// Path of the every-epoch checkpoint written next to the best one.
inline std::filesystem::path last_checkpoint_path(const std::filesystem::path& best) {
  auto p = best;
  p += ".last";
  return p;
}

template <Real T>
struct TrainResult {
  History history;
  TrainingState<T> final_state;
  std::size_t best_epoch = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();
};

template <Real T>
double validation_loss(const Model<T>& model, const std::vector<Sample>& val, const TrainConfig& cfg,
                       double* macro_dice) {
  NoGradGuard guard;
  double total = 0;
  std::vector<MetricsReport> reports;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < val.size(); start += cfg.batch_size) {
    idx.clear();
    for (std::size_t i = start; i < std::min(val.size(), start + cfg.batch_size); ++i) idx.push_back(i);
    auto batch = make_batch<T>(val, idx);
    auto prob = model.forward(batch.images);
    total += static_cast<double>(hybrid_loss(prob, batch.masks, cfg.loss_weights, cfg.focal, cfg.dice_eps).item()) *
             static_cast<double>(idx.size());
    const std::size_t plane = prob.numel() / idx.size();
    for (std::size_t k = 0; k < idx.size(); ++k) {
      auto p = prob.data().subspan(k * plane, plane);
      auto g = batch.masks.data().subspan(k * plane, plane);
      reports.push_back(compute_metrics(confusion_counts(std::span<const std::uint8_t>(binarize(p, cfg.threshold)), g)));
    }
  }
  if (macro_dice) *macro_dice = macro_average(reports).dice;
  return total / static_cast<double>(val.size());
}

/// Runs epochs `resume.epoch + 1 .. cfg.epochs` (from 1 when starting fresh).
/// On return the model holds the parameters of the best validation epoch.
template <Real T>
TrainResult<T> train(Model<T>& model, const DatasetSplits& data, const TrainConfig& cfg,
                     const TrainingState<T>* resume = nullptr) {
  if (cfg.batch_size < 1 || cfg.epochs < 1) throw ConfigError("train: batch size and epochs must be >= 1");
  if (data.train.empty() || data.val.empty()) throw ConfigError("train: train and validation sets must be non-empty");

  TrainResult<T> result;
  TrainingState<T> state;
  Rng rng(cfg.seed);
  if (resume) {
    state = *resume;
    rng.set_state(state.rng_state);
    result.best_val_loss = state.schedule.best_val_loss;
    if (!cfg.history_path.empty() && std::filesystem::exists(cfg.history_path)) {
      std::ifstream h(cfg.history_path);
      result.history = read_history_csv(h);
      std::erase_if(result.history, [&](const EpochRecord& e) { return e.epoch > state.epoch; });
    }
  } else {
    state.adam.lr = cfg.lr;
    state.schedule.lr = cfg.lr;
  }
  const auto train_set = expand_with_augmentations(data.train, cfg.aug_factor, cfg.seed ^ 0x9e3779b97f4a7c15ULL);

  std::vector<std::vector<T>> best_params;
  auto snapshot = [&] {
    best_params.clear();
    for (const auto& [name, p] : model.params()) best_params.emplace_back(p.data().begin(), p.data().end());
  };
  if (resume) snapshot();

  std::vector<std::size_t> order(train_set.size());
  for (std::size_t epoch = state.epoch + 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order.begin(), order.end());

    double loss_sum = 0;
    std::size_t batch_no = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch_no) {
      const auto count = std::min(cfg.batch_size, order.size() - start);
      auto batch = make_batch<T>(train_set, std::span<const std::size_t>(order).subspan(start, count));
      auto prob = model.forward(batch.images);
      auto loss = hybrid_loss(prob, batch.masks, cfg.loss_weights, cfg.focal, cfg.dice_eps);
      if (!std::isfinite(loss.item()))
        throw NumericError("non-finite training loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch_no));
      backward(loss);
      adam_step(model.params(), state.adam);
      model.params().zero_grad();
      loss_sum += static_cast<double>(loss.item()) * static_cast<double>(count);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    rec.val_loss = validation_loss(model, data.val, cfg, &rec.val_dice);
    if (!std::isfinite(rec.val_loss))
      throw NumericError("non-finite validation loss at epoch " + std::to_string(epoch));
    rec.lr = state.adam.lr;
    const auto decision = plateau_step(state.schedule, rec.val_loss);
    state.adam.lr = decision.lr;
    state.epoch = static_cast<std::uint32_t>(epoch);
    state.rng_state = rng.state();

    if (decision.improved) {
      snapshot();
      result.best_epoch = epoch;
      result.best_val_loss = rec.val_loss;
      if (!cfg.checkpoint_path.empty()) save_checkpoint(cfg.checkpoint_path, model, &state);
    }
    if (!cfg.checkpoint_path.empty()) save_checkpoint(last_checkpoint_path(cfg.checkpoint_path), model, &state);
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.history.push_back(rec);
    if (!cfg.history_path.empty()) {
      std::ofstream h(cfg.history_path);
      write_history_csv(h, result.history);
    }
    if (cfg.on_epoch) cfg.on_epoch(rec);
    if (decision.should_stop) break;
  }
  result.final_state = state;
  if (!best_params.empty()) {
    std::size_t k = 0;
    for (auto entry : model.params()) {
      auto dst = entry.second.mutable_data();
      std::copy(best_params[k].begin(), best_params[k].end(), dst.begin());
      ++k;
    }
  }
  return result;
}

}  // namespace polypseg
