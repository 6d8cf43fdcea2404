#pragma once
// Pixel confusion counts, overlap metrics and XOR error maps.

#include <cstdint>
#include <iomanip>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "polypseg/errors.hpp"

namespace polypseg {

struct ConfusionCounts {
  std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;

  std::uint64_t total() const noexcept { return tp + fp + tn + fn; }
  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    tn += o.tn;
    fn += o.fn;
    return *this;
  }
  bool operator==(const ConfusionCounts&) const = default;
};

struct MetricsReport {
  double dice = 0, miou = 0, precision = 0, recall = 0, accuracy = 0;
  ConfusionCounts counts;
};

using Mask = std::vector<std::uint8_t>;

/// 1 where prob >= threshold.
template <class V>
Mask binarize(std::span<const V> prob, double threshold = 0.5) {
  if (!(threshold > 0 && threshold < 1)) throw ConfigError("binarize: threshold must lie in (0, 1)");
  Mask out(prob.size());
  for (std::size_t i = 0; i < prob.size(); ++i) out[i] = static_cast<double>(prob[i]) >= threshold ? 1 : 0;
  return out;
}

inline Mask binarize(const Mask& mask, double threshold = 0.5) {
  return binarize(std::span<const std::uint8_t>(mask), threshold);
}

namespace detail {

template <class V>
bool to_bit(V v, std::string_view op) {
  if (v == V(0)) return false;
  if (v == V(1)) return true;
  throw ValidationError(std::string(op) + ": mask values must be 0 or 1");
}

template <class A, class B>
void check_same_size(std::span<const A> a, std::span<const B> b, std::string_view op) {
  if (a.size() != b.size())
    throw DimensionError(std::string(op) + ": masks differ in size (" + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()) + ")");
}

}  // namespace detail

template <class A, class B>
ConfusionCounts confusion_counts(std::span<const A> pred, std::span<const B> gt) {
  detail::check_same_size(pred, gt, "confusion_counts");
  ConfusionCounts c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = detail::to_bit(pred[i], "confusion_counts");
    const bool g = detail::to_bit(gt[i], "confusion_counts");
    if (p && g)
      ++c.tp;
    else if (p)
      ++c.fp;
    else if (g)
      ++c.fn;
    else
      ++c.tn;
  }
  return c;
}

inline ConfusionCounts confusion_counts(const Mask& pred, const Mask& gt) {
  return confusion_counts(std::span<const std::uint8_t>(pred), std::span<const std::uint8_t>(gt));
}

/// Ratios over the counts. A zero denominator yields 1.0 when both masks are
/// empty (tp = fp = fn = 0) and 0.0 otherwise.
inline MetricsReport compute_metrics(const ConfusionCounts& c) {
  if (c.total() == 0) throw ConfigError("compute_metrics: no pixels counted");
  const bool both_empty = c.tp == 0 && c.fp == 0 && c.fn == 0;
  auto ratio = [&](std::uint64_t num, std::uint64_t den) {
    if (den == 0) return both_empty ? 1.0 : 0.0;
    return static_cast<double>(num) / static_cast<double>(den);
  };
  MetricsReport r;
  r.counts = c;
  r.dice = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn);
  r.miou = ratio(c.tp, c.tp + c.fp + c.fn);
  r.precision = ratio(c.tp, c.tp + c.fp);
  r.recall = ratio(c.tp, c.tp + c.fn);
  r.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
  return r;
}

/// 1 where the masks disagree.
template <class A, class B>
Mask xor_error_map(std::span<const A> pred, std::span<const B> gt) {
  detail::check_same_size(pred, gt, "xor_error_map");
  Mask out(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i)
    out[i] = detail::to_bit(pred[i], "xor_error_map") != detail::to_bit(gt[i], "xor_error_map") ? 1 : 0;
  return out;
}

inline Mask xor_error_map(const Mask& pred, const Mask& gt) {
  return xor_error_map(std::span<const std::uint8_t>(pred), std::span<const std::uint8_t>(gt));
}

/// Unweighted mean of per-image metrics; counts are summed.
inline MetricsReport macro_average(std::span<const MetricsReport> reports) {
  if (reports.empty()) throw ConfigError("macro_average: no reports");
  MetricsReport m;
  for (const auto& r : reports) {
    m.dice += r.dice;
    m.miou += r.miou;
    m.precision += r.precision;
    m.recall += r.recall;
    m.accuracy += r.accuracy;
    m.counts += r.counts;
  }
  const double n = static_cast<double>(reports.size());
  m.dice /= n;
  m.miou /= n;
  m.precision /= n;
  m.recall /= n;
  m.accuracy /= n;
  return m;
}

inline constexpr const char* kMetricsCsvHeader = "image_id,dice,miou,precision,recall,accuracy,tp,fp,tn,fn";

inline void write_metrics_row(std::ostream& os, const std::string& id, const MetricsReport& r) {
  os << id << std::setprecision(9) << ',' << r.dice << ',' << r.miou << ',' << r.precision << ',' << r.recall
     << ',' << r.accuracy << ',' << r.counts.tp << ',' << r.counts.fp << ',' << r.counts.tn << ','
     << r.counts.fn << '\n';
}

/// Header, one row per image, then a MACRO row.
inline void write_metrics_csv(std::ostream& os, const std::vector<std::string>& ids,
                              const std::vector<MetricsReport>& reports) {
  if (ids.size() != reports.size()) throw ConfigError("write_metrics_csv: ids and reports differ in length");
  os << kMetricsCsvHeader << '\n';
  for (std::size_t i = 0; i < ids.size(); ++i) write_metrics_row(os, ids[i], reports[i]);
  write_metrics_row(os, "MACRO", macro_average(reports));
}

}  // namespace polypseg
