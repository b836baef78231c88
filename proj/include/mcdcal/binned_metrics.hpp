#pragma once

// Equal-width binning of confidence / uncertainty, per-bin statistics and the
// two scalar calibration errors built on them:
//   ECE = sum_m |B_m|/n * |acc(B_m)  - conf(B_m)|     (binned on confidence)
//   UCE = sum_m |B_m|/n * |err(B_m)  - uncert(B_m)|   (binned on normalized entropy)
//
// Bin k covers (k/M, (k+1)/M] for k > 0 and [0, 1/M] for k = 0. Membership is
// decided against the edge values k/M themselves, so any value in [0, 1] lands
// in exactly one bin.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mcdcal/errors.hpp"
#include "mcdcal/prob_core.hpp"

namespace mcdcal {

inline constexpr std::size_t kDefaultBins = 15;

struct PredictionRecord {
  double confidence = 0.0;   // max p
  double uncertainty = 0.0;  // normalized entropy of p
  std::size_t predicted = 0;
  std::size_t label = 0;

  bool correct() const noexcept { return predicted == label; }
};

inline PredictionRecord make_record(const ProbVector& p, std::size_t label) {
  const std::size_t predicted = p.argmax();
  return {p[predicted], normalized_entropy(p), predicted, label};
}

/// One record per set from the tempered MC mean.
inline std::vector<PredictionRecord> make_records(std::span<const LogitSampleSet> sets,
                                                  double t = 1.0) {
  std::vector<PredictionRecord> out;
  out.reserve(sets.size());
  for (const auto& s : sets) out.push_back(make_record(mc_integrate(s, t), s.label()));
  return out;
}

enum class Axis { Confidence, Uncertainty };

inline const char* to_string(Axis a) noexcept {
  return a == Axis::Confidence ? "confidence" : "uncertainty";
}

inline double bin_edge(std::size_t k, std::size_t m) {
  return static_cast<double>(k) / static_cast<double>(m);
}

inline std::size_t bin_index(double value, std::size_t m) {
  if (m < 1) throw DomainError("bin count must be at least 1");
  if (!(value >= 0.0 && value <= 1.0)) {
    throw InvalidInput("value " + std::to_string(value) + " outside [0, 1]");
  }
  // Initial guess from the product, then snap to the exact edge comparisons.
  const double scaled = std::ceil(value * static_cast<double>(m));
  std::size_t k = scaled <= 1.0 ? 0 : std::min(static_cast<std::size_t>(scaled) - 1, m - 1);
  while (k > 0 && value <= bin_edge(k, m)) --k;
  while (k + 1 < m && value > bin_edge(k + 1, m)) ++k;
  return k;
}

inline std::vector<std::size_t> assign_bins(std::span<const double> values, std::size_t m) {
  std::vector<std::size_t> out;
  out.reserve(values.size());
  for (double v : values) out.push_back(bin_index(v, m));
  return out;
}

struct BinStats {
  double lower = 0.0;
  double upper = 0.0;
  std::size_t count = 0;
  // Absent for empty bins.
  std::optional<double> mean_confidence;
  std::optional<double> accuracy;
  std::optional<double> mean_uncertainty;
  std::optional<double> error_rate;

  /// |acc - conf| on the confidence axis, |err - uncert| on the uncertainty axis; 0 when empty.
  double gap(Axis axis) const {
    if (count == 0) return 0.0;
    return axis == Axis::Confidence ? std::abs(*accuracy - *mean_confidence)
                                    : std::abs(*error_rate - *mean_uncertainty);
  }
};

struct BinnedReport {
  Axis axis = Axis::Confidence;
  std::size_t m_bins = 0;
  std::size_t total_n = 0;
  std::vector<BinStats> bins;
  double ece = 0.0;
  double uce = 0.0;

  /// The error whose binning matches this report's axis.
  double calibration_error() const { return axis == Axis::Confidence ? ece : uce; }
};

namespace detail {

struct BinAccumulator {
  std::size_t count = 0;
  double sum_confidence = 0.0;
  double sum_correct = 0.0;
  double sum_uncertainty = 0.0;
  double sum_wrong = 0.0;
};

inline void validate_records(std::span<const PredictionRecord> records, std::size_t m) {
  if (records.empty()) throw DomainError("no prediction records");
  if (m < 1) throw DomainError("bin count must be at least 1");
  for (const auto& r : records) {
    if (!(r.confidence >= 0.0 && r.confidence <= 1.0)) {
      throw InvalidInput("confidence outside [0, 1]");
    }
    if (!(r.uncertainty >= 0.0 && r.uncertainty <= 1.0)) {
      throw InvalidInput("uncertainty outside [0, 1]");
    }
  }
}

inline std::vector<BinAccumulator> accumulate(std::span<const PredictionRecord> records,
                                              std::size_t m, Axis axis) {
  std::vector<BinAccumulator> acc(m);
  for (const auto& r : records) {
    auto& b = acc[bin_index(axis == Axis::Confidence ? r.confidence : r.uncertainty, m)];
    ++b.count;
    b.sum_confidence += r.confidence;
    b.sum_uncertainty += r.uncertainty;
    if (r.correct()) {
      b.sum_correct += 1.0;
    } else {
      b.sum_wrong += 1.0;
    }
  }
  return acc;
}

inline double weighted_gap(std::span<const BinAccumulator> acc, std::size_t n, Axis axis) {
  const double total = static_cast<double>(n);
  double sum = 0.0;
  for (const auto& b : acc) {
    if (b.count == 0) continue;
    const double cnt = static_cast<double>(b.count);
    const double gap = axis == Axis::Confidence
                           ? std::abs(b.sum_correct / cnt - b.sum_confidence / cnt)
                           : std::abs(b.sum_wrong / cnt - b.sum_uncertainty / cnt);
    sum += (cnt / total) * gap;
  }
  return sum;
}

}  // namespace detail

inline double ece(std::span<const PredictionRecord> records, std::size_t m = kDefaultBins) {
  detail::validate_records(records, m);
  return detail::weighted_gap(detail::accumulate(records, m, Axis::Confidence), records.size(),
                              Axis::Confidence);
}

inline double uce(std::span<const PredictionRecord> records, std::size_t m = kDefaultBins) {
  detail::validate_records(records, m);
  return detail::weighted_gap(detail::accumulate(records, m, Axis::Uncertainty), records.size(),
                              Axis::Uncertainty);
}

inline BinnedReport reliability_table(std::span<const PredictionRecord> records,
                                      std::size_t m = kDefaultBins,
                                      Axis axis = Axis::Confidence) {
  detail::validate_records(records, m);
  const auto acc = detail::accumulate(records, m, axis);

  BinnedReport report;
  report.axis = axis;
  report.m_bins = m;
  report.total_n = records.size();
  report.bins.reserve(m);
  for (std::size_t k = 0; k < m; ++k) {
    const auto& a = acc[k];
    BinStats s;
    s.lower = bin_edge(k, m);
    s.upper = bin_edge(k + 1, m);
    s.count = a.count;
    if (a.count > 0) {
      const double cnt = static_cast<double>(a.count);
      s.mean_confidence = a.sum_confidence / cnt;
      s.accuracy = a.sum_correct / cnt;
      s.mean_uncertainty = a.sum_uncertainty / cnt;
      s.error_rate = a.sum_wrong / cnt;
    }
    report.bins.push_back(s);
  }
  const auto other = axis == Axis::Confidence ? Axis::Uncertainty : Axis::Confidence;
  const double own = detail::weighted_gap(acc, records.size(), axis);
  const double cross =
      detail::weighted_gap(detail::accumulate(records, m, other), records.size(), other);
  report.ece = axis == Axis::Confidence ? own : cross;
  report.uce = axis == Axis::Confidence ? cross : own;
  return report;
}

/// Weighted re-sum of a report's per-bin gaps. Equals calibration_error() for reports
/// built by reliability_table and recovers it from re-parsed tables.
inline double resum_gaps(const BinnedReport& report) {
  double sum = 0.0;
  const double total = static_cast<double>(report.total_n);
  for (const auto& b : report.bins) {
    if (b.count == 0) continue;
    sum += (static_cast<double>(b.count) / total) * b.gap(report.axis);
  }
  return sum;
}

}  // namespace mcdcal
