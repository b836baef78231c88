#pragma once

// Selective prediction by uncertainty threshold: keep predictions with
// normalized entropy <= H_max and report the top-1 error of what remains.

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "mcdcal/binned_metrics.hpp"
#include "mcdcal/errors.hpp"

namespace mcdcal {

struct RejectionPoint {
  double threshold = 1.0;
  std::size_t retained_count = 0;
  double retained_fraction = 0.0;
  std::optional<double> top1_error;  // absent when nothing is retained
};

struct RejectionCurve {
  std::size_t total_n = 0;
  std::vector<RejectionPoint> points;
};

/// 1.0, 0.99, ..., 0.0
inline std::vector<double> default_thresholds(std::size_t steps = 100) {
  std::vector<double> out;
  out.reserve(steps + 1);
  for (std::size_t i = 0; i <= steps; ++i) {
    out.push_back(static_cast<double>(steps - i) / static_cast<double>(steps));
  }
  return out;
}

inline RejectionCurve reject_sweep(std::span<const PredictionRecord> records,
                                   std::span<const double> thresholds) {
  if (records.empty()) throw DomainError("no prediction records to reject from");
  for (double h : thresholds) {
    if (!(h >= 0.0 && h <= 1.0)) throw InvalidInput("rejection threshold outside [0, 1]");
  }
  RejectionCurve curve;
  curve.total_n = records.size();
  curve.points.reserve(thresholds.size());
  for (double h : thresholds) {
    RejectionPoint pt;
    pt.threshold = h;
    std::size_t wrong = 0;
    for (const auto& r : records) {
      if (r.uncertainty <= h) {
        ++pt.retained_count;
        if (!r.correct()) ++wrong;
      }
    }
    pt.retained_fraction = static_cast<double>(pt.retained_count) / static_cast<double>(records.size());
    if (pt.retained_count > 0) {
      pt.top1_error = static_cast<double>(wrong) / static_cast<double>(pt.retained_count);
    }
    curve.points.push_back(pt);
  }
  return curve;
}

inline RejectionCurve reject_sweep(std::span<const PredictionRecord> records) {
  const auto thresholds = default_thresholds();
  return reject_sweep(records, thresholds);
}

}  // namespace mcdcal
