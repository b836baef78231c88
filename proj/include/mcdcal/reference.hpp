#pragma once

// Naive reference implementations used as cross-checks by the `oracle`
// subcommand and the test suites. They share no code path with the library
// routines they check: binning is an O(n*M) membership scan against the bin
// edges, and the tempered softmax is evaluated as 1 / sum_k exp((z_k - z_c)/t).

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "mcdcal/binned_metrics.hpp"
#include "mcdcal/prob_core.hpp"

namespace mcdcal::reference {

inline bool in_bin(double v, std::size_t k, std::size_t m) {
  const double lo = static_cast<double>(k) / static_cast<double>(m);
  const double hi = static_cast<double>(k + 1) / static_cast<double>(m);
  return k == 0 ? (v >= 0.0 && v <= hi) : (v > lo && v <= hi);
}

/// For every bin, scan all records; accumulate in record order.
inline double binned_error(std::span<const PredictionRecord> records, std::size_t m, bool on_uncertainty) {
  const double n = static_cast<double>(records.size());
  double total = 0.0;
  for (std::size_t k = 0; k < m; ++k) {
    std::size_t count = 0;
    double conf = 0.0;
    double unc = 0.0;
    double hits = 0.0;
    double misses = 0.0;
    for (const auto& r : records) {
      if (!in_bin(on_uncertainty ? r.uncertainty : r.confidence, k, m)) continue;
      ++count;
      conf += r.confidence;
      unc += r.uncertainty;
      if (r.predicted == r.label) {
        hits += 1.0;
      } else {
        misses += 1.0;
      }
    }
    if (count == 0) continue;
    const double c = static_cast<double>(count);
    const double gap = on_uncertainty ? std::abs(misses / c - unc / c) : std::abs(hits / c - conf / c);
    total += (c / n) * gap;
  }
  return total;
}

inline double ece(std::span<const PredictionRecord> records, std::size_t m) {
  return binned_error(records, m, false);
}

inline double uce(std::span<const PredictionRecord> records, std::size_t m) {
  return binned_error(records, m, true);
}

inline std::vector<double> softmax(std::span<const double> z, double t) {
  std::vector<double> p(z.size());
  for (std::size_t c = 0; c < z.size(); ++c) {
    double denom = 0.0;
    for (std::size_t k = 0; k < z.size(); ++k) denom += std::exp((z[k] - z[c]) / t);
    p[c] = 1.0 / denom;
  }
  return p;
}

inline std::vector<double> mc_integrate(const LogitSampleSet& s, double t) {
  std::vector<double> mean(s.num_classes(), 0.0);
  for (std::size_t i = 0; i < s.num_samples(); ++i) {
    const auto p = reference::softmax(s.sample(i), t);
    for (std::size_t c = 0; c < mean.size(); ++c) mean[c] += p[c] / static_cast<double>(s.num_samples());
  }
  return mean;
}

inline double nll(std::span<const LogitSampleSet> sets, double t) {
  double total = 0.0;
  for (const auto& s : sets) {
    const double p = reference::mc_integrate(s, t)[s.label()];
    total += -std::log(p < 1e-300 ? 1e-300 : p);
  }
  return total;
}

/// Central difference (f(x + h) - f(x - h)) / 2h.
inline double central_difference(const std::function<double(double)>& f, double x, double h) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

}  // namespace mcdcal::reference
