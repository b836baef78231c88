#pragma once

// Probability primitives for Monte Carlo dropout outputs: tempered softmax,
// MC integration over stochastic forward passes, normalized entropy and the
// validation negative log-likelihood used to fit the temperature.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mcdcal/errors.hpp"

namespace mcdcal {

inline constexpr double kProbSumTolerance = 1e-9;
inline constexpr double kProbFloor = 1e-300;

namespace detail {

inline void require_temperature(double t) {
  if (!(t > 0.0) || !std::isfinite(t)) {
    throw DomainError("temperature must be positive and finite, got " + std::to_string(t));
  }
}

inline void require_finite(std::span<const double> values, const char* what) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw InvalidInput(std::string(what) + ": non-finite entry at index " + std::to_string(i));
    }
  }
}

// Lowest index wins ties.
inline std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

// out = softmax(z / t); z assumed finite and t > 0. Shifting by max(z) before
// dividing keeps every exponent in (-inf, 0].
inline void softmax_into(std::span<const double> z, double t, std::span<double> out) {
  const double m = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (std::size_t c = 0; c < z.size(); ++c) {
    out[c] = std::exp((z[c] - m) / t);
    sum += out[c];
  }
  for (std::size_t c = 0; c < z.size(); ++c) out[c] /= sum;
}

}  // namespace detail

/// Unbounded network outputs for one forward pass. At least two classes, all finite.
class LogitVector {
 public:
  explicit LogitVector(std::vector<double> values) : values_(std::move(values)) {
    if (values_.size() < 2) throw InvalidInput("logit vector needs at least 2 classes");
    detail::require_finite(values_, "logit vector");
  }
  LogitVector(std::initializer_list<double> values) : LogitVector(std::vector<double>(values)) {}

  std::size_t size() const noexcept { return values_.size(); }
  double operator[](std::size_t c) const { return values_[c]; }
  std::span<const double> values() const noexcept { return values_; }

  friend bool operator==(const LogitVector&, const LogitVector&) = default;

 private:
  std::vector<double> values_;
};

/// N stochastic forward passes of one input plus its true label, stored row-major (N x C).
class LogitSampleSet {
 public:
  LogitSampleSet(std::vector<double> row_major, std::size_t num_samples, std::size_t num_classes,
                 std::size_t label)
      : data_(std::move(row_major)), n_(num_samples), c_(num_classes), label_(label) {
    if (n_ < 1) throw InvalidInput("sample set needs at least one forward pass");
    if (c_ < 2) throw InvalidInput("sample set needs at least 2 classes");
    if (data_.size() != n_ * c_) throw InvalidInput("sample set storage is not N x C");
    if (label_ >= c_) {
      throw InvalidInput("label " + std::to_string(label_) + " out of range for " +
                         std::to_string(c_) + " classes");
    }
    detail::require_finite(data_, "sample set");
  }

  LogitSampleSet(const std::vector<LogitVector>& samples, std::size_t label)
      : LogitSampleSet(flatten(samples), samples.size(), samples.empty() ? 0 : samples.front().size(),
                       label) {}

  std::size_t num_samples() const noexcept { return n_; }
  std::size_t num_classes() const noexcept { return c_; }
  std::size_t label() const noexcept { return label_; }
  std::span<const double> sample(std::size_t i) const { return {data_.data() + i * c_, c_}; }
  std::span<const double> row_major() const noexcept { return data_; }

  friend bool operator==(const LogitSampleSet&, const LogitSampleSet&) = default;

 private:
  static std::vector<double> flatten(const std::vector<LogitVector>& samples) {
    if (samples.empty()) throw InvalidInput("sample set needs at least one forward pass");
    const std::size_t c = samples.front().size();
    std::vector<double> out;
    out.reserve(samples.size() * c);
    for (const auto& s : samples) {
      if (s.size() != c) throw InvalidInput("samples in a set must share the class count");
      out.insert(out.end(), s.values().begin(), s.values().end());
    }
    return out;
  }

  std::vector<double> data_;
  std::size_t n_;
  std::size_t c_;
  std::size_t label_;
};

/// Categorical distribution: non-negative entries summing to one within kProbSumTolerance.
class ProbVector {
 public:
  explicit ProbVector(std::vector<double> probs) : probs_(std::move(probs)) {
    if (probs_.empty()) throw InvalidInput("probability vector is empty");
    double sum = 0.0;
    for (double p : probs_) {
      if (!(p >= 0.0) || !std::isfinite(p)) throw InvalidInput("probability entry outside [0, 1]");
      sum += p;
    }
    if (std::abs(sum - 1.0) > kProbSumTolerance) {
      throw InvalidInput("probabilities sum to " + std::to_string(sum));
    }
  }
  ProbVector(std::initializer_list<double> probs) : ProbVector(std::vector<double>(probs)) {}

  std::size_t size() const noexcept { return probs_.size(); }
  double operator[](std::size_t c) const { return probs_[c]; }
  std::span<const double> values() const noexcept { return probs_; }

  std::size_t argmax() const { return detail::argmax(probs_); }
  double max() const { return probs_[argmax()]; }

 private:
  std::vector<double> probs_;
};

/// Fitted softmax temperature. The inverse temperature is derived, never stored.
class TemperatureParam {
 public:
  explicit TemperatureParam(double t, double fit_nll = 0.0, std::size_t fit_iterations = 0)
      : t_(t), fit_nll_(fit_nll), fit_iterations_(fit_iterations) {
    detail::require_temperature(t_);
  }

  double t() const noexcept { return t_; }
  double inverse() const noexcept { return 1.0 / t_; }
  double fit_nll() const noexcept { return fit_nll_; }
  std::size_t fit_iterations() const noexcept { return fit_iterations_; }

 private:
  double t_;
  double fit_nll_;
  std::size_t fit_iterations_;
};

inline ProbVector softmax(std::span<const double> z, double t = 1.0) {
  detail::require_finite(z, "softmax input");
  detail::require_temperature(t);
  if (z.size() < 2) throw InvalidInput("softmax needs at least 2 classes");
  std::vector<double> out(z.size());
  detail::softmax_into(z, t, out);
  return ProbVector(std::move(out));
}

inline ProbVector softmax(const LogitVector& z, double t = 1.0) { return softmax(z.values(), t); }

namespace detail {

// Mean of softmax(sample_i / t) over the set, written into out (size C).
inline void mc_integrate_into(const LogitSampleSet& s, double t, std::span<double> out,
                              std::span<double> scratch) {
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t i = 0; i < s.num_samples(); ++i) {
    softmax_into(s.sample(i), t, scratch);
    for (std::size_t c = 0; c < out.size(); ++c) out[c] += scratch[c];
  }
  const double inv_n = 1.0 / static_cast<double>(s.num_samples());
  for (double& p : out) p *= inv_n;
}

}  // namespace detail

/// MC integration of the tempered softmax over all forward passes; t = 1 is the plain MC mean.
inline ProbVector mc_integrate(const LogitSampleSet& s, double t = 1.0) {
  detail::require_temperature(t);
  std::vector<double> out(s.num_classes());
  std::vector<double> scratch(s.num_classes());
  detail::mc_integrate_into(s, t, out, scratch);
  return ProbVector(std::move(out));
}

/// Shannon entropy divided by log C, with 0 log 0 = 0. Clamped to [0, 1].
inline double normalized_entropy(const ProbVector& p) {
  if (p.size() < 2) throw DomainError("normalized entropy needs at least 2 classes");
  double h = 0.0;
  for (double v : p.values()) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return std::clamp(h / std::log(static_cast<double>(p.size())), 0.0, 1.0);
}

/// Summed negative log-likelihood of the labels under the tempered MC mean.
/// Per-input probabilities are floored at kProbFloor before the log.
inline double nll(std::span<const LogitSampleSet> sets, double t = 1.0) {
  if (sets.empty()) throw DomainError("nll of an empty validation set");
  detail::require_temperature(t);
  std::vector<double> mean;
  std::vector<double> scratch;
  double total = 0.0;
  for (const auto& s : sets) {
    mean.resize(s.num_classes());
    scratch.resize(s.num_classes());
    detail::mc_integrate_into(s, t, mean, scratch);
    total -= std::log(std::max(mean[s.label()], kProbFloor));
  }
  return total;
}

}  // namespace mcdcal
