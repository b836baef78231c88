#pragma once

// Temperature fitting for MC dropout: minimize the validation NLL of the
// tempered MC mean over a single positive scalar T. The logit samples are
// fixed up front, so the objective is a deterministic function of T.
//
// The MC-averaged NLL is not guaranteed unimodal in T, so the search is a
// coarse log-spaced grid followed by golden-section refinement on log T inside
// the bracket around the best grid point.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "mcdcal/errors.hpp"
#include "mcdcal/prob_core.hpp"

namespace mcdcal {

struct FitConfig {
  double t_min = 0.05;
  double t_max = 10.0;
  std::size_t grid_points = 50;
  double refine_tolerance = 1e-4;  // on log T
  std::size_t max_refine_iters = 100;

  void validate() const {
    if (!(t_min > 0.0) || !(t_max > t_min) || !std::isfinite(t_max)) {
      throw DomainError("fit config requires 0 < t_min < t_max");
    }
    if (grid_points < 3) throw DomainError("fit config requires at least 3 grid points");
    if (!(refine_tolerance > 0.0)) throw DomainError("refine tolerance must be positive");
  }
};

/// d nll / dT, analytic. Inputs whose label probability sits on the floor contribute 0,
/// matching the flat floored objective.
inline double nll_grad_t(std::span<const LogitSampleSet> sets, double t) {
  if (sets.empty()) throw DomainError("nll gradient of an empty validation set");
  detail::require_temperature(t);
  std::vector<double> soft;
  double grad = 0.0;
  const double inv_t2 = 1.0 / (t * t);
  for (const auto& s : sets) {
    soft.resize(s.num_classes());
    const std::size_t y = s.label();
    double mean_py = 0.0;
    double mean_dpy = 0.0;
    for (std::size_t i = 0; i < s.num_samples(); ++i) {
      const auto z = s.sample(i);
      detail::softmax_into(z, t, soft);
      double expected_z = 0.0;
      for (std::size_t c = 0; c < z.size(); ++c) expected_z += soft[c] * z[c];
      mean_py += soft[y];
      // d softmax(z/t)_y / dt = -(s_y / t^2) (z_y - E_s[z])
      mean_dpy -= soft[y] * inv_t2 * (z[y] - expected_z);
    }
    const double inv_n = 1.0 / static_cast<double>(s.num_samples());
    mean_py *= inv_n;
    mean_dpy *= inv_n;
    if (mean_py >= kProbFloor) grad -= mean_dpy / mean_py;
  }
  return grad;
}

namespace detail {

struct GoldenResult {
  double x;
  double fx;
  std::size_t iterations;
};

// Golden-section minimization of f on [a, b]; stops once the bracket is narrower than tol.
template <typename F>
GoldenResult golden_section(F&& f, double a, double b, double tol, std::size_t max_iters) {
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = f(c);
  double fd = f(d);
  std::size_t it = 0;
  while (b - a > tol && it < max_iters) {
    ++it;
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = f(d);
    }
  }
  const double mid = 0.5 * (a + b);
  const double fmid = f(mid);
  if (fmid <= fc && fmid <= fd) return {mid, fmid, it};
  return fc <= fd ? GoldenResult{c, fc, it} : GoldenResult{d, fd, it};
}

}  // namespace detail

inline TemperatureParam fit_temperature(std::span<const LogitSampleSet> validation,
                                        const FitConfig& cfg = {}) {
  if (validation.empty()) throw DomainError("cannot fit a temperature on an empty validation set");
  cfg.validate();

  const auto objective = [&](double log_t) {
    const double v = nll(validation, std::exp(log_t));
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  };

  const double lo = std::log(cfg.t_min);
  const double hi = std::log(cfg.t_max);
  std::vector<double> grid;
  grid.reserve(cfg.grid_points + 1);
  for (std::size_t i = 0; i < cfg.grid_points; ++i) {
    grid.push_back(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(cfg.grid_points - 1));
  }
  grid.back() = hi;
  // T = 1 (the uncalibrated model) is always a candidate when in range.
  if (lo < 0.0 && hi > 0.0) {
    auto pos = std::lower_bound(grid.begin(), grid.end(), 0.0);
    if (*pos != 0.0) grid.insert(pos, 0.0);
  }

  std::vector<double> values(grid.size());
  std::size_t best = grid.size();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    values[i] = objective(grid[i]);
    if (std::isfinite(values[i]) && (best == grid.size() || values[i] < values[best])) best = i;
  }
  if (best == grid.size()) throw FitFailure("validation NLL is non-finite at every grid point");

  const double a = grid[best == 0 ? 0 : best - 1];
  const double b = grid[std::min(best + 1, grid.size() - 1)];
  const auto refined =
      detail::golden_section(objective, a, b, cfg.refine_tolerance, cfg.max_refine_iters);

  double log_t = grid[best];
  double fit_nll = values[best];
  if (refined.fx <= fit_nll) {
    log_t = refined.x;
    fit_nll = refined.fx;
  }
  double t = std::exp(log_t);
  if (t < cfg.t_min || t > cfg.t_max) {
    t = std::clamp(t, cfg.t_min, cfg.t_max);
    fit_nll = nll(validation, t);
  }
  return TemperatureParam(t, fit_nll, refined.iterations);
}

}  // namespace mcdcal
