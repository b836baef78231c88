#pragma once

// Desk-scale MC dropout classifier: a two-layer rectifier MLP with inverted
// dropout in front of the output layer, trained by minibatch SGD on seeded
// Gaussian blobs. Its stochastic forward passes feed the calibration pipeline.
//
//   a = W1 x + b1,  h = max(a, 0),  m = h * mask / (1 - p),  z = W2 m + b2
//
// Training minimizes NLL - beta * H(softmax(z)) per sample (H in nats), the
// confidence-penalty objective; beta = 0 is plain cross entropy.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "mcdcal/errors.hpp"
#include "mcdcal/prob_core.hpp"

namespace mcdcal {

using Rng = std::mt19937_64;

/// splitmix64 finalizer over (base, index): independent per-input / per-pass streams.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

struct ToyNet {
  Eigen::MatrixXd w1;  // H x D
  Eigen::VectorXd b1;  // H
  Eigen::MatrixXd w2;  // C x H
  Eigen::VectorXd b2;  // C
  double dropout_p = 0.5;

  std::size_t input_dim() const { return static_cast<std::size_t>(w1.cols()); }
  std::size_t hidden_dim() const { return static_cast<std::size_t>(w1.rows()); }
  std::size_t num_classes() const { return static_cast<std::size_t>(w2.rows()); }

  void validate() const {
    if (w1.rows() < 1 || w1.cols() < 1) throw InvalidInput("toy net: empty first layer");
    if (b1.size() != w1.rows() || w2.cols() != w1.rows() || b2.size() != w2.rows()) {
      throw InvalidInput("toy net: inconsistent layer shapes");
    }
    if (w2.rows() < 2) throw InvalidInput("toy net: needs at least 2 classes");
    if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw InvalidInput("toy net: dropout_p outside [0, 1)");
    if (!w1.allFinite() || !b1.allFinite() || !w2.allFinite() || !b2.allFinite()) {
      throw InvalidInput("toy net: non-finite weights");
    }
  }

  /// He-scaled Gaussian weights, zero biases.
  static ToyNet init(std::size_t input_dim, std::size_t hidden_dim, std::size_t num_classes,
                     double dropout_p, std::uint64_t seed) {
    Rng rng(seed);
    std::normal_distribution<double> unit(0.0, 1.0);
    ToyNet net;
    const auto d = static_cast<Eigen::Index>(input_dim);
    const auto h = static_cast<Eigen::Index>(hidden_dim);
    const auto c = static_cast<Eigen::Index>(num_classes);
    const double s1 = std::sqrt(2.0 / static_cast<double>(input_dim));
    const double s2 = std::sqrt(2.0 / static_cast<double>(hidden_dim));
    net.w1 = Eigen::MatrixXd::NullaryExpr(h, d, [&] { return s1 * unit(rng); });
    net.b1 = Eigen::VectorXd::Zero(h);
    net.w2 = Eigen::MatrixXd::NullaryExpr(c, h, [&] { return s2 * unit(rng); });
    net.b2 = Eigen::VectorXd::Zero(c);
    net.dropout_p = dropout_p;
    net.validate();
    return net;
  }

  friend bool operator==(const ToyNet& a, const ToyNet& b) {
    return a.dropout_p == b.dropout_p && a.w1 == b.w1 && a.b1 == b.b1 && a.w2 == b.w2 &&
           a.b2 == b.b2;
  }
};

/// Keep flags (1 = kept) over hidden units.
using DropoutMask = Eigen::VectorXd;

inline DropoutMask draw_mask(std::size_t hidden_dim, double dropout_p, Rng& rng) {
  DropoutMask mask(static_cast<Eigen::Index>(hidden_dim));
  if (dropout_p == 0.0) {
    mask.setOnes();
    return mask;
  }
  std::bernoulli_distribution keep(1.0 - dropout_p);
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask[i] = keep(rng) ? 1.0 : 0.0;
  return mask;
}

namespace detail {

inline void require_input(const ToyNet& net, const Eigen::VectorXd& x) {
  if (static_cast<std::size_t>(x.size()) != net.input_dim()) {
    throw InvalidInput("input has dimension " + std::to_string(x.size()) + ", net expects " +
                       std::to_string(net.input_dim()));
  }
  if (!x.allFinite()) throw InvalidInput("non-finite input");
}

inline std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace detail

/// Logits with an explicit keep mask and inverted-dropout scaling.
inline Eigen::VectorXd forward_with_mask(const ToyNet& net, const Eigen::VectorXd& x,
                                         const DropoutMask& mask) {
  detail::require_input(net, x);
  const Eigen::VectorXd hidden = (net.w1 * x + net.b1).cwiseMax(0.0);
  const double scale = 1.0 / (1.0 - net.dropout_p);
  return net.w2 * (hidden.cwiseProduct(mask) * scale) + net.b2;
}

/// Dropout disabled: the expectation of the inverted-dropout pass over masks.
inline Eigen::VectorXd forward_deterministic(const ToyNet& net, const Eigen::VectorXd& x) {
  detail::require_input(net, x);
  return net.w2 * (net.w1 * x + net.b1).cwiseMax(0.0) + net.b2;
}

inline LogitVector forward_stochastic(const ToyNet& net, const Eigen::VectorXd& x, Rng& rng) {
  const auto mask = draw_mask(net.hidden_dim(), net.dropout_p, rng);
  return LogitVector(detail::to_std(forward_with_mask(net, x, mask)));
}

/// n_passes stochastic passes; pass i draws from its own stream derived from (seed, i).
inline LogitSampleSet mc_predict(const ToyNet& net, const Eigen::VectorXd& x, std::size_t label,
                                 std::size_t n_passes, std::uint64_t seed) {
  if (n_passes < 1) throw DomainError("mc_predict needs at least one pass");
  std::vector<double> rows;
  rows.reserve(n_passes * net.num_classes());
  for (std::size_t i = 0; i < n_passes; ++i) {
    Rng rng(derive_seed(seed, i));
    const auto z = forward_with_mask(net, x, draw_mask(net.hidden_dim(), net.dropout_p, rng));
    rows.insert(rows.end(), z.data(), z.data() + z.size());
  }
  return LogitSampleSet(std::move(rows), n_passes, net.num_classes(), label);
}

struct SyntheticDataset {
  Eigen::MatrixXd inputs;  // n x D, one point per row
  std::vector<std::size_t> labels;
  std::size_t num_classes = 0;

  std::size_t size() const { return labels.size(); }
  Eigen::VectorXd input(std::size_t i) const { return inputs.row(static_cast<Eigen::Index>(i)).transpose(); }
};

struct BlobConfig {
  std::size_t n = 200;
  std::size_t num_classes = 3;
  std::size_t dim = 2;
  double sigma = 0.5;   // per-coordinate spread around unit-circle centers
  std::uint64_t seed = 0;
};

/// C Gaussian blobs with centers evenly spaced on the unit circle of the first two
/// coordinates. Labels are assigned round-robin, then shuffled, so class counts
/// differ by at most one.
inline SyntheticDataset make_blobs(const BlobConfig& cfg) {
  if (cfg.n < 1) throw DomainError("dataset must be nonempty");
  if (cfg.num_classes < 2) throw DomainError("dataset needs at least 2 classes");
  if (cfg.dim < 2) throw DomainError("blobs need at least 2 input dimensions");
  if (!(cfg.sigma >= 0.0)) throw DomainError("blob sigma must be non-negative");

  Rng rng(cfg.seed);
  SyntheticDataset data;
  data.num_classes = cfg.num_classes;
  data.labels.resize(cfg.n);
  for (std::size_t i = 0; i < cfg.n; ++i) data.labels[i] = i % cfg.num_classes;
  std::shuffle(data.labels.begin(), data.labels.end(), rng);

  std::normal_distribution<double> noise(0.0, 1.0);
  data.inputs.resize(static_cast<Eigen::Index>(cfg.n), static_cast<Eigen::Index>(cfg.dim));
  for (std::size_t i = 0; i < cfg.n; ++i) {
    const double angle =
        2.0 * std::numbers::pi * static_cast<double>(data.labels[i]) / static_cast<double>(cfg.num_classes);
    for (std::size_t d = 0; d < cfg.dim; ++d) {
      const double center = d == 0 ? std::cos(angle) : d == 1 ? std::sin(angle) : 0.0;
      data.inputs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d)) =
          center + cfg.sigma * noise(rng);
    }
  }
  return data;
}

struct Gradients {
  Eigen::MatrixXd w1;
  Eigen::VectorXd b1;
  Eigen::MatrixXd w2;
  Eigen::VectorXd b2;

  static Gradients zeros_like(const ToyNet& net) {
    return {Eigen::MatrixXd::Zero(net.w1.rows(), net.w1.cols()), Eigen::VectorXd::Zero(net.b1.size()),
            Eigen::MatrixXd::Zero(net.w2.rows(), net.w2.cols()), Eigen::VectorXd::Zero(net.b2.size())};
  }
};

struct LossTerms {
  double nll = 0.0;
  double entropy = 0.0;  // nats

  double total(double beta) const { return nll - beta * entropy; }
};

namespace detail {

inline Eigen::VectorXd log_softmax(const Eigen::VectorXd& z) {
  const double m = z.maxCoeff();
  return z.array() - m - std::log((z.array() - m).exp().sum());
}

}  // namespace detail

/// Per-sample loss terms for a fixed mask.
inline LossTerms sample_loss(const ToyNet& net, const Eigen::VectorXd& x, std::size_t label,
                             const DropoutMask& mask) {
  const Eigen::VectorXd logp = detail::log_softmax(forward_with_mask(net, x, mask));
  const Eigen::VectorXd p = logp.array().exp();
  return {-logp[static_cast<Eigen::Index>(label)], -(p.array() * logp.array()).sum()};
}

/// Loss NLL - beta * H and its gradient for one sample under a fixed mask.
/// dL/dz = (p - onehot(y)) + beta * p * (log p + H), back-propagated through mask and rectifier.
inline double sample_loss_and_gradients(const ToyNet& net, const Eigen::VectorXd& x,
                                        std::size_t label, const DropoutMask& mask, double beta,
                                        Gradients& grads) {
  detail::require_input(net, x);
  const double scale = 1.0 / (1.0 - net.dropout_p);
  const Eigen::VectorXd pre = net.w1 * x + net.b1;
  const Eigen::VectorXd hidden = pre.cwiseMax(0.0);
  const Eigen::VectorXd dropped = hidden.cwiseProduct(mask) * scale;
  const Eigen::VectorXd z = net.w2 * dropped + net.b2;

  const Eigen::VectorXd logp = detail::log_softmax(z);
  const Eigen::VectorXd p = logp.array().exp();
  const double entropy = -(p.array() * logp.array()).sum();
  const auto y = static_cast<Eigen::Index>(label);

  Eigen::VectorXd dz = p;
  dz[y] -= 1.0;
  if (beta != 0.0) dz += beta * (p.array() * (logp.array() + entropy)).matrix();

  grads.w2.noalias() += dz * dropped.transpose();
  grads.b2 += dz;
  const Eigen::VectorXd dhidden = (net.w2.transpose() * dz).cwiseProduct(mask) * scale;
  const Eigen::VectorXd dpre = (pre.array() > 0.0).select(dhidden, 0.0);
  grads.w1.noalias() += dpre * x.transpose();
  grads.b1 += dpre;
  return -logp[y] - beta * entropy;
}

struct TrainConfig {
  std::size_t epochs = 200;
  std::size_t batch_size = 16;
  double learning_rate = 0.1;
  double cp_beta = 0.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (epochs < 1) throw DomainError("train config: epochs must be >= 1");
    if (batch_size < 1) throw DomainError("train config: batch_size must be >= 1");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
      throw DomainError("train config: learning rate must be finite and non-negative");
    }
    if (!(cp_beta >= 0.0) || !std::isfinite(cp_beta)) {
      throw DomainError("train config: cp_beta must be finite and non-negative");
    }
  }
};

/// Minibatch SGD with dropout active. Bit-reproducible for a given (net, data, cfg).
/// A zero learning rate leaves the weights untouched.
inline ToyNet train(ToyNet net, const SyntheticDataset& data, const TrainConfig& cfg,
                    std::vector<double>* epoch_losses = nullptr) {
  cfg.validate();
  net.validate();
  if (data.size() == 0) throw DomainError("cannot train on an empty dataset");
  if (data.num_classes != net.num_classes()) throw InvalidInput("dataset and net disagree on class count");

  Rng rng(cfg.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Gradients grads = Gradients::zeros_like(net);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(start + cfg.batch_size, order.size());
      grads = Gradients::zeros_like(net);
      double batch_loss = 0.0;
      for (std::size_t k = start; k < stop; ++k) {
        const std::size_t i = order[k];
        const auto mask = draw_mask(net.hidden_dim(), net.dropout_p, rng);
        batch_loss += sample_loss_and_gradients(net, data.input(i), data.labels[i], mask, cfg.cp_beta, grads);
      }
      if (!std::isfinite(batch_loss)) throw TrainingDiverged(epoch, "non-finite minibatch loss");
      epoch_loss += batch_loss;
      if (cfg.learning_rate == 0.0) continue;
      const double step = cfg.learning_rate / static_cast<double>(stop - start);
      net.w1 -= step * grads.w1;
      net.b1 -= step * grads.b1;
      net.w2 -= step * grads.w2;
      net.b2 -= step * grads.b2;
    }
    if (!net.w1.allFinite() || !net.w2.allFinite() || !net.b1.allFinite() || !net.b2.allFinite()) {
      throw TrainingDiverged(epoch, "non-finite weights");
    }
    if (epoch_losses) epoch_losses->push_back(epoch_loss / static_cast<double>(data.size()));
  }
  return net;
}

// Deterministic-pass diagnostics over a dataset.

inline double mean_nll(const ToyNet& net, const SyntheticDataset& data) {
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    total -= detail::log_softmax(forward_deterministic(net, data.input(i)))[static_cast<Eigen::Index>(data.labels[i])];
  }
  return total / static_cast<double>(data.size());
}

inline double accuracy(const ToyNet& net, const SyntheticDataset& data) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    Eigen::Index pred = 0;
    forward_deterministic(net, data.input(i)).maxCoeff(&pred);
    if (static_cast<std::size_t>(pred) == data.labels[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

/// Mean entropy (nats) of the deterministic predictive distribution.
inline double mean_entropy(const ToyNet& net, const SyntheticDataset& data) {
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Eigen::VectorXd logp = detail::log_softmax(forward_deterministic(net, data.input(i)));
    total -= (logp.array().exp() * logp.array()).sum();
  }
  return total / static_cast<double>(data.size());
}

/// MC dropout logit samples for every point; point i uses stream derive_seed(seed, i).
inline std::vector<LogitSampleSet> mc_predict_dataset(const ToyNet& net, const SyntheticDataset& data,
                                                      std::size_t n_passes, std::uint64_t seed) {
  std::vector<LogitSampleSet> out;
  out.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    out.push_back(mc_predict(net, data.input(i), data.labels[i], n_passes, derive_seed(seed, i)));
  }
  return out;
}

}  // namespace mcdcal
