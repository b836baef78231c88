#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <set>
#include <vector>

#include "mcdcal/toy_model.hpp"

using namespace mcdcal;

namespace {

Eigen::VectorXd point(double a, double b) {
  Eigen::VectorXd x(2);
  x << a, b;
  return x;
}

// Central-difference gradient of f with respect to every entry of `param`.
Eigen::MatrixXd numeric_gradient(Eigen::MatrixXd& param, const std::function<double()>& f, double h) {
  Eigen::MatrixXd g(param.rows(), param.cols());
  for (Eigen::Index i = 0; i < param.size(); ++i) {
    const double saved = param.data()[i];
    param.data()[i] = saved + h;
    const double up = f();
    param.data()[i] = saved - h;
    const double down = f();
    param.data()[i] = saved;
    g.data()[i] = (up - down) / (2.0 * h);
  }
  return g;
}

double relative_error(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const double scale = std::max(a.norm(), b.norm());
  return scale == 0.0 ? 0.0 : (a - b).norm() / scale;
}

}  // namespace

TEST(ForwardStochastic, NoDropoutIsDeterministic) {
  const auto net = ToyNet::init(2, 16, 3, 0.0, 1);
  Rng a(1);
  Rng b(999);
  const auto x = point(0.4, -1.2);
  EXPECT_EQ(forward_stochastic(net, x, a), forward_stochastic(net, x, b));
}

TEST(ForwardStochastic, AllKeptMaskDoublesHiddenUnits) {
  const auto net = ToyNet::init(2, 16, 3, 0.5, 2);
  const auto x = point(0.3, 0.9);
  const Eigen::VectorXd kept = forward_with_mask(net, x, DropoutMask::Ones(16));
  const Eigen::VectorXd hidden = (net.w1 * x + net.b1).cwiseMax(0.0);
  const Eigen::VectorXd expected = net.w2 * (2.0 * hidden) + net.b2;
  EXPECT_LT((kept - expected).norm(), 1e-12);
}

TEST(ForwardStochastic, MeanOverMasksMatchesDeterministicPass) {
  const auto net = ToyNet::init(2, 32, 3, 0.5, 3);
  const auto x = point(-0.5, 0.25);
  const auto det = forward_deterministic(net, x);
  Rng rng(17);
  const int n = 10000;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(3);
  Eigen::VectorXd sq = Eigen::VectorXd::Zero(3);
  for (int i = 0; i < n; ++i) {
    const auto z = forward_stochastic(net, x, rng);
    for (int c = 0; c < 3; ++c) {
      sum[c] += z[c];
      sq[c] += z[c] * z[c];
    }
  }
  for (int c = 0; c < 3; ++c) {
    const double mean = sum[c] / n;
    const double var = sq[c] / n - mean * mean;
    const double se = std::sqrt(var / n);
    EXPECT_LT(std::abs(mean - det[c]), 3.0 * se) << "class " << c;
  }
}

TEST(ForwardStochastic, RejectsWrongInputDimension) {
  const auto net = ToyNet::init(2, 8, 3, 0.5, 1);
  Rng rng(0);
  EXPECT_THROW(forward_stochastic(net, Eigen::VectorXd::Zero(3), rng), InvalidInput);
}

TEST(McPredict, SinglePassAndDeterminism) {
  const auto net = ToyNet::init(2, 32, 3, 0.5, 4);
  const auto x = point(1.0, 0.0);
  const auto one = mc_predict(net, x, 2, 1, 42);
  EXPECT_EQ(one.num_samples(), 1u);
  EXPECT_EQ(mc_predict(net, x, 2, 25, 42), mc_predict(net, x, 2, 25, 42));
  EXPECT_NE(mc_predict(net, x, 2, 25, 42), mc_predict(net, x, 2, 25, 43));
}

TEST(McPredict, PassesAreDistinct) {
  const auto net = ToyNet::init(2, 8, 3, 0.5, 5);
  // Input chosen so every hidden unit is active; distinct masks then give distinct logits.
  Eigen::VectorXd x = point(0.0, 0.0);
  ToyNet active = net;
  active.b1 = Eigen::VectorXd::Constant(8, 1.0);
  const auto s = mc_predict(active, x, 0, 25, 7);
  std::set<std::vector<double>> seen;
  for (std::size_t i = 0; i < s.num_samples(); ++i) seen.emplace(s.sample(i).begin(), s.sample(i).end());
  // 25 draws from 2^8 equally likely masks: at least 20 distinct with overwhelming probability.
  EXPECT_GE(seen.size(), 20u);

  const auto wide = ToyNet::init(2, 32, 3, 0.5, 6);
  const auto s32 = mc_predict(wide, point(0.8, -0.3), 0, 25, 9);
  seen.clear();
  for (std::size_t i = 0; i < s32.num_samples(); ++i) seen.emplace(s32.sample(i).begin(), s32.sample(i).end());
  EXPECT_EQ(seen.size(), 25u);
}

TEST(McPredict, NoDropoutCollapsesToDeterministicSoftmax) {
  const auto net = ToyNet::init(2, 16, 4, 0.0, 8);
  const auto x = point(0.2, 0.7);
  const auto s = mc_predict(net, x, 1, 9, 3);
  for (std::size_t i = 1; i < s.num_samples(); ++i) {
    EXPECT_TRUE(std::equal(s.sample(i).begin(), s.sample(i).end(), s.sample(0).begin()));
  }
  const Eigen::VectorXd det = forward_deterministic(net, x);
  const auto p = mc_integrate(s, 1.0);
  const auto q = softmax(std::span<const double>(det.data(), 4), 1.0);
  for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(p[c], q[c], 1e-15);
}

TEST(Blobs, BalancedAndReproducible) {
  const auto a = make_blobs({1000, 5, 2, 0.3, 11});
  const auto b = make_blobs({1000, 5, 2, 0.3, 11});
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_EQ(a.inputs, b.inputs);
  std::vector<std::size_t> counts(5, 0);
  for (auto y : a.labels) ++counts[y];
  for (auto c : counts) {
    EXPECT_GE(c, 180u);
    EXPECT_LE(c, 220u);
  }
  EXPECT_THROW(make_blobs({0, 3, 2, 0.3, 0}), DomainError);
}

TEST(Gradients, MatchFiniteDifferences) {
  std::mt19937_64 rng(123);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    auto net = ToyNet::init(2, 12, 3, 0.5, 1000 + trial);
    net.b1 = Eigen::VectorXd::NullaryExpr(12, [&] { return 0.3 * g(rng); });
    net.b2 = Eigen::VectorXd::NullaryExpr(3, [&] { return 0.3 * g(rng); });
    std::vector<Eigen::VectorXd> xs;
    std::vector<std::size_t> ys;
    std::vector<DropoutMask> masks;
    Rng mask_rng(trial);
    for (int k = 0; k < 4; ++k) {
      xs.push_back(point(g(rng), g(rng)));
      ys.push_back(rng() % 3);
      masks.push_back(draw_mask(12, 0.5, mask_rng));
    }
    for (double beta : {0.0, 0.1, 1.0}) {
      auto analytic = Gradients::zeros_like(net);
      for (int k = 0; k < 4; ++k) sample_loss_and_gradients(net, xs[k], ys[k], masks[k], beta, analytic);
      const auto loss = [&] {
        double total = 0.0;
        for (int k = 0; k < 4; ++k) total += sample_loss(net, xs[k], ys[k], masks[k]).total(beta);
        return total;
      };
      const double h = 1e-6;
      Eigen::MatrixXd b1 = net.b1;
      Eigen::MatrixXd b2 = net.b2;
      EXPECT_LT(relative_error(analytic.w1, numeric_gradient(net.w1, loss, h)), 1e-4) << "w1 beta=" << beta;
      EXPECT_LT(relative_error(analytic.w2, numeric_gradient(net.w2, loss, h)), 1e-4) << "w2 beta=" << beta;
      const auto loss_b1 = [&] {
        net.b1 = b1;
        return loss();
      };
      EXPECT_LT(relative_error(analytic.b1, numeric_gradient(b1, loss_b1, h)), 1e-4) << "b1 beta=" << beta;
      net.b1 = b1;
      const auto loss_b2 = [&] {
        net.b2 = b2;
        return loss();
      };
      EXPECT_LT(relative_error(analytic.b2, numeric_gradient(b2, loss_b2, h)), 1e-4) << "b2 beta=" << beta;
      net.b2 = b2;
    }
  }
}

TEST(Train, SeparableBlobsReachHighAccuracy) {
  const auto data = make_blobs({200, 2, 2, 0.15, 5});
  auto net = ToyNet::init(2, 32, 2, 0.5, 6);
  net = train(net, data, {.epochs = 50, .batch_size = 16, .learning_rate = 0.05, .cp_beta = 0.0, .seed = 7});
  EXPECT_GE(accuracy(net, data), 0.98);
}

TEST(Train, ConfidencePenaltyRaisesEntropy) {
  const auto data = make_blobs({200, 3, 2, 0.5, 15});
  const auto init = ToyNet::init(2, 32, 3, 0.5, 16);
  TrainConfig cfg{.epochs = 100, .batch_size = 16, .learning_rate = 0.05, .cp_beta = 0.0, .seed = 17};
  const auto plain = train(init, data, cfg);
  cfg.cp_beta = 0.1;
  const auto penalized = train(init, data, cfg);
  EXPECT_GT(mean_entropy(penalized, data), mean_entropy(plain, data));
}

TEST(Train, ReducesTrainingNll) {
  const auto data = make_blobs({200, 3, 2, 0.5, 25});
  const auto init = ToyNet::init(2, 32, 3, 0.5, 26);
  std::vector<double> history;
  const auto trained = train(init, data, TrainConfig{}, &history);
  EXPECT_LT(mean_nll(trained, data), mean_nll(init, data));
  EXPECT_EQ(history.size(), TrainConfig{}.epochs);
}

TEST(Train, ZeroLearningRateLeavesWeightsUntouched) {
  const auto data = make_blobs({50, 3, 2, 0.5, 1});
  const auto init = ToyNet::init(2, 8, 3, 0.5, 2);
  const auto out = train(init, data, {.epochs = 3, .batch_size = 8, .learning_rate = 0.0, .cp_beta = 0.1, .seed = 3});
  EXPECT_TRUE(out == init);
}

TEST(Train, BitReproducible) {
  const auto data = make_blobs({120, 3, 2, 0.5, 4});
  const auto init = ToyNet::init(2, 16, 3, 0.5, 5);
  const TrainConfig cfg{.epochs = 20, .batch_size = 10, .learning_rate = 0.1, .cp_beta = 0.1, .seed = 6};
  EXPECT_TRUE(train(init, data, cfg) == train(init, data, cfg));
}

TEST(Train, DivergenceReportsEpoch) {
  const auto data = make_blobs({50, 3, 2, 0.5, 1});
  const auto init = ToyNet::init(2, 8, 3, 0.5, 2);
  try {
    train(init, data, {.epochs = 50, .batch_size = 8, .learning_rate = 1e300, .cp_beta = 0.0, .seed = 3});
    FAIL() << "expected divergence";
  } catch (const TrainingDiverged& e) {
    EXPECT_LT(e.epoch(), 50u);
  }
}

TEST(Train, RejectsBadConfig) {
  const auto data = make_blobs({10, 3, 2, 0.5, 1});
  const auto init = ToyNet::init(2, 8, 3, 0.5, 2);
  EXPECT_THROW(train(init, data, {.epochs = 0}), DomainError);
  EXPECT_THROW(train(init, data, {.epochs = 1, .batch_size = 4, .learning_rate = -1.0}), DomainError);
  EXPECT_THROW(train(ToyNet::init(2, 8, 4, 0.5, 2), data, TrainConfig{}), InvalidInput);
}
