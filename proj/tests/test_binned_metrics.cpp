#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <vector>

#include "mcdcal/binned_metrics.hpp"
#include "mcdcal/reference.hpp"

using namespace mcdcal;

namespace {

PredictionRecord rec(double conf, double unc, bool correct) {
  return {conf, unc, 0, correct ? 0u : 1u};
}

// Four records from the hand-worked UCE example: bin 0 holds uncertainties
// {0.2, 0.4} with one error, bin 1 holds {0.6, 0.8} with two errors.
std::vector<PredictionRecord> four_records() {
  return {rec(0.9, 0.2, true), rec(0.8, 0.4, false), rec(0.6, 0.6, false), rec(0.5, 0.8, false)};
}

std::vector<PredictionRecord> random_records(std::mt19937_64& rng, std::size_t n, std::size_t m) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<PredictionRecord> out(n);
  for (auto& r : out) {
    const auto draw = [&] {
      return rng() % 4 == 0 ? static_cast<double>(rng() % (m + 1)) / static_cast<double>(m) : u(rng);
    };
    r.confidence = draw();
    r.uncertainty = draw();
    r.predicted = rng() % 4;
    r.label = rng() % 4;
  }
  return out;
}

}  // namespace

TEST(AssignBins, Boundaries) {
  const std::vector<double> zero = {0.0};
  const std::vector<double> one = {1.0};
  EXPECT_EQ(assign_bins(zero, 15), std::vector<std::size_t>{0});
  EXPECT_EQ(assign_bins(one, 15), std::vector<std::size_t>{14});
}

TEST(AssignBins, TwoHalves) {
  const std::vector<double> v = {0.2, 0.4, 0.6, 0.8};
  EXPECT_EQ(assign_bins(v, 2), (std::vector<std::size_t>{0, 0, 1, 1}));
}

TEST(AssignBins, EdgesBelongToLowerBin) {
  for (std::size_t m : {2u, 3u, 7u, 10u, 15u, 50u}) {
    for (std::size_t k = 1; k < m; ++k) {
      const double edge = bin_edge(k, m);
      EXPECT_EQ(bin_index(edge, m), k - 1) << "m=" << m << " k=" << k;
      EXPECT_EQ(bin_index(std::nextafter(edge, 2.0), m), k) << "m=" << m << " k=" << k;
    }
  }
}

TEST(AssignBins, AgreesWithEdgeMembershipScan) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 20000; ++i) {
    const std::size_t m = 1 + rng() % 60;
    const double v = rng() % 3 == 0 ? bin_edge(rng() % (m + 1), m) : u(rng);
    const auto k = bin_index(v, m);
    EXPECT_TRUE(reference::in_bin(v, k, m)) << v << " m=" << m;
  }
}

TEST(AssignBins, RejectsOutOfRange) {
  const std::vector<double> below = {-1e-12};
  const std::vector<double> above = {1.0 + 1e-12};
  EXPECT_THROW(assign_bins(below, 15), InvalidInput);
  EXPECT_THROW(assign_bins(above, 15), InvalidInput);
  EXPECT_THROW(bin_index(0.5, 0), DomainError);
}

TEST(Ece, SingleBinHandComputation) {
  const std::vector<PredictionRecord> r = {rec(0.7, 0.5, true), rec(0.9, 0.1, true)};
  EXPECT_NEAR(ece(r, 1), 0.2, 1e-15);
}

TEST(Ece, PerfectCalibrationIsZero) {
  // Each bin's confidence equals its accuracy: 0.75 with 3/4 correct, 0.5 with 1/2 correct.
  const std::vector<PredictionRecord> r = {rec(0.75, 0.1, true), rec(0.75, 0.1, true), rec(0.75, 0.1, true),
                                           rec(0.75, 0.1, false), rec(0.5, 0.9, true), rec(0.5, 0.9, false)};
  EXPECT_EQ(ece(r, 15), 0.0);
}

TEST(Ece, MatchesNaiveOracleExactly) {
  std::mt19937_64 rng(2024);
  const std::size_t ms[] = {1, 2, 15, 50};
  for (int i = 0; i < 1000; ++i) {
    const std::size_t m = ms[i % 4];
    const auto r = random_records(rng, 1 + rng() % 500, m);
    EXPECT_EQ(ece(r, m), reference::ece(r, m));
  }
}

TEST(Uce, HandEvaluatedFourRecords) {
  EXPECT_NEAR(uce(four_records(), 2), 0.25, 1e-12);
}

TEST(Uce, ZeroUncertaintyAllCorrectIsZero) {
  const std::vector<PredictionRecord> r(10, rec(1.0, 0.0, true));
  EXPECT_EQ(uce(r, 15), 0.0);
}

TEST(Uce, MatchesNaiveOracleExactly) {
  std::mt19937_64 rng(4048);
  const std::size_t ms[] = {1, 2, 15, 50};
  for (int i = 0; i < 1000; ++i) {
    const std::size_t m = ms[i % 4];
    const auto r = random_records(rng, 1 + rng() % 500, m);
    EXPECT_EQ(uce(r, m), reference::uce(r, m));
  }
}

TEST(Metrics, EmptyRecordsAreDomainErrors) {
  const std::vector<PredictionRecord> none;
  EXPECT_THROW(ece(none, 15), DomainError);
  EXPECT_THROW(uce(none, 15), DomainError);
  EXPECT_THROW(reliability_table(none, 15, Axis::Confidence), DomainError);
}

TEST(Metrics, PermutationInvariantAndBounded) {
  std::mt19937_64 rng(9);
  for (int i = 0; i < 200; ++i) {
    auto r = random_records(rng, 1 + rng() % 300, 15);
    const double e = ece(r, 15);
    const double u = uce(r, 15);
    std::shuffle(r.begin(), r.end(), rng);
    EXPECT_NEAR(ece(r, 15), e, 1e-12);
    EXPECT_NEAR(uce(r, 15), u, 1e-12);
    EXPECT_GE(e, 0.0);
    EXPECT_LE(e, 1.0);
    EXPECT_GE(u, 0.0);
    EXPECT_LE(u, 1.0);
  }
}

TEST(Metrics, MergingBinsObeysTriangleInequality) {
  // With M = 2k, pairs of adjacent bins merge into the bins of M = k.
  std::mt19937_64 rng(77);
  for (int i = 0; i < 300; ++i) {
    const std::size_t k = 1 + rng() % 10;
    const auto r = random_records(rng, 1 + rng() % 300, 2 * k);
    for (auto axis : {Axis::Confidence, Axis::Uncertainty}) {
      const auto fine = reliability_table(r, 2 * k, axis);
      const auto coarse = reliability_table(r, k, axis);
      for (std::size_t j = 0; j < k; ++j) {
        const auto& a = fine.bins[2 * j];
        const auto& b = fine.bins[2 * j + 1];
        const auto& merged = coarse.bins[j];
        ASSERT_EQ(merged.count, a.count + b.count);
        const double lhs = merged.gap(axis) * static_cast<double>(merged.count);
        const double rhs = a.gap(axis) * static_cast<double>(a.count) + b.gap(axis) * static_cast<double>(b.count);
        EXPECT_LE(lhs, rhs + 1e-9);
      }
    }
  }
}

TEST(ReliabilityTable, AllInOneBin) {
  const std::vector<PredictionRecord> r(7, rec(0.95, 0.05, true));
  const auto t = reliability_table(r, 15, Axis::Confidence);
  ASSERT_EQ(t.bins.size(), 15u);
  for (std::size_t k = 0; k < 15; ++k) {
    EXPECT_EQ(t.bins[k].count, k == 14 ? 7u : 0u);
    EXPECT_EQ(t.bins[k].accuracy.has_value(), k == 14);
  }
  EXPECT_EQ(t.total_n, 7u);
}

TEST(ReliabilityTable, FourRecordUncertaintyBins) {
  const auto t = reliability_table(four_records(), 2, Axis::Uncertainty);
  ASSERT_EQ(t.bins.size(), 2u);
  EXPECT_NEAR(*t.bins[0].error_rate, 0.5, 1e-15);
  EXPECT_NEAR(*t.bins[0].mean_uncertainty, 0.3, 1e-15);
  EXPECT_NEAR(*t.bins[1].error_rate, 1.0, 1e-15);
  EXPECT_NEAR(*t.bins[1].mean_uncertainty, 0.7, 1e-15);
  EXPECT_EQ(t.uce, uce(four_records(), 2));
}

TEST(ReliabilityTable, GapsResumToFieldsExactly) {
  std::mt19937_64 rng(31);
  for (int i = 0; i < 200; ++i) {
    const std::size_t m = 1 + rng() % 30;
    const auto r = random_records(rng, 1 + rng() % 400, m);
    const auto conf = reliability_table(r, m, Axis::Confidence);
    const auto unc = reliability_table(r, m, Axis::Uncertainty);
    EXPECT_EQ(resum_gaps(conf), conf.ece);
    EXPECT_EQ(resum_gaps(unc), unc.uce);
    EXPECT_EQ(conf.ece, ece(r, m));
    EXPECT_EQ(conf.uce, uce(r, m));
    EXPECT_EQ(unc.ece, conf.ece);
    std::size_t total = 0;
    for (const auto& b : conf.bins) {
      total += b.count;
      for (const auto& v : {b.mean_confidence, b.accuracy, b.mean_uncertainty, b.error_rate}) {
        if (v) {
          EXPECT_GE(*v, 0.0);
          EXPECT_LE(*v, 1.0);
        }
      }
    }
    EXPECT_EQ(total, r.size());
  }
}

TEST(Records, FromProbabilities) {
  const auto r = make_record(ProbVector{0.5, 0.25, 0.25}, 1);
  EXPECT_EQ(r.predicted, 0u);
  EXPECT_DOUBLE_EQ(r.confidence, 0.5);
  EXPECT_NEAR(r.uncertainty, 0.9464, 1e-4);
  EXPECT_FALSE(r.correct());
}
