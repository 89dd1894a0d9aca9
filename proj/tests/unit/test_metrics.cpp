#include <gtest/gtest.h>

#include <cmath>

#include "condense/metrics.hpp"
#include "condense/rng.hpp"
#include "support/oracles.hpp"

using namespace condense;

namespace {

double auc(const std::vector<double>& s, const std::vector<int>& y) {
  return auroc(std::span<const double>(s), std::span<const int>(y));
}

}  // namespace

TEST(Auroc, AnalyticCases) {
  EXPECT_EQ(auc({0.1, 0.2, 0.8, 0.9}, {0, 0, 1, 1}), 1.0);
  EXPECT_EQ(auc({0.9, 0.8, 0.2, 0.1}, {0, 0, 1, 1}), 0.0);
  EXPECT_EQ(auc({0.5, 0.5, 0.5, 0.5}, {0, 1, 0, 1}), 0.5);
  EXPECT_EQ(auc({0.9, 0.8, 0.3, 0.2}, {1, 0, 1, 0}), 0.75);
}

TEST(Auroc, SingleClassIsUndefined) {
  EXPECT_THROW(auc({0.1, 0.2}, {1, 1}), DataError);
  EXPECT_THROW(auc({0.1, 0.2}, {0, 0}), DataError);
  EXPECT_THROW(auc({0.1, 0.2}, {0, 2}), DataError);
  EXPECT_THROW(auc({0.1}, {0, 1}), DataError);
}

TEST(Auroc, AgreesWithAllPairsOracle) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.below(199);
    std::vector<double> s(n);
    std::vector<int> y(n);
    const bool coarse = trial % 3 == 0;  // many ties
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = coarse ? static_cast<double>(rng.below(5)) : rng.uniform();
      y[i] = rng.bernoulli(0.3) ? 1 : 0;
    }
    y[0] = 0;
    y[1] = 1;
    EXPECT_NEAR(auc(s, y), oracle::auroc_all_pairs(s, y), 1e-12);
  }
}

TEST(Auroc, InvariantUnderMonotoneTransforms) {
  Rng rng(5);
  std::vector<double> s(150);
  std::vector<int> y(150);
  for (std::size_t i = 0; i < s.size(); ++i) {
    s[i] = rng.normal();
    y[i] = static_cast<int>(i % 3 == 0);
  }
  std::vector<double> e(s.size()), a(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    e[i] = std::exp(s[i]);
    a[i] = 3.0 * s[i] - 7.0;
  }
  EXPECT_EQ(auc(s, y), auc(e, y));
  EXPECT_EQ(auc(s, y), auc(a, y));
}

TEST(Auroc, ComplementaryLabelsSumToOne) {
  Rng rng(6);
  std::vector<double> s(80);
  std::vector<int> y(80), flipped(80);
  for (std::size_t i = 0; i < s.size(); ++i) {
    s[i] = rng.uniform();
    y[i] = static_cast<int>(rng.bernoulli(0.4));
    flipped[i] = 1 - y[i];
  }
  y[0] = 1;
  flipped[0] = 0;
  y[1] = 0;
  flipped[1] = 1;
  EXPECT_NEAR(auc(s, y) + auc(s, flipped), 1.0, 1e-12);
}
