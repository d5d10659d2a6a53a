// Copyright 2026 The dcpeval Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <random>

#include "dcpeval/metrics.hpp"
#include "oracles.hpp"

namespace dcpeval {
namespace {

using V = std::vector<int>;
using D = std::vector<double>;

TEST(AccuracyF1, Examples) {
  auto r = accuracy_macro_f1(V{1, 0, 1, 0}, V{1, 0, 1, 0});
  EXPECT_DOUBLE_EQ(r.accuracy, 1.0);
  EXPECT_DOUBLE_EQ(r.macro_f1, 1.0);

  // TP 2, FP 1, FN 1, TN 2.
  r = accuracy_macro_f1(V{1, 1, 1, 0, 0, 0}, V{1, 1, 0, 1, 0, 0});
  EXPECT_DOUBLE_EQ(r.accuracy, 4.0 / 6.0);
  EXPECT_DOUBLE_EQ(r.macro_f1, 2.0 / 3.0);
  EXPECT_EQ(r.confusion[1][1], 2u);
  EXPECT_EQ(r.confusion[0][1], 1u);

  r = accuracy_macro_f1(V{1, 1, 1}, V{1, 1, 0});
  EXPECT_DOUBLE_EQ(r.accuracy, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(r.macro_f1, 0.4);
}

TEST(AccuracyF1, Errors) {
  EXPECT_THROW(accuracy_macro_f1(V{1}, V{1, 0}), Error);
  EXPECT_THROW(accuracy_macro_f1(V{}, V{}), Error);
  EXPECT_THROW(accuracy_macro_f1(V{2}, V{1}), Error);
}

TEST(AccuracyF1, ExhaustiveUpToLengthSix) {
  for (std::size_t n = 1; n <= 6; ++n) {
    for (unsigned lbits = 0; lbits < (1u << n); ++lbits) {
      for (unsigned pbits = 0; pbits < (1u << n); ++pbits) {
        V y(n), p(n);
        for (std::size_t i = 0; i < n; ++i) y[i] = (lbits >> i) & 1, p[i] = (pbits >> i) & 1;
        const auto want = oracle::accuracy_f1(p, y);
        const auto got = accuracy_macro_f1(p, y);
        ASSERT_EQ(got.accuracy, want.accuracy);
        ASSERT_EQ(got.macro_f1, want.macro_f1);
      }
    }
  }
}

TEST(Threshold, Examples) {
  const D s{0.1, 0.2, 0.9, 0.8};
  const double t = threshold_for_ratio(s, 0.5);
  EXPECT_EQ(apply_threshold(s, t), (V{0, 0, 1, 1}));
  EXPECT_LE(threshold_for_ratio(s, 1.0), 0.1);
  EXPECT_EQ(apply_threshold(s, threshold_for_ratio(s, 0.0)), (V{0, 0, 0, 0}));
  EXPECT_NEAR(100899.0 / 171034.0, 0.590, 5e-4);
}

TEST(Threshold, FromValidationRules) {
  const D s{0.1, 0.2, 0.9, 0.8};
  const V y{0, 1, 1, 0};
  EXPECT_DOUBLE_EQ(threshold_from_validation(s, y, ThresholdRule::cutoff), 0.5);
  EXPECT_EQ(apply_threshold(s, threshold_from_validation(s, y)), (V{0, 0, 1, 1}));
  EXPECT_THROW(threshold_from_validation(s, V{1}), Error);
  EXPECT_THROW(threshold_for_ratio(D{}, 0.5), Error);
  EXPECT_THROW(threshold_for_ratio(s, 1.5), Error);
}

TEST(Threshold, DistinctScoresWithinOneSample) {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + gen() % 300;
    D s(n);
    for (auto& x : s) x = u(gen);
    const double rho = u(gen);
    const auto pred = apply_threshold(s, threshold_for_ratio(s, rho));
    const double frac = static_cast<double>(std::count(pred.begin(), pred.end(), 1)) / static_cast<double>(n);
    EXPECT_LE(std::abs(frac - rho), 1.0 / static_cast<double>(n) + 1e-12);
  }
}

TEST(Threshold, TiesPickNearestAchievableCount) {
  std::mt19937_64 gen(8);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 1 + gen() % 12;
    D s(n);
    for (auto& x : s) x = static_cast<double>(gen() % 4) / 4.0;
    const double rho = static_cast<double>(gen() % 1001) / 1000.0;
    // Achievable counts are the numbers of scores >= each candidate value.
    D cands(s);
    cands.push_back(2.0);
    double best = 1e9;
    for (double c : cands) {
      const double k = static_cast<double>(std::count_if(s.begin(), s.end(), [&](double x) { return x >= c; }));
      best = std::min(best, std::abs(k - rho * static_cast<double>(n)));
    }
    const auto pred = apply_threshold(s, threshold_for_ratio(s, rho));
    const double got = static_cast<double>(std::count(pred.begin(), pred.end(), 1));
    EXPECT_NEAR(std::abs(got - rho * static_cast<double>(n)), best, 1e-9);
  }
}

TEST(Pearson, Examples) {
  EXPECT_NEAR(*pearson(D{1, 2, 3, 4}, D{3, 5, 7, 9}), 1.0, 1e-15);
  EXPECT_NEAR(*pearson(D{1, 2, 3}, D{-1, -2, -3}), -1.0, 1e-15);
  EXPECT_NEAR(*pearson(D{1, 2, 3}, D{1, 3, 2}), 0.5, 1e-15);
  EXPECT_FALSE(pearson(D{1, 1, 1}, D{1, 2, 3}).has_value());
  EXPECT_THROW(pearson(D{1, 2}, D{1, 2}), Error);
  EXPECT_THROW(pearson(D{1, 2, 3}, D{1, 2}), Error);
}

TEST(Pearson, SymmetricScaleInvariantMatchesTwoPass) {
  std::mt19937_64 gen(4);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 3 + gen() % 100;
    D x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = g(gen), y[i] = 0.3 * x[i] + g(gen);
    const double r = *pearson(x, y);
    EXPECT_NEAR(r, oracle::pearson(x, y), 1e-12);
    EXPECT_NEAR(r, *pearson(y, x), 1e-14);
    D xs(x);
    for (auto& v : xs) v = 4.0 * v - 7.0;
    EXPECT_NEAR(r, *pearson(xs, y), 1e-12);
  }
}

TEST(Correlate, SubsetsAndDegenerate) {
  const D a{1, 2, 3, 5};
  auto rep = correlate_with_scores(a, a, "human");
  EXPECT_NEAR(*rep.pearson_r, 1.0, 1e-15);
  EXPECT_EQ(rep.n_pairs, 4u);
  EXPECT_FALSE(correlate_with_scores(D{2, 2, 2, 2}, a, "system").pearson_r.has_value());
  EXPECT_THROW(correlate_with_scores(a, a, "robots"), Error);
}

std::vector<std::size_t> sizes(const std::vector<UserGroup>& gs) {
  std::vector<std::size_t> out;
  for (const auto& g : gs) out.push_back(g.users.size());
  return out;
}

TEST(Groups, Examples) {
  auto gs = group_by_training_mass({{"a", 1}, {"b", 1}, {"c", 1}}, {"a", "b", "c"});
  ASSERT_EQ(gs.size(), 3u);
  for (const auto& g : gs) EXPECT_EQ(g.users.size(), 1u);

  gs = group_by_training_mass({{"a", 1}, {"b", 2}, {"c", 3}, {"d", 6}}, {"d", "c", "b", "a"});
  EXPECT_EQ(gs[0].training_mass, 3u);
  EXPECT_EQ(gs[1].training_mass, 3u);
  EXPECT_EQ(gs[2].training_mass, 6u);
  EXPECT_EQ(gs[2].users, (std::vector<std::string>{"d"}));

  gs = group_by_training_mass({{"a", 1}, {"b", 1}, {"c", 1}, {"whale", 1000}}, {"a", "b", "c", "whale"});
  EXPECT_EQ(gs[2].users, (std::vector<std::string>{"whale"}));

  EXPECT_THROW(group_by_training_mass({}, {"a", "b"}), Error);
}

TEST(Groups, UnknownUsersCountZeroAndSortById) {
  const auto gs = group_by_training_mass({{"x", 5}}, {"q", "p", "x", "r"});
  EXPECT_EQ(gs[0].users.front(), "p");
  EXPECT_EQ(gs.back().users.back(), "x");
}

TEST(Groups, ExhaustiveOptimality) {
  std::mt19937_64 gen(12);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 3 + gen() % 30;
    std::map<std::string, std::size_t> counts;
    std::vector<std::string> users;
    for (std::size_t i = 0; i < n; ++i) {
      users.push_back("u" + std::to_string(i));
      counts[users.back()] = gen() % (trial % 2 ? 6 : 500);
    }
    const auto want = oracle::exhaustive_groups3(counts, users);
    const auto got = group_by_training_mass(counts, users);
    EXPECT_EQ(sizes(got), want.sizes);
    std::uint64_t total = 0;
    for (const auto& g : got) total += g.training_mass;
    double worst = 0.0;
    for (const auto& g : got) {
      worst = std::max(worst, std::abs(static_cast<double>(g.training_mass) - static_cast<double>(total) / 3.0));
    }
    EXPECT_NEAR(worst, want.best, 1e-9);
  }
}

}  // namespace
}  // namespace dcpeval
