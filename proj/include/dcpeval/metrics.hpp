// Copyright 2026 The dcpeval Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dcpeval/error.hpp"

namespace dcpeval {

struct EvalReport {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  // confusion[label][prediction]
  std::array<std::array<std::size_t, 2>, 2> confusion{};
  double threshold_used = std::numeric_limits<double>::quiet_NaN();
  std::size_t n_samples = 0;
};

/// Accuracy and the unweighted mean of the two per-class F1 scores. A class
/// with no true and no predicted members has F1 0.
inline EvalReport accuracy_macro_f1(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size()) {
    throw Error("accuracy_macro_f1: " + std::to_string(predictions.size()) + " predictions vs " +
                std::to_string(labels.size()) + " labels");
  }
  if (labels.empty()) throw Error("accuracy_macro_f1: empty input");
  EvalReport rep;
  rep.n_samples = labels.size();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i], p = predictions[i];
    if ((y != 0 && y != 1) || (p != 0 && p != 1)) throw Error("accuracy_macro_f1: values must be 0 or 1");
    ++rep.confusion[static_cast<std::size_t>(y)][static_cast<std::size_t>(p)];
  }
  const double correct = static_cast<double>(rep.confusion[0][0] + rep.confusion[1][1]);
  rep.accuracy = correct / static_cast<double>(rep.n_samples);
  double f1_sum = 0.0;
  for (std::size_t c = 0; c < 2; ++c) {
    const std::size_t tp = rep.confusion[c][c];
    const std::size_t fp = rep.confusion[1 - c][c];
    const std::size_t fn = rep.confusion[c][1 - c];
    const std::size_t denom = 2 * tp + fp + fn;
    f1_sum += denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
  }
  rep.macro_f1 = f1_sum / 2.0;
  return rep;
}

enum class ThresholdRule { quantile, cutoff };

/// Threshold t such that the share of `scores` with score >= t is as close to
/// `ratio` as the data allows (within one sample for distinct scores).
inline double threshold_for_ratio(std::span<const double> scores, double ratio) {
  if (scores.empty()) throw Error("threshold: empty validation scores");
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw Error("threshold: ratio must lie in [0, 1]");
  std::vector<double> s(scores.begin(), scores.end());
  std::sort(s.begin(), s.end(), std::greater<>());
  const std::size_t n = s.size();
  const auto k = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));
  if (k == 0) return std::nextafter(s.front(), std::numeric_limits<double>::infinity());
  if (k >= n) return s.back();
  const double hi = s[k - 1], lo = s[k];
  if (hi > lo) {
    const double mid = std::midpoint(lo, hi);
    return mid > lo ? mid : hi;
  }
  // Ties straddle the cut: include or exclude the tied block, whichever count
  // lands nearer ratio·n (the include side wins exact ties).
  std::size_t first = k - 1, last = k;
  while (first > 0 && s[first - 1] == hi) --first;
  while (last < n && s[last] == hi) ++last;
  const double target = ratio * static_cast<double>(n);
  if (static_cast<double>(last) - target <= target - static_cast<double>(first)) return hi;
  if (first == 0) return std::nextafter(hi, std::numeric_limits<double>::infinity());
  const double mid = std::midpoint(hi, s[first - 1]);
  return mid > hi ? mid : s[first - 1];
}

inline double positive_ratio(std::span<const int> labels) {
  if (labels.empty()) throw Error("threshold: empty validation labels");
  std::size_t pos = 0;
  for (int y : labels) pos += y == 1 ? 1 : 0;
  return static_cast<double>(pos) / static_cast<double>(labels.size());
}

/// Validation-ratio threshold. With ThresholdRule::cutoff the ratio itself is
/// returned and used as a probability cutoff.
inline double threshold_from_validation(std::span<const double> scores, std::span<const int> labels,
                                        ThresholdRule rule = ThresholdRule::quantile) {
  if (scores.size() != labels.size()) throw Error("threshold: scores and labels differ in length");
  const double rho = positive_ratio(labels);
  return rule == ThresholdRule::cutoff ? rho : threshold_for_ratio(scores, rho);
}

inline std::vector<int> apply_threshold(std::span<const double> scores, double threshold) {
  std::vector<int> out(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) out[i] = scores[i] >= threshold ? 1 : 0;
  return out;
}

/// Product-moment correlation, no value when either side has zero variance.
inline std::optional<double> pearson(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw Error("pearson: length mismatch");
  if (xs.size() < 3) throw Error("pearson: need at least 3 pairs");
  double mx = 0.0, my = 0.0, sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double n = static_cast<double>(i + 1);
    const double dx = xs[i] - mx;
    const double dy = ys[i] - my;
    mx += dx / n;
    my += dy / n;
    sxx += dx * (xs[i] - mx);
    syy += dy * (ys[i] - my);
    sxy += dx * (ys[i] - my);
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

struct CorrelationReport {
  std::optional<double> pearson_r;
  std::size_t n_pairs = 0;
  std::string subset;  // "human" or "system"
};

inline CorrelationReport correlate_with_scores(std::span<const double> evaluator, std::span<const double> reference,
                                               std::string subset) {
  if (subset != "human" && subset != "system") throw Error("correlate: subset must be human or system");
  return {pearson(evaluator, reference), evaluator.size(), std::move(subset)};
}

struct UserGroup {
  std::vector<std::string> users;
  std::uint64_t training_mass = 0;
};

namespace detail {

// |k·mass − total|, kept integral so ties compare exactly.
inline std::uint64_t mass_deviation(std::uint64_t mass, std::uint64_t total, std::size_t k) {
  const std::uint64_t scaled = mass * k;
  return scaled > total ? scaled - total : total - scaled;
}

}  // namespace detail

/// Splits `test_users`, sorted ascending by training count (ties by id), into
/// k non-empty contiguous groups minimising the largest deviation of a group's
/// training mass from total/k. Among optimal splits the one with the latest
/// cut points is returned. Users absent from `train_counts` count as 0.
inline std::vector<UserGroup> group_by_training_mass(const std::map<std::string, std::size_t>& train_counts,
                                                     std::vector<std::string> test_users, std::size_t k = 3) {
  std::sort(test_users.begin(), test_users.end());
  test_users.erase(std::unique(test_users.begin(), test_users.end()), test_users.end());
  const std::size_t n = test_users.size();
  if (k == 0 || n < k) {
    throw Error("group_by_training_mass: " + std::to_string(n) + " users cannot form " + std::to_string(k) + " groups");
  }
  auto count_of = [&](const std::string& u) -> std::uint64_t {
    auto it = train_counts.find(u);
    return it == train_counts.end() ? 0 : it->second;
  };
  std::stable_sort(test_users.begin(), test_users.end(),
                   [&](const std::string& a, const std::string& b) { return count_of(a) < count_of(b); });
  std::vector<std::uint64_t> prefix(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + count_of(test_users[i]);
  const std::uint64_t total = prefix[n];
  auto dev = [&](std::size_t a, std::size_t b) { return detail::mass_deviation(prefix[b] - prefix[a], total, k); };

  // best[j][i]: optimal max deviation for users[i..n) split into j groups.
  constexpr auto kInf = std::numeric_limits<std::uint64_t>::max();
  std::vector<std::vector<std::uint64_t>> best(k + 1, std::vector<std::uint64_t>(n + 1, kInf));
  best[0][n] = 0;
  for (std::size_t j = 1; j <= k; ++j) {
    for (std::size_t i = 0; i + j <= n; ++i) {
      std::uint64_t b = kInf;
      for (std::size_t c = i + 1; c + (j - 1) <= n; ++c) {
        if (best[j - 1][c] == kInf) continue;
        b = std::min(b, std::max(dev(i, c), best[j - 1][c]));
      }
      best[j][i] = b;
    }
  }
  const std::uint64_t opt = best[k][0];
  std::vector<UserGroup> groups;
  std::size_t start = 0;
  for (std::size_t j = k; j >= 1; --j) {
    std::size_t cut = n;
    if (j > 1) {
      for (std::size_t c = n - (j - 1); c > start; --c) {
        if (dev(start, c) <= opt && best[j - 1][c] <= opt) {
          cut = c;
          break;
        }
      }
    }
    UserGroup g;
    g.users.assign(test_users.begin() + static_cast<std::ptrdiff_t>(start),
                   test_users.begin() + static_cast<std::ptrdiff_t>(cut));
    g.training_mass = prefix[cut] - prefix[start];
    groups.push_back(std::move(g));
    start = cut;
  }
  return groups;
}

}  // namespace dcpeval
