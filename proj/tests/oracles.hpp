// Copyright 2026 The dcpeval Authors
// SPDX-License-Identifier: Apache-2.0

// Brute-force reference implementations used to check the library.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <string>
#include <vector>

namespace dcpeval::oracle {

struct Frac {
  std::int64_t num = 0;
  std::int64_t den = 1;
};

inline Frac reduce(std::int64_t num, std::int64_t den) {
  if (den == 0) return {0, 1};
  const std::int64_t g = std::gcd(num, den);
  return {num / g, den / g};
}

inline Frac mul(Frac a, Frac b) { return reduce(a.num * b.num, a.den * b.den); }
inline Frac add(Frac a, Frac b) { return reduce(a.num * b.den + b.num * a.den, a.den * b.den); }
inline Frac div(Frac a, Frac b) { return b.num == 0 ? Frac{0, 1} : reduce(a.num * b.den, a.den * b.num); }

struct AccF1 {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
};

/// Per-class precision and recall as exact fractions, F1 = 2PR/(P+R), 0 when
/// undefined.
inline AccF1 accuracy_f1(const std::vector<int>& pred, const std::vector<int>& labels) {
  std::int64_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) correct += pred[i] == labels[i] ? 1 : 0;
  double f1s[2];
  for (int c = 0; c < 2; ++c) {
    std::int64_t tp = 0, predicted = 0, actual = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      tp += (pred[i] == c && labels[i] == c) ? 1 : 0;
      predicted += pred[i] == c ? 1 : 0;
      actual += labels[i] == c ? 1 : 0;
    }
    const Frac p = predicted ? reduce(tp, predicted) : Frac{0, 1};
    const Frac r = actual ? reduce(tp, actual) : Frac{0, 1};
    const Frac f = div(mul({2, 1}, mul(p, r)), add(p, r));
    f1s[c] = static_cast<double>(f.num) / static_cast<double>(f.den);
  }
  return {static_cast<double>(correct) / static_cast<double>(labels.size()), (f1s[0] + f1s[1]) / 2.0};
}

/// Textbook two-pass Pearson correlation.
inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) mx += x[i], my += y[i];
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

struct GroupScan {
  std::vector<std::size_t> sizes;  // group sizes in sorted order
  double best = 0.0;               // minimax |mass − total/k|
};

/// Tries every pair of cut points over users sorted by (count, id). Among
/// optimal pairs the lexicographically latest is kept.
inline GroupScan exhaustive_groups3(const std::map<std::string, std::size_t>& counts, std::vector<std::string> users) {
  std::sort(users.begin(), users.end());
  users.erase(std::unique(users.begin(), users.end()), users.end());
  auto cnt = [&](const std::string& u) {
    auto it = counts.find(u);
    return it == counts.end() ? std::size_t{0} : it->second;
  };
  std::stable_sort(users.begin(), users.end(), [&](const auto& a, const auto& b) { return cnt(a) < cnt(b); });
  const std::size_t n = users.size();
  double total = 0.0;
  for (const auto& u : users) total += static_cast<double>(cnt(u));
  GroupScan out{{}, 1e300};
  for (std::size_t c1 = 1; c1 + 2 <= n; ++c1) {
    for (std::size_t c2 = c1 + 1; c2 + 1 <= n; ++c2) {
      double m[3] = {0, 0, 0};
      for (std::size_t i = 0; i < n; ++i) m[i < c1 ? 0 : (i < c2 ? 1 : 2)] += static_cast<double>(cnt(users[i]));
      double worst = 0.0;
      for (double v : m) worst = std::max(worst, std::abs(v - total / 3.0));
      // Masses are integers, so deviations differing by less than 1/6 are equal.
      if (worst < out.best - 1e-9 || std::abs(worst - out.best) <= 1e-9) {
        out.best = worst;
        out.sizes = {c1, c2 - c1, n - c2};
      }
    }
  }
  return out;
}

}  // namespace dcpeval::oracle
