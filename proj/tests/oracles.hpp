#pragma once

// Reference implementations used only by tests. Each one is written from the
// textbook definition and deliberately shares no code with the library.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace oracle {

using Grid = std::vector<std::vector<std::optional<int>>>;  // items x raters, labels 1..4

// Rank of x[i] = 1 + #{j : x[j] < x[i]} + (#{j : x[j] == x[i]} - 1) / 2.
inline std::vector<double> counting_ranks(const std::vector<double>& x) {
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    long less = 0, equal = 0;
    for (double v : x) {
      if (v < x[i]) ++less;
      if (v == x[i]) ++equal;
    }
    r[i] = 1.0 + static_cast<double>(less) + static_cast<double>(equal - 1) / 2.0;
  }
  return r;
}

inline std::optional<double> pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  long double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sx += x[i];
    sy += y[i];
  }
  const long double mx = sx / n, my = sy / n;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx == 0 || syy == 0) return std::nullopt;
  return static_cast<double>(sxy / std::sqrt(sxx * syy));
}

inline std::optional<double> spearman(const std::vector<double>& x, const std::vector<double>& y) {
  return pearson(counting_ranks(x), counting_ranks(y));
}

inline std::optional<double> fleiss(const Grid& g) {
  const double N = static_cast<double>(g.size());
  const double n = static_cast<double>(g.front().size());
  double p_bar = 0;
  std::map<int, double> column;
  for (const auto& row : g) {
    std::map<int, double> nij;
    for (const auto& v : row) nij[*v] += 1;
    double agree = 0;
    for (const auto& [label, c] : nij) {
      agree += c * (c - 1);
      column[label] += c;
    }
    p_bar += agree / (n * (n - 1));
  }
  p_bar /= N;
  double pe = 0;
  for (const auto& [label, c] : column) pe += (c / (N * n)) * (c / (N * n));
  if (pe == 1.0) return std::nullopt;
  return (p_bar - pe) / (1 - pe);
}

enum class Level { nominal, ordinal, interval };

// Krippendorff's alpha by enumerating every ordered pair of pairable values:
// D_o averages within-unit pairs (each unit weighted 1/(m_u - 1)), D_e all
// pairs of values regardless of unit.
inline std::optional<double> kripp(const Grid& g, Level level) {
  std::vector<std::vector<int>> units;
  for (const auto& row : g) {
    std::vector<int> u;
    for (const auto& v : row)
      if (v) u.push_back(*v);
    if (u.size() >= 2) units.push_back(u);
  }
  std::vector<int> values;
  for (const auto& u : units) values.insert(values.end(), u.begin(), u.end());
  const double n = static_cast<double>(values.size());
  if (n < 2) return std::nullopt;
  std::map<int, int> freq;
  for (int v : values) ++freq[v];
  const auto delta = [&](int c, int k) -> double {
    if (c == k) return 0;
    if (level == Level::nominal) return 1;
    if (level == Level::interval) return double(c - k) * double(c - k);
    const int lo = std::min(c, k), hi = std::max(c, k);
    double s = 0;
    for (int gcat = lo; gcat <= hi; ++gcat) s += freq[gcat];
    s -= (freq[c] + freq[k]) / 2.0;
    return s * s;
  };
  double d_o = 0;
  for (const auto& u : units) {
    double s = 0;
    for (std::size_t i = 0; i < u.size(); ++i)
      for (std::size_t j = 0; j < u.size(); ++j)
        if (i != j) s += delta(u[i], u[j]);
    d_o += s / static_cast<double>(u.size() - 1);
  }
  d_o /= n;
  double d_e = 0;
  for (std::size_t i = 0; i < values.size(); ++i)
    for (std::size_t j = 0; j < values.size(); ++j)
      if (i != j) d_e += delta(values[i], values[j]);
  d_e /= n * (n - 1);
  if (d_e == 0) return std::nullopt;
  return 1 - d_o / d_e;
}

// Mean over items of (#agreeing unordered rater pairs / #pairs).
inline std::optional<double> match_ratio(const Grid& g) {
  double total = 0;
  for (const auto& row : g) {
    std::vector<int> u;
    for (const auto& v : row)
      if (v) u.push_back(*v);
    if (u.size() < 2) return std::nullopt;
    int agree = 0, pairs = 0;
    for (std::size_t i = 0; i < u.size(); ++i)
      for (std::size_t j = i + 1; j < u.size(); ++j) {
        ++pairs;
        if (u[i] == u[j]) ++agree;
      }
    total += double(agree) / pairs;
  }
  return total / static_cast<double>(g.size());
}

// Global SSIM over two luma planes, accumulated in long double.
inline double global_ssim(const std::vector<double>& x, const std::vector<double>& y) {
  const long double c1 = 0.01L * 0.01L, c2 = 0.03L * 0.03L;
  const long double n = static_cast<long double>(x.size());
  long double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  long double vx = 0, vy = 0, cxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    vx += (x[i] - mx) * (x[i] - mx);
    vy += (y[i] - my) * (y[i] - my);
    cxy += (x[i] - mx) * (y[i] - my);
  }
  vx /= n;
  vy /= n;
  cxy /= n;
  return static_cast<double>(((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2)));
}

// Output frame j shows time j / dst; pick the source frame whose timestamp
// i / src is nearest, preferring the later frame on an exact tie.
inline std::vector<std::size_t> nearest_time_indices(std::size_t n, int src, int dst) {
  const std::size_t m = n * static_cast<std::size_t>(dst) / static_cast<std::size_t>(src);
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < m; ++j) {
    std::size_t best = 0;
    long long best_num = -1;  // |i*dst - j*src| scaled by src*dst, exact in integers
    for (std::size_t i = 0; i < n; ++i) {
      const long long d = std::llabs(static_cast<long long>(i) * dst - static_cast<long long>(j) * src);
      if (best_num < 0 || d <= best_num) {
        best = i;
        best_num = d;
      }
    }
    out.push_back(std::min(best, n - 1));
  }
  return out;
}

// Replays the seeded prompt sampler from first principles: 64-bit Mersenne
// Twister, draws in [0, bound) by rejecting the biased tail, Fisher-Yates
// over the first k positions.
inline std::vector<std::string> replay_sample(std::vector<std::string> items, std::size_t k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto draw = [&](std::uint64_t bound) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    for (;;) {
      const std::uint64_t v = rng();
      if (v < limit) return v % bound;
    }
  };
  for (std::size_t i = 0; i < k && i + 1 < items.size(); ++i) std::swap(items[i], items[i + draw(items.size() - i)]);
  items.resize(k);
  return items;
}

}  // namespace oracle
