#include "videoeval/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "videoeval/util.hpp"

namespace videoeval::stats {

namespace {

constexpr int kCategories = 4;

struct Moments {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t count = 0;
};

Moments summarize(const std::vector<double>& samples) {
  Moments m;
  m.count = samples.size();
  if (samples.empty()) return m;
  m.mean = std::accumulate(samples.begin(), samples.end(), 0.0) / static_cast<double>(samples.size());
  if (samples.size() > 1) {
    double ss = 0.0;
    for (double s : samples) ss += (s - m.mean) * (s - m.mean);
    const double sd = std::sqrt(ss / static_cast<double>(samples.size() - 1));
    m.std_error = sd / std::sqrt(static_cast<double>(samples.size()));
  }
  return m;
}

}  // namespace

LabelMatrix::LabelMatrix(std::size_t items, std::size_t raters)
    : items_(items), raters_(raters), cells_(items * raters) {
  if (items < 1 || raters < 2)
    throw Error(ErrorCode::InvalidArgument, "label matrix needs at least 1 item and 2 raters");
}

LabelMatrix LabelMatrix::from_rows(const std::vector<std::vector<std::optional<int>>>& rows) {
  if (rows.empty()) throw Error(ErrorCode::InvalidArgument, "label matrix needs at least 1 item");
  LabelMatrix m(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != m.raters()) throw Error(ErrorCode::InvalidArgument, "ragged label matrix");
    for (std::size_t r = 0; r < rows[i].size(); ++r) m.set(i, r, rows[i][r]);
  }
  return m;
}

void LabelMatrix::set(std::size_t item, std::size_t rater, std::optional<int> label) {
  if (item >= items_ || rater >= raters_) throw Error(ErrorCode::InvalidArgument, "label matrix index out of range");
  if (label && !RatingLabel::is_valid(*label))
    throw Error(ErrorCode::InvalidArgument, "label " + std::to_string(*label) + " outside 1..4");
  cells_[item * raters_ + rater] = label;
}

std::vector<int> LabelMatrix::item_labels(std::size_t item) const {
  std::vector<int> out;
  for (std::size_t r = 0; r < raters_; ++r)
    if (auto v = at(item, r)) out.push_back(*v);
  return out;
}

bool LabelMatrix::complete() const {
  return std::ranges::all_of(cells_, [](const auto& c) { return c.has_value(); });
}

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::ranges::stable_sort(order, [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    // Positions i..j (0-based) share rank mean((i+1)..(j+1)).
    const double rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

Statistic pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error(ErrorCode::InvalidArgument, "correlation inputs differ in length");
  if (x.size() < 2) throw Error(ErrorCode::InvalidArgument, "correlation needs at least 2 observations");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

Statistic spearman_rho(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error(ErrorCode::InvalidArgument, "correlation inputs differ in length");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const Statistic rho = pearson(rx, ry);
  // Identical or mirrored rankings are exactly +1 / -1; the Pearson route can
  // land one ulp short of that.
  if (rho && rx == ry) return 1.0;
  if (rho) {
    const double mirror = static_cast<double>(rx.size()) + 1.0;
    if (std::ranges::equal(rx, ry, [&](double a, double b) { return a == mirror - b; })) return -1.0;
  }
  return rho;
}

Statistic fleiss_kappa(const LabelMatrix& m) {
  if (!m.complete()) throw Error(ErrorCode::InvalidArgument, "Fleiss' kappa needs a complete label matrix");
  const auto n = static_cast<double>(m.raters());
  std::array<double, kCategories> totals{};
  double p_bar = 0.0;
  for (std::size_t i = 0; i < m.items(); ++i) {
    std::array<double, kCategories> counts{};
    for (int label : m.item_labels(i)) counts[static_cast<std::size_t>(label - 1)] += 1.0;
    double sum_sq = 0.0;
    for (std::size_t c = 0; c < counts.size(); ++c) {
      sum_sq += counts[c] * counts[c];
      totals[c] += counts[c];
    }
    p_bar += (sum_sq - n) / (n * (n - 1.0));
  }
  const auto items = static_cast<double>(m.items());
  p_bar /= items;
  double p_e = 0.0;
  for (double t : totals) {
    const double p = t / (items * n);
    p_e += p * p;
  }
  if (p_e == 1.0) return std::nullopt;
  return (p_bar - p_e) / (1.0 - p_e);
}

Statistic kripp_alpha(const LabelMatrix& m, AlphaLevel level) {
  // Coincidence matrix over categories 1..4.
  std::array<std::array<double, kCategories>, kCategories> o{};
  for (std::size_t i = 0; i < m.items(); ++i) {
    const auto labels = m.item_labels(i);
    if (labels.size() < 2) continue;
    const double weight = 1.0 / static_cast<double>(labels.size() - 1);
    for (std::size_t a = 0; a < labels.size(); ++a)
      for (std::size_t b = 0; b < labels.size(); ++b)
        if (a != b) o[static_cast<std::size_t>(labels[a] - 1)][static_cast<std::size_t>(labels[b] - 1)] += weight;
  }
  std::array<double, kCategories> marg{};
  double n = 0.0;
  for (std::size_t c = 0; c < kCategories; ++c) {
    marg[c] = std::accumulate(o[c].begin(), o[c].end(), 0.0);
    n += marg[c];
  }
  if (n < 2.0) return std::nullopt;

  const auto delta2 = [&](std::size_t c, std::size_t k) -> double {
    if (c == k) return 0.0;
    switch (level) {
      case AlphaLevel::nominal:
        return 1.0;
      case AlphaLevel::interval: {
        const double d = static_cast<double>(c) - static_cast<double>(k);
        return d * d;
      }
      case AlphaLevel::ordinal: {
        const std::size_t lo = std::min(c, k);
        const std::size_t hi = std::max(c, k);
        double s = 0.0;
        for (std::size_t g = lo; g <= hi; ++g) s += marg[g];
        s -= (marg[c] + marg[k]) / 2.0;
        return s * s;
      }
    }
    return 0.0;
  };

  double observed = 0.0;
  double expected = 0.0;
  for (std::size_t c = 0; c < kCategories; ++c) {
    for (std::size_t k = 0; k < kCategories; ++k) {
      const double d = delta2(c, k);
      observed += o[c][k] * d;
      expected += marg[c] * marg[k] * d;
    }
  }
  observed /= n;
  expected /= n * (n - 1.0);
  if (expected == 0.0) return std::nullopt;
  return 1.0 - observed / expected;
}

Statistic match_ratio(const LabelMatrix& m) {
  double total = 0.0;
  for (std::size_t i = 0; i < m.items(); ++i) {
    const auto labels = m.item_labels(i);
    if (labels.size() < 2) return std::nullopt;
    std::array<double, kCategories> counts{};
    for (int label : labels) counts[static_cast<std::size_t>(label - 1)] += 1.0;
    double matching = 0.0;
    for (double c : counts) matching += c * (c - 1.0) / 2.0;
    const double pairs = static_cast<double>(labels.size() * (labels.size() - 1)) / 2.0;
    total += matching / pairs;
  }
  return total / static_cast<double>(m.items());
}

Verdict predict_verdict(double predicted_left, double predicted_right, double tie_margin) {
  const double diff = predicted_left - predicted_right;
  if (diff > tie_margin) return Verdict::left;
  if (diff < -tie_margin) return Verdict::right;
  return Verdict::tie;
}

double pairwise_accuracy(std::span<const ScoredPair> pairs, double tie_margin) {
  if (pairs.empty()) throw Error(ErrorCode::InvalidArgument, "pairwise accuracy over zero pairs");
  if (!(tie_margin >= 0.0)) throw Error(ErrorCode::InvalidArgument, "tie margin must be >= 0");
  std::size_t correct = 0;
  for (const ScoredPair& p : pairs)
    if (predict_verdict(p.predicted_left, p.predicted_right, tie_margin) == p.pair.verdict) ++correct;
  return 100.0 * static_cast<double>(correct) / static_cast<double>(pairs.size());
}

std::array<Histogram, kAspectCount> rating_distribution(std::span<const AspectScores> scores) {
  std::array<Histogram, kAspectCount> hist{};
  for (const AspectScores& s : scores) {
    for (Aspect a : kAllAspects) {
      const double v = s[a];
      if (std::nearbyint(v) != v || !RatingLabel::is_valid(static_cast<int>(v)))
        throw Error(ErrorCode::NonIntegerScore, "score " + std::to_string(v) + " is not a 1..4 label", a);
      ++hist[index_of(a)][static_cast<std::size_t>(v) - 1];
    }
  }
  return hist;
}

CorrelationMatrix aspect_correlation_matrix(std::span<const AspectScores> scores) {
  if (scores.size() < 2) throw Error(ErrorCode::InvalidArgument, "aspect correlation needs at least 2 records");
  std::array<std::vector<double>, kAspectCount> columns;
  for (const AspectScores& s : scores)
    for (Aspect a : kAllAspects) columns[index_of(a)].push_back(s[a]);
  CorrelationMatrix out{};
  for (std::size_t i = 0; i < kAspectCount; ++i) {
    for (std::size_t j = i; j < kAspectCount; ++j) {
      // The diagonal is 1 only for columns whose self-correlation is defined.
      const Statistic rho = spearman_rho(columns[i], columns[j]);
      out[i][j] = (i == j && rho) ? Statistic{1.0} : rho;
      out[j][i] = out[i][j];
    }
  }
  return out;
}

std::vector<BaselineEstimate> random_correlation_baseline(const std::vector<std::vector<double>>& reference_columns,
                                                          std::uint64_t seed, int trials) {
  if (trials < 1) throw Error(ErrorCode::InvalidArgument, "trials must be >= 1");
  std::mt19937_64 rng(seed);
  std::vector<std::vector<double>> samples(reference_columns.size());
  for (int t = 0; t < trials; ++t) {
    for (std::size_t c = 0; c < reference_columns.size(); ++c) {
      const auto& ref = reference_columns[c];
      std::vector<double> drawn(ref.size());
      for (double& d : drawn) d = static_cast<double>(1 + uniform_index(rng, kCategories));
      if (ref.size() < 2) continue;
      if (const Statistic rho = spearman_rho(drawn, ref)) samples[c].push_back(*rho);
    }
  }
  std::vector<BaselineEstimate> out;
  for (const auto& s : samples) {
    const Moments m = summarize(s);
    out.push_back({m.count > 0 ? Statistic{m.mean} : std::nullopt, m.std_error, m.count});
  }
  return out;
}

BaselineEstimate random_preference_baseline(std::span<const PreferencePair> pairs, std::uint64_t seed, int trials) {
  if (trials < 1) throw Error(ErrorCode::InvalidArgument, "trials must be >= 1");
  if (pairs.empty()) throw Error(ErrorCode::InvalidArgument, "no preference pairs");
  static constexpr std::array<Verdict, 3> kVerdicts = {Verdict::left, Verdict::right, Verdict::tie};
  std::mt19937_64 rng(seed);
  std::vector<double> samples;
  for (int t = 0; t < trials; ++t) {
    std::size_t correct = 0;
    for (const PreferencePair& p : pairs)
      if (kVerdicts[uniform_index(rng, kVerdicts.size())] == p.verdict) ++correct;
    samples.push_back(100.0 * static_cast<double>(correct) / static_cast<double>(pairs.size()));
  }
  const Moments m = summarize(samples);
  return {m.mean, m.std_error, m.count};
}

}  // namespace videoeval::stats
