#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "videoeval/core.hpp"

namespace videoeval::stats {

/// A statistic that may be undefined (constant input, no pairable data, ...).
/// Undefined is kept distinct from 0, which is a meaningful correlation.
using Statistic = std::optional<double>;

/// items x raters grid of optional 1..4 labels.
class LabelMatrix {
 public:
  LabelMatrix(std::size_t items, std::size_t raters);
  static LabelMatrix from_rows(const std::vector<std::vector<std::optional<int>>>& rows);

  std::size_t items() const { return items_; }
  std::size_t raters() const { return raters_; }

  std::optional<int> at(std::size_t item, std::size_t rater) const { return cells_[item * raters_ + rater]; }
  void set(std::size_t item, std::size_t rater, std::optional<int> label);

  // Present labels of one item, in rater order.
  std::vector<int> item_labels(std::size_t item) const;
  bool complete() const;

 private:
  std::size_t items_;
  std::size_t raters_;
  std::vector<std::optional<int>> cells_;
};

/// Average (fractional) ranks, 1-based; ties share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> values);

Statistic pearson(std::span<const double> x, std::span<const double> y);
Statistic spearman_rho(std::span<const double> x, std::span<const double> y);

/// Requires a complete matrix. Undefined when the expected agreement is 1.
Statistic fleiss_kappa(const LabelMatrix& m);

enum class AlphaLevel { nominal, ordinal, interval };

/// Coincidence-matrix Krippendorff's alpha. Items with fewer than two labels
/// are not pairable and drop out. Undefined when nothing is pairable or the
/// expected disagreement is 0.
Statistic kripp_alpha(const LabelMatrix& m, AlphaLevel level = AlphaLevel::ordinal);

/// Mean over items of the fraction of rater pairs with identical labels.
Statistic match_ratio(const LabelMatrix& m);

struct ScoredPair {
  PreferencePair pair;
  double predicted_left = 0.0;
  double predicted_right = 0.0;
};

Verdict predict_verdict(double predicted_left, double predicted_right, double tie_margin);

/// Percentage of pairs whose predicted verdict equals the human verdict.
double pairwise_accuracy(std::span<const ScoredPair> pairs, double tie_margin = 0.0);

using Histogram = std::array<std::size_t, 4>;  // counts for labels 1..4

/// Per-aspect histograms. Throws NonIntegerScore on fractional scores.
std::array<Histogram, kAspectCount> rating_distribution(std::span<const AspectScores> scores);

using CorrelationMatrix = std::array<std::array<Statistic, kAspectCount>, kAspectCount>;

/// Spearman correlation between every pair of aspect columns.
CorrelationMatrix aspect_correlation_matrix(std::span<const AspectScores> scores);

struct BaselineEstimate {
  Statistic mean;
  double std_error = 0.0;
  std::size_t defined_trials = 0;
};

/// Spearman of uniformly drawn 1..4 labels against each reference column,
/// averaged over `trials`. Draws come from a generator seeded with `seed`.
std::vector<BaselineEstimate> random_correlation_baseline(const std::vector<std::vector<double>>& reference_columns,
                                                          std::uint64_t seed, int trials);

/// Pairwise accuracy of verdicts drawn uniformly from {left, right, tie}.
BaselineEstimate random_preference_baseline(std::span<const PreferencePair> pairs, std::uint64_t seed, int trials);

}  // namespace videoeval::stats
