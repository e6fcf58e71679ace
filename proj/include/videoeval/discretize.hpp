#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "videoeval/core.hpp"

namespace videoeval::rules {

/// One interval of a rule. Closure is derived from the interval's position
/// once the bins are ordered by value: every bin is lower-closed and
/// upper-open, except the topmost bin, which is also upper-closed when its
/// bound is finite.
struct Bin {
  double lower = 0.0;
  double upper = 0.0;
  bool upper_closed = false;
  int label = 1;

  bool contains(double v) const { return v >= lower && (v < upper || (upper_closed && v == upper)); }
};

struct BinSpec {
  double lower;
  double upper;
  int label;
};

class BinRule {
 public:
  /// Validates the bins: exactly one bin per label 1..4, no gaps or overlaps
  /// once sorted, and label order consistent with `direction`. Throws
  /// Error(MalformedRule) otherwise.
  BinRule(std::string metric_name, Direction direction, std::vector<BinSpec> bins,
          bool clamp_below_domain = false);

  const std::string& metric_name() const { return metric_name_; }
  Direction direction() const { return direction_; }
  // Ordered by value, ascending.
  const std::array<Bin, 4>& bins() const { return bins_; }
  bool clamp_below_domain() const { return clamp_below_domain_; }
  double domain_min() const { return bins_.front().lower; }
  double domain_max() const { return bins_.back().upper; }

 private:
  std::string metric_name_;
  Direction direction_;
  std::array<Bin, 4> bins_{};
  bool clamp_below_domain_;
};

using RuleSet = std::map<std::string, BinRule, std::less<>>;

/// Label whose interval contains `value.raw`. Throws RuleMismatch when the
/// names differ and OutOfDomain outside the rule's domain, except that rules
/// flagged clamp_below_domain map low values to the bottom bin.
RatingLabel discretize(const MetricValue& value, const BinRule& rule);

/// Rule file document:
///   {"rules": [{"metric": "...", "direction": "higher_better",
///               "bins": [[lower, upper, label], ...],
///               "clamp_below_domain": false}, ...]}
/// Bounds may be the strings "inf" / "-inf". Throws MalformedRule.
RuleSet parse_rules(const nlohmann::json& document);
RuleSet load_rules(const std::filesystem::path& path);
nlohmann::json rules_to_json(const RuleSet& rules);

/// The shipped default table (rules/default_rules.json, compiled in).
const RuleSet& default_rules();
std::string_view default_rules_text();

/// SHA-256 over the canonical JSON form, for run fingerprints.
std::string rules_fingerprint(const RuleSet& rules);

}  // namespace videoeval::rules
