#include "videoeval/discretize.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include "videoeval/util.hpp"

namespace videoeval::rules {

namespace {

#include "default_rules.inc"

constexpr double kInf = std::numeric_limits<double>::infinity();

[[noreturn]] void malformed(const std::string& metric, const std::string& why) {
  throw Error(ErrorCode::MalformedRule, "rule '" + metric + "': " + why);
}

double parse_bound(const nlohmann::json& v, const std::string& metric) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    const std::string s = to_lower(v.get<std::string>());
    if (s == "inf" || s == "+inf") return kInf;
    if (s == "-inf") return -kInf;
  }
  malformed(metric, "bound must be a number, \"inf\" or \"-inf\"");
}

nlohmann::json bound_to_json(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

}  // namespace

BinRule::BinRule(std::string metric_name, Direction direction, std::vector<BinSpec> specs,
                 bool clamp_below_domain)
    : metric_name_(std::move(metric_name)), direction_(direction), clamp_below_domain_(clamp_below_domain) {
  if (metric_name_.empty()) malformed("?", "empty metric name");
  if (specs.size() != 4) malformed(metric_name_, "needs exactly 4 bins, got " + std::to_string(specs.size()));

  std::set<int> labels;
  for (const BinSpec& s : specs) {
    if (!RatingLabel::is_valid(s.label)) malformed(metric_name_, "label " + std::to_string(s.label) + " outside 1..4");
    if (!labels.insert(s.label).second) malformed(metric_name_, "label " + std::to_string(s.label) + " repeated");
    if (std::isnan(s.lower) || std::isnan(s.upper) || !(s.lower < s.upper))
      malformed(metric_name_, "bin bounds must satisfy lower < upper");
    if (std::isinf(s.lower)) malformed(metric_name_, "lower bounds must be finite");
  }

  std::ranges::sort(specs, {}, &BinSpec::lower);
  for (std::size_t i = 0; i + 1 < specs.size(); ++i) {
    if (specs[i].upper < specs[i + 1].lower) malformed(metric_name_, "gap between bins");
    if (specs[i].upper > specs[i + 1].lower) malformed(metric_name_, "overlapping bins");
    const bool ascending = specs[i].label < specs[i + 1].label;
    if (ascending != (direction_ == Direction::higher_better))
      malformed(metric_name_, "label order contradicts the rule direction");
  }

  for (std::size_t i = 0; i < specs.size(); ++i) {
    bins_[i] = Bin{specs[i].lower, specs[i].upper, false, specs[i].label};
  }
  bins_.back().upper_closed = std::isfinite(bins_.back().upper);
}

RatingLabel discretize(const MetricValue& value, const BinRule& rule) {
  if (value.metric_name != rule.metric_name())
    throw Error(ErrorCode::RuleMismatch, "value for '" + value.metric_name + "' given to rule '" +
                                             rule.metric_name() + "'");
  const double v = value.raw;
  if (std::isnan(v)) throw Error(ErrorCode::OutOfDomain, value.metric_name + " value is NaN");
  for (const Bin& bin : rule.bins())
    if (bin.contains(v)) return RatingLabel(bin.label);

  if (v < rule.domain_min() && rule.clamp_below_domain()) {
    warn(value.metric_name + " value " + std::to_string(v) + " below rule domain; clamped to the bottom bin");
    return RatingLabel(rule.bins().front().label);
  }
  throw Error(ErrorCode::OutOfDomain, value.metric_name + " value " + std::to_string(v) + " outside [" +
                                          std::to_string(rule.domain_min()) + ", " +
                                          std::to_string(rule.domain_max()) + "]");
}

RuleSet parse_rules(const nlohmann::json& document) {
  if (!document.is_object() || !document.contains("rules") || !document.at("rules").is_array())
    throw Error(ErrorCode::MalformedRule, "rule document needs a 'rules' array");
  RuleSet rules;
  for (const auto& entry : document.at("rules")) {
    if (!entry.is_object() || !entry.contains("metric") || !entry.at("metric").is_string())
      throw Error(ErrorCode::MalformedRule, "rule entry without a metric name");
    const std::string metric = entry.at("metric").get<std::string>();
    if (!entry.contains("direction") || !entry.at("direction").is_string()) malformed(metric, "missing direction");
    const auto direction = direction_from_string(entry.at("direction").get<std::string>());
    if (!direction) malformed(metric, "direction must be higher_better or lower_better");
    if (!entry.contains("bins") || !entry.at("bins").is_array()) malformed(metric, "missing bins");

    std::vector<BinSpec> specs;
    for (const auto& b : entry.at("bins")) {
      if (!b.is_array() || b.size() != 3 || !b[2].is_number_integer())
        malformed(metric, "each bin is [lower, upper, label]");
      specs.push_back({parse_bound(b[0], metric), parse_bound(b[1], metric), b[2].get<int>()});
    }
    bool clamp = false;
    if (entry.contains("clamp_below_domain")) {
      if (!entry.at("clamp_below_domain").is_boolean()) malformed(metric, "clamp_below_domain must be a boolean");
      clamp = entry.at("clamp_below_domain").get<bool>();
    }
    BinRule rule(metric, *direction, std::move(specs), clamp);
    if (!rules.emplace(metric, std::move(rule)).second) malformed(metric, "defined twice");
  }
  return rules;
}

RuleSet load_rules(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MalformedRule, "cannot open rule file " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::MalformedRule, path.string() + ": " + e.what());
  }
  return parse_rules(doc);
}

nlohmann::json rules_to_json(const RuleSet& rules) {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& [name, rule] : rules) {
    nlohmann::json bins = nlohmann::json::array();
    for (const Bin& b : rule.bins()) bins.push_back({bound_to_json(b.lower), bound_to_json(b.upper), b.label});
    nlohmann::json entry{{"metric", name}, {"direction", to_string(rule.direction())}, {"bins", bins}};
    if (rule.clamp_below_domain()) entry["clamp_below_domain"] = true;
    list.push_back(std::move(entry));
  }
  return nlohmann::json{{"rules", list}};
}

std::string_view default_rules_text() { return kDefaultRulesText; }

const RuleSet& default_rules() {
  static const RuleSet rules = parse_rules(nlohmann::json::parse(kDefaultRulesText));
  return rules;
}

std::string rules_fingerprint(const RuleSet& rules) { return sha256_hex(rules_to_json(rules).dump()); }

}  // namespace videoeval::rules
