#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "videoeval/core.hpp"
#include "videoeval/discretize.hpp"
#include "videoeval/pipeline.hpp"
#include "videoeval/scorer.hpp"
#include "videoeval/stats.hpp"

namespace videoeval::harness {

struct RunConfig {
  std::uint64_t seed = 0;
  int k = 5;
  int vbench_subsample = 100;
  double tie_margin = 0.0;
  std::size_t threads = 1;
  int random_trials = 100;
  // Backend descriptor; see make_backend.
  nlohmann::json backend = "stub";
  std::string rules_path;  // empty: built-in table
  std::map<std::string, std::string> providers;  // clip/dino/xclip/piqe/brisque -> url or "stub"
  std::vector<std::string> decoder_command;
  std::vector<std::string> interpolator_command;
  std::vector<std::string> nsfw_command;
  bool decoder_thread_safe = true;
  std::string cache_path;
  pipeline::PipelineConfig pipeline;

  void validate() const;
};

void to_json(nlohmann::json& j, const RunConfig& c);
// Unknown keys are rejected so typos do not silently fall back to defaults.
void from_json(const nlohmann::json& j, RunConfig& c);
RunConfig load_config(const std::filesystem::path& path);

rules::RuleSet load_rule_set(const RunConfig& config);

struct Counts {
  std::size_t total = 0;
  std::size_t evaluated = 0;
  std::size_t parse_failures = 0;
  std::size_t skipped = 0;

  bool reconciles() const { return evaluated + parse_failures + skipped == total; }
};

struct Fingerprint {
  std::uint64_t seed = 0;
  double tie_margin = 0.0;
  std::string rules_hash;
  std::string backend;
  std::string normalization;

  std::string digest() const;
};

Fingerprint make_fingerprint(const RunConfig& config, const rules::RuleSet& rules, const std::string& backend);

enum class ValueFormat { correlation, percent };

struct BenchmarkResult {
  std::string benchmark;
  std::string method;
  std::vector<std::string> columns;
  std::vector<stats::Statistic> values;  // parallel to columns
  ValueFormat format = ValueFormat::correlation;
  Counts counts;
  std::vector<std::string> degenerate_columns;
  Fingerprint fingerprint;

  // Mean of the defined column values; undefined when none is defined.
  stats::Statistic average() const;
};

nlohmann::json to_json(const BenchmarkResult& r);

// --- inputs ------------------------------------------------------------------

/// JSON Lines of labeled records. `require_scores` demands human labels on
/// every line. Throws SchemaError (with line number) or DuplicateId.
std::vector<LabeledRecord> load_dataset(const std::filesystem::path& path, bool require_scores);
std::vector<LabeledRecord> load_labeled_dataset(const std::filesystem::path& path);

/// JSON Lines {left, right, verdict[, group]}.
std::vector<PreferencePair> load_pairs(const std::filesystem::path& path);

/// ((r1 + r2 + r3) / 3 - 1) / 4 for ratings on the 1..5 scale.
double normalize_evalcrafter(int r1, int r2, int r3);

using ReferenceScores = std::array<std::optional<double>, kAspectCount>;

/// CSV with header video_id,aspect,r1,r2,r3. Values are normalized.
std::map<std::string, ReferenceScores> load_evalcrafter_csv(const std::filesystem::path& path);

inline constexpr std::array<Aspect, 3> kEvalCrafterAspects{Aspect::vq, Aspect::tc, Aspect::tva};

struct EvalItem {
  VideoRecord record;
  ReferenceScores reference;
};

std::vector<EvalItem> items_from_labeled(const std::vector<LabeledRecord>& dataset);
/// Joins ratings onto records by id; throws UnresolvedId for unknown ids.
std::vector<EvalItem> items_from_ratings(const std::vector<LabeledRecord>& records,
                                         const std::map<std::string, ReferenceScores>& ratings);

/// Item x rater CSV (item_id,rater,aspect,label) into one matrix per aspect
/// present. Items and raters keep first-appearance order.
std::map<Aspect, stats::LabelMatrix> load_rating_matrices(const std::filesystem::path& path);

// --- scoring -----------------------------------------------------------------

/// Produces preprocessed frames for a record. Empty when the backend works
/// without frames.
using FrameSource = std::function<FrameSequence(const VideoRecord&)>;

/// Decodes through `decoder` and normalizes the rate. Calls are serialized
/// when the decoder is not thread-safe.
FrameSource decoder_source(std::shared_ptr<pipeline::FrameDecoder> decoder,
                           std::shared_ptr<pipeline::FrameInterpolator> interpolator,
                           pipeline::PipelineConfig config);

struct ScoreOutcome {
  std::optional<AspectScores> scores;
  bool parse_failure = false;
  bool skipped = false;
  std::string message;
};

struct ScoringOptions {
  FrameSource frames;
  scoring::ScoreCache* cache = nullptr;
  std::size_t threads = 1;
};

/// Scores every record, in parallel up to min(threads, backend in-flight
/// limit). Parse failures and unreadable media are reported per record;
/// backend failures propagate.
std::vector<ScoreOutcome> score_all(std::span<const VideoRecord> records, scoring::ScorerBackend& backend,
                                    const ScoringOptions& options);

struct EvalSettings {
  std::string benchmark = "VideoFeedback";
  std::string method;
  Fingerprint fingerprint;
  ScoringOptions scoring;
};

/// Spearman of predicted vs reference per aspect. Undefined columns are
/// listed as degenerate. Throws AllParsesFailed when nothing was scored.
BenchmarkResult run_correlation_eval(std::span<const EvalItem> items, scoring::ScorerBackend& backend,
                                     std::span<const Aspect> aspects, const EvalSettings& settings);

/// Pairwise accuracy from averaged aspect scores, one column per pair group
/// (in first-appearance order). Throws UnresolvedId or AllParsesFailed.
BenchmarkResult run_preference_eval(std::span<const PreferencePair> pairs, std::span<const VideoRecord> videos,
                                    scoring::ScorerBackend& backend, double tie_margin,
                                    const EvalSettings& settings);

/// Seeded rows for the Random baseline of the same shape as a real run.
BenchmarkResult random_correlation_row(std::span<const EvalItem> items, std::span<const Aspect> aspects,
                                       const EvalSettings& settings, int trials);
BenchmarkResult random_preference_row(std::span<const PreferencePair> pairs, const EvalSettings& settings,
                                      int trials);

// --- selection ---------------------------------------------------------------

/// Unique prompts in first-appearance order.
std::vector<std::string> unique_prompts(std::span<const LabeledRecord> dataset);

/// Seeded uniform sample of `n` unique prompts, keeping every record of each
/// chosen prompt in input order. Throws TooFewPrompts.
std::vector<LabeledRecord> subsample_prompts(std::span<const LabeledRecord> dataset, std::size_t n,
                                             std::uint64_t seed);

/// Per group, keeps the pairs whose left video's prompt is among `n`
/// sampled prompts. Groups with at most `n` prompts are kept whole.
std::vector<PreferencePair> subsample_pair_groups(std::span<const PreferencePair> pairs,
                                                  std::span<const VideoRecord> videos, std::size_t n,
                                                  std::uint64_t seed);

struct Candidate {
  VideoRecord record;
  std::optional<FrameSequence> frames;
};

struct BestOfK {
  std::size_t index = 0;
  AspectScores scores;
  std::vector<std::optional<AspectScores>> candidate_scores;
  std::size_t parse_failures = 0;
};

/// Highest average_aspects wins; ties go to the lowest index. Candidates
/// whose output fails to parse are passed over.
BestOfK best_of_k(std::span<const Candidate> candidates, scoring::ScorerBackend& backend,
                  scoring::ScoreCache* cache = nullptr);

struct LeaderboardRow {
  std::string model;
  std::size_t videos = 0;
  AspectScores mean;
  std::array<double, kAspectCount> display{};
  double display_average = 0.0;
};

/// (mean - 1) / 3 * 100.
double display_score(double mean);

/// Groups scored records by model name. Unscored records are ignored; a
/// model with no scored record raises EmptyModelGroup.
std::vector<LeaderboardRow> leaderboard(std::span<const LabeledRecord> records);

// --- reports -----------------------------------------------------------------

enum class ReportFormat { csv, aligned_text };

std::optional<ReportFormat> report_format_from_string(std::string_view s);

/// Tables grouped by benchmark in first-appearance order; one row per
/// method, then the Average column.
std::string run_report(std::span<const BenchmarkResult> results, ReportFormat format);

struct IaaRow {
  Aspect aspect;
  std::size_t items = 0;
  stats::Statistic match_ratio;
  stats::Statistic fleiss_kappa;  // undefined for incomplete matrices
  stats::Statistic kripp_alpha;
};

std::vector<IaaRow> iaa_table(const std::map<Aspect, stats::LabelMatrix>& matrices,
                              stats::AlphaLevel level = stats::AlphaLevel::ordinal);
std::string render_iaa(std::span<const IaaRow> rows, ReportFormat format);

std::string render_leaderboard(std::span<const LeaderboardRow> rows, ReportFormat format);

std::string render_correlation_matrix(const stats::CorrelationMatrix& m, ReportFormat format);

/// Machine-readable run document: results plus the fingerprint they share.
nlohmann::json result_document(std::span<const BenchmarkResult> results, const RunConfig& config);

// --- backend construction ----------------------------------------------------

/// Builds a backend from a descriptor:
///   "stub" | {"kind": "stub", "mode": "generative"|"regression", "seed": n}
///   {"kind": "remote", "url": "...", "mode": ..., "strict": bool, "max_in_flight": n}
///   {"kind": "precomputed", "path": "scores.jsonl"}
///   {"kind": "feature", "mapping": {"vq": "PIQE", ...}}
/// The CLI string forms "remote:<url>" and "precomputed:<path>" are accepted
/// too. Feature backends take providers from config.providers.
std::unique_ptr<scoring::ScorerBackend> make_backend(const nlohmann::json& descriptor, const RunConfig& config,
                                                     const rules::RuleSet& rules);

/// Parses a --backend override: JSON text, a file path, or a short form.
nlohmann::json parse_backend_option(const std::string& text);

}  // namespace videoeval::harness
