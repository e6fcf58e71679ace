#pragma once

#include <array>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>

#include "videoeval/core.hpp"
#include "videoeval/discretize.hpp"
#include "videoeval/metrics.hpp"
#include "videoeval/protocol.hpp"

namespace videoeval::scoring {

/// Scoring instructions for a multimodal model, with `prompt` substituted
/// into the text-prompt slot.
std::string build_prompt(std::string_view prompt, ScoringMode mode);

struct ParseOptions {
  // Strict: every scored line must be exactly "<aspect>: <N>" and synonyms
  // are refused. Lenient: prose around the scores is tolerated.
  bool strict = false;
  bool allow_synonyms = true;
};

/// Extracts the five "<aspect>: N" lines from generated text. Each N must be
/// an integer in 1..4. Throws MissingAspect, OutOfRangeScore or
/// DuplicateAspect (with the offending aspect attached).
AspectScores parse_generative(std::string_view text, const ParseOptions& options = {});

/// Inverse of parse_generative for integer scores: the five lines in the
/// layout of the template's output example.
std::string render_generative(const AspectScores& scores);

/// Five regression outputs in (vq, tc, dd, tva, fc) order, each finite and
/// within [1, 4]. Throws WrongArity or OutOfRangeScore.
AspectScores validate_regression(std::span<const double> values);

double average_aspects(const AspectScores& scores);

enum class BackendKind { generative_text, regression_floats, remote_service, feature_composite, precomputed };

std::string_view to_string(BackendKind k);

class ScorerBackend {
 public:
  virtual ~ScorerBackend() = default;
  virtual BackendKind kind() const = 0;
  virtual bool needs_frames() const = 0;
  /// Identifies the backend configuration (endpoint, template, rules) for
  /// the response cache.
  virtual std::string fingerprint() const = 0;
  /// `frames` may be null when needs_frames() is false.
  virtual AspectScores score(const VideoRecord& record, const FrameSequence* frames) = 0;
  /// Upper bound on concurrent score() calls.
  virtual std::size_t max_in_flight() const { return 1; }
};

/// Wraps a text-generating model. The model receives the built request text.
class GenerativeTextBackend : public ScorerBackend {
 public:
  using Model = std::function<std::string(const VideoRecord&, std::string_view request_text, const FrameSequence*)>;
  GenerativeTextBackend(std::string id, Model model, ParseOptions options = {}, bool needs_frames = false);

  BackendKind kind() const override { return BackendKind::generative_text; }
  bool needs_frames() const override { return needs_frames_; }
  std::string fingerprint() const override;
  AspectScores score(const VideoRecord& record, const FrameSequence* frames) override;

 private:
  std::string id_;
  Model model_;
  ParseOptions options_;
  bool needs_frames_;
};

/// Wraps a model emitting five floats.
class RegressionBackend : public ScorerBackend {
 public:
  using Model =
      std::function<std::vector<double>(const VideoRecord&, std::string_view request_text, const FrameSequence*)>;
  RegressionBackend(std::string id, Model model, bool needs_frames = false, std::size_t max_in_flight = 1);

  BackendKind kind() const override { return BackendKind::regression_floats; }
  bool needs_frames() const override { return needs_frames_; }
  std::string fingerprint() const override;
  AspectScores score(const VideoRecord& record, const FrameSequence* frames) override;
  std::size_t max_in_flight() const override { return max_in_flight_; }

 private:
  std::string id_;
  Model model_;
  bool needs_frames_;
  std::size_t max_in_flight_;
};

/// Sends frames plus the built prompt over the wire protocol. `payload`
/// declares whether the service answers with text or five floats.
class RemoteServiceBackend : public ScorerBackend {
 public:
  RemoteServiceBackend(std::shared_ptr<protocol::Transport> transport, ScoringMode payload,
                       ParseOptions options = {}, std::size_t max_in_flight = 1);

  BackendKind kind() const override { return BackendKind::remote_service; }
  bool needs_frames() const override { return true; }
  std::string fingerprint() const override;
  AspectScores score(const VideoRecord& record, const FrameSequence* frames) override;
  std::size_t max_in_flight() const override { return max_in_flight_; }

 private:
  std::shared_ptr<protocol::Transport> transport_;
  ScoringMode payload_;
  ParseOptions options_;
  std::size_t max_in_flight_;
};

struct FeatureProviders {
  std::shared_ptr<metrics::EmbeddingProvider> clip;   // CLIP-sim, CLIP-Score
  std::shared_ptr<metrics::EmbeddingProvider> dino;   // DINO-sim
  std::shared_ptr<metrics::EmbeddingProvider> xclip;  // X-CLIP-Score
  std::shared_ptr<metrics::IqaProvider> piqe;
  std::shared_ptr<metrics::IqaProvider> brisque;
};

/// Aspect -> metric name. Aspects left empty raise UnmappedAspect.
using FeatureMapping = std::array<std::optional<std::string>, kAspectCount>;

/// Computes one feature metric per aspect and discretizes it.
class FeatureCompositeBackend : public ScorerBackend {
 public:
  FeatureCompositeBackend(FeatureMapping mapping, rules::RuleSet rules, FeatureProviders providers = {},
                          int dynamics_samples = 4);

  BackendKind kind() const override { return BackendKind::feature_composite; }
  bool needs_frames() const override { return true; }
  std::string fingerprint() const override;
  AspectScores score(const VideoRecord& record, const FrameSequence* frames) override;

  /// Raw value of one named metric on `frames`.
  MetricValue compute_metric(std::string_view name, const VideoRecord& record, const FrameSequence& frames) const;

 private:
  FeatureMapping mapping_;
  rules::RuleSet rules_;
  FeatureProviders providers_;
  int dynamics_samples_;
};

/// Scores looked up by record id, e.g. predictions produced offline.
class PrecomputedBackend : public ScorerBackend {
 public:
  PrecomputedBackend(std::string id, std::map<std::string, AspectScores> scores);

  BackendKind kind() const override { return BackendKind::precomputed; }
  bool needs_frames() const override { return false; }
  std::string fingerprint() const override;
  AspectScores score(const VideoRecord& record, const FrameSequence* frames) override;

 private:
  std::string id_;
  std::map<std::string, AspectScores> scores_;
};

/// Thread-safe score cache keyed by (record id, backend fingerprint).
class ScoreCache {
 public:
  std::optional<AspectScores> get(const std::string& record_id, const std::string& fingerprint) const;
  void put(const std::string& record_id, const std::string& fingerprint, const AspectScores& scores);
  std::size_t size() const;

  /// JSON Lines persistence: {"id", "fingerprint", "scores"} per line.
  void load(const std::string& path);
  void save(const std::string& path) const;

 private:
  static std::string key(const std::string& record_id, const std::string& fingerprint);
  mutable std::shared_mutex mutex_;
  std::unordered_map<std::string, AspectScores> entries_;
};

/// Scores one video, consulting and filling `cache` when given.
AspectScores score_video(const VideoRecord& record, const FrameSequence* frames, ScorerBackend& backend,
                         ScoreCache* cache = nullptr);

}  // namespace videoeval::scoring
