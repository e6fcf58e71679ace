#include "videoeval/scorer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <mutex>
#include <regex>

#include "videoeval/util.hpp"

namespace videoeval::scoring {

namespace {

constexpr std::string_view kTemplateHead =
    "Suppose you are an expert in judging and evaluating the quality of AI-generated videos,\n"
    "please watch the following frames of a given video and see the text prompt for generating the video,\n"
    "then give scores from 5 different dimensions:\n"
    "(1) visual quality: the quality of the video in terms of clearness, resolution, brightness, and color\n"
    "(2) temporal consistency, the consistency of objects or humans in video\n"
    "(3) dynamic degree, the degree of dynamic changes\n"
    "(4) text-to-video alignment, the alignment between the text prompt and the video content\n"
    "(5) factual consistency, the consistency of the video content with the common-sense and factual knowledge\n"
    "\n";

constexpr std::string_view kGenerativeBody =
    "For each dimension, output a number from [1,2,3,4],\n"
    "in which '1' means 'Bad', '2' means 'Average', '3' means 'Good',\n"
    "'4' means 'Real' or 'Perfect' (the video is like a real video)\n"
    "Here is an output example:\n"
    "visual quality: 4\n"
    "temporal consistency: 4\n"
    "dynamic degree: 3\n"
    "text-to-video alignment: 1\n"
    "factual consistency: 2\n"
    "\n";

constexpr std::string_view kRegressionBody =
    "For each dimension, output a float number from 1.0 to 4.0,\n"
    "higher the number is, better the video performs in that dimension,\n"
    "the lowest 1.0 means Bad, the highest 4.0 means Perfect/Real (the video is like a real video)\n"
    "Here is an output example:\n"
    "visual quality: 2.24\n"
    "temporal consistency: 3.89\n"
    "dynamic degree: 3.17\n"
    "text-to-video alignment: 1.86\n"
    "factual consistency: 2.16\n"
    "\n";

constexpr std::string_view kTemplateTail =
    "For this video, the text prompt is \"{text_prompt}\",\n"
    "all the frames of video are as follows:\n";

constexpr std::string_view kSlot = "{text_prompt}";

std::string template_text(ScoringMode mode) {
  std::string t(kTemplateHead);
  t += mode == ScoringMode::generative ? kGenerativeBody : kRegressionBody;
  t += kTemplateTail;
  return t;
}

std::string template_hash(ScoringMode mode) { return sha256_hex(template_text(mode)).substr(0, 16); }

struct AspectPattern {
  Aspect aspect;
  std::string phrase;
  bool synonym;
  std::regex lenient;
  std::regex strict;
};

std::vector<AspectPattern> build_patterns() {
  std::vector<std::pair<Aspect, std::pair<std::string, bool>>> phrases;
  for (Aspect a : kAllAspects) phrases.push_back({a, {std::string(aspect_phrase(a)), false}});
  for (const char* s : {"text alignment", "text-video alignment", "text to video alignment"})
    phrases.push_back({Aspect::tva, {s, true}});

  const std::string number = R"(([+-]?[0-9]+(?:\.[0-9]*)?))";
  std::vector<AspectPattern> out;
  for (const auto& [aspect, p] : phrases) {
    const auto& [phrase, synonym] = p;
    out.push_back({aspect, phrase, synonym,
                   std::regex("(?:^|[^a-z-])" + phrase + R"(\s*:\s*)" + number, std::regex::icase),
                   std::regex(R"(^\s*)" + phrase + R"(\s*:\s*)" + number + R"(\s*$)", std::regex::icase)});
  }
  return out;
}

const std::vector<AspectPattern>& patterns() {
  static const std::vector<AspectPattern> p = build_patterns();
  return p;
}

std::string format_number(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

}  // namespace

std::string build_prompt(std::string_view prompt, ScoringMode mode) {
  if (prompt.empty()) throw Error(ErrorCode::InvalidArgument, "empty text prompt");
  std::string text = template_text(mode);
  text.replace(text.find(kSlot), kSlot.size(), prompt);
  return text;
}

AspectScores parse_generative(std::string_view text, const ParseOptions& options) {
  std::array<std::optional<double>, kAspectCount> found{};
  std::istringstream in{std::string(text)};
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    for (const AspectPattern& p : patterns()) {
      if (p.synonym && (options.strict || !options.allow_synonyms)) continue;
      const std::regex& re = options.strict ? p.strict : p.lenient;
      for (auto it = std::sregex_iterator(line.begin(), line.end(), re); it != std::sregex_iterator(); ++it) {
        const std::string raw = (*it)[1].str();
        const double value = std::stod(raw);
        auto& slot = found[index_of(p.aspect)];
        if (slot) throw Error(ErrorCode::DuplicateAspect, std::string(aspect_phrase(p.aspect)) + " scored twice", p.aspect);
        if (std::nearbyint(value) != value || value < 1.0 || value > 4.0)
          throw Error(ErrorCode::OutOfRangeScore, std::string(aspect_phrase(p.aspect)) + ": " + raw + " is not in [1,2,3,4]",
                      p.aspect);
        if (p.synonym) warn("accepted '" + p.phrase + "' as " + std::string(aspect_phrase(p.aspect)));
        slot = value;
      }
    }
  }
  AspectScores scores;
  for (Aspect a : kAllAspects) {
    if (!found[index_of(a)])
      throw Error(ErrorCode::MissingAspect, "no score line for " + std::string(aspect_phrase(a)), a);
    scores[a] = *found[index_of(a)];
  }
  return scores;
}

std::string render_generative(const AspectScores& scores) {
  std::string out;
  for (Aspect a : kAllAspects) out += std::string(aspect_phrase(a)) + ": " + format_number(scores[a]) + "\n";
  return out;
}

AspectScores validate_regression(std::span<const double> values) {
  if (values.size() != kAspectCount)
    throw Error(ErrorCode::WrongArity, "expected 5 regression outputs, got " + std::to_string(values.size()));
  AspectScores scores;
  for (Aspect a : kAllAspects) {
    const double v = values[index_of(a)];
    if (!std::isfinite(v) || v < 1.0 || v > 4.0)
      throw Error(ErrorCode::OutOfRangeScore, std::string(aspect_key(a)) + " = " + format_number(v) + " outside [1, 4]", a);
    scores[a] = v;
  }
  return scores;
}

double average_aspects(const AspectScores& s) { return (s.vq + s.tc + s.dd + s.tva + s.fc) / 5.0; }

std::string_view to_string(BackendKind k) {
  switch (k) {
    case BackendKind::generative_text: return "generative_text";
    case BackendKind::regression_floats: return "regression_floats";
    case BackendKind::remote_service: return "remote_service";
    case BackendKind::feature_composite: return "feature_composite";
    case BackendKind::precomputed: break;
  }
  return "precomputed";
}

// --- backends ----------------------------------------------------------------

GenerativeTextBackend::GenerativeTextBackend(std::string id, Model model, ParseOptions options, bool needs_frames)
    : id_(std::move(id)), model_(std::move(model)), options_(options), needs_frames_(needs_frames) {}

std::string GenerativeTextBackend::fingerprint() const {
  return "generative_text:" + id_ + ":" + template_hash(ScoringMode::generative) + (options_.strict ? ":strict" : "");
}

AspectScores GenerativeTextBackend::score(const VideoRecord& record, const FrameSequence* frames) {
  const std::string request = build_prompt(record.prompt, ScoringMode::generative);
  return parse_generative(model_(record, request, frames), options_);
}

RegressionBackend::RegressionBackend(std::string id, Model model, bool needs_frames, std::size_t max_in_flight)
    : id_(std::move(id)), model_(std::move(model)), needs_frames_(needs_frames), max_in_flight_(max_in_flight) {}

std::string RegressionBackend::fingerprint() const {
  return "regression_floats:" + id_ + ":" + template_hash(ScoringMode::regression);
}

AspectScores RegressionBackend::score(const VideoRecord& record, const FrameSequence* frames) {
  const std::string request = build_prompt(record.prompt, ScoringMode::regression);
  return validate_regression(model_(record, request, frames));
}

RemoteServiceBackend::RemoteServiceBackend(std::shared_ptr<protocol::Transport> transport, ScoringMode payload,
                                           ParseOptions options, std::size_t max_in_flight)
    : transport_(std::move(transport)), payload_(payload), options_(options), max_in_flight_(max_in_flight) {
  if (!transport_) throw Error(ErrorCode::InvalidConfig, "remote backend without transport");
}

std::string RemoteServiceBackend::fingerprint() const {
  return "remote_service:" + transport_->endpoint() + ":" + std::string(to_string(payload_)) + ":" +
         template_hash(payload_);
}

AspectScores RemoteServiceBackend::score(const VideoRecord& record, const FrameSequence* frames) {
  if (frames == nullptr) throw Error(ErrorCode::InvalidArgument, "remote scoring needs frames for '" + record.id + "'");
  const auto response = transport_->call(
      protocol::make_request(protocol::Task::score, frames->frames(), build_prompt(record.prompt, payload_), payload_));
  if (payload_ == ScoringMode::generative) {
    if (!response.text) throw Error(ErrorCode::ProviderError, transport_->endpoint() + ": generative reply without text");
    return parse_generative(*response.text, options_);
  }
  if (!response.scores) throw Error(ErrorCode::ProviderError, transport_->endpoint() + ": regression reply without scores");
  return validate_regression(*response.scores);
}

FeatureCompositeBackend::FeatureCompositeBackend(FeatureMapping mapping, rules::RuleSet rules,
                                                 FeatureProviders providers, int dynamics_samples)
    : mapping_(std::move(mapping)),
      rules_(std::move(rules)),
      providers_(std::move(providers)),
      dynamics_samples_(dynamics_samples) {
  if (dynamics_samples_ < 2) throw Error(ErrorCode::InvalidConfig, "dynamics sample count must be >= 2");
  for (const auto& metric : mapping_)
    if (metric && !rules_.contains(*metric))
      throw Error(ErrorCode::InvalidConfig, "no discretization rule for metric '" + *metric + "'");
}

std::string FeatureCompositeBackend::fingerprint() const {
  std::string desc;
  for (Aspect a : kAllAspects)
    desc += std::string(aspect_key(a)) + "=" + mapping_[index_of(a)].value_or("-") + ";";
  desc += "n=" + std::to_string(dynamics_samples_) + ";rules=" + rules::rules_fingerprint(rules_);
  return "feature_composite:" + sha256_hex(desc).substr(0, 16);
}

MetricValue FeatureCompositeBackend::compute_metric(std::string_view name, const VideoRecord& record,
                                                    const FrameSequence& frames) const {
  const auto need = [&](const auto& p) -> auto& {
    if (!p) throw Error(ErrorCode::ProviderError, "no provider configured for " + std::string(name));
    return *p;
  };
  if (name == metrics::kPiqe) return metrics::iqa_video_score(frames, need(providers_.piqe), name);
  if (name == metrics::kBrisque) return metrics::iqa_video_score(frames, need(providers_.brisque), name);
  if (name == metrics::kClipSim) return metrics::embed_temporal_sim(frames, need(providers_.clip), name);
  if (name == metrics::kDinoSim) return metrics::embed_temporal_sim(frames, need(providers_.dino), name);
  if (name == metrics::kSsimSim) return metrics::ssim_sim(frames);
  if (name == metrics::kMseDyn) {
    MetricValue v = metrics::dynamic_scores(frames, dynamics_samples_).mse_dyn;
    v.metric_name = std::string(metrics::kMseDyn);
    v.raw *= metrics::kEightBitMseScale;
    return v;
  }
  if (name == metrics::kMseDynUnit) return metrics::dynamic_scores(frames, dynamics_samples_).mse_dyn;
  if (name == metrics::kSsimDyn) return metrics::dynamic_scores(frames, dynamics_samples_).ssim_dyn;
  if (name == metrics::kClipScore) return metrics::text_frame_alignment(frames, record.prompt, need(providers_.clip), name);
  if (name == metrics::kXClipScore)
    return metrics::text_video_alignment(frames, record.prompt, need(providers_.xclip), name);
  throw Error(ErrorCode::InvalidConfig, "unknown feature metric '" + std::string(name) + "'");
}

AspectScores FeatureCompositeBackend::score(const VideoRecord& record, const FrameSequence* frames) {
  for (Aspect a : kAllAspects)
    if (!mapping_[index_of(a)])
      throw Error(ErrorCode::UnmappedAspect, "no feature metric configured for " + std::string(aspect_phrase(a)), a);
  if (frames == nullptr) throw Error(ErrorCode::InvalidArgument, "feature scoring needs frames for '" + record.id + "'");

  std::map<std::string, MetricValue, std::less<>> computed;
  AspectScores scores;
  for (Aspect a : kAllAspects) {
    const std::string& metric = *mapping_[index_of(a)];
    auto it = computed.find(metric);
    if (it == computed.end()) it = computed.emplace(metric, compute_metric(metric, record, *frames)).first;
    scores[a] = rules::discretize(it->second, rules_.at(metric)).value();
  }
  return scores;
}

PrecomputedBackend::PrecomputedBackend(std::string id, std::map<std::string, AspectScores> scores)
    : id_(std::move(id)), scores_(std::move(scores)) {}

std::string PrecomputedBackend::fingerprint() const { return "precomputed:" + id_; }

AspectScores PrecomputedBackend::score(const VideoRecord& record, const FrameSequence*) {
  auto it = scores_.find(record.id);
  if (it == scores_.end()) throw Error(ErrorCode::UnresolvedId, "no precomputed scores for '" + record.id + "'");
  return it->second;
}

// --- cache -------------------------------------------------------------------

std::string ScoreCache::key(const std::string& record_id, const std::string& fingerprint) {
  return fingerprint + '\x1f' + record_id;
}

std::optional<AspectScores> ScoreCache::get(const std::string& record_id, const std::string& fingerprint) const {
  std::shared_lock lock(mutex_);
  auto it = entries_.find(key(record_id, fingerprint));
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void ScoreCache::put(const std::string& record_id, const std::string& fingerprint, const AspectScores& scores) {
  std::unique_lock lock(mutex_);
  entries_[key(record_id, fingerprint)] = scores;
}

std::size_t ScoreCache::size() const {
  std::shared_lock lock(mutex_);
  return entries_.size();
}

void ScoreCache::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) return;  // a missing cache file is an empty cache
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      put(j.at("id").get<std::string>(), j.at("fingerprint").get<std::string>(), j.at("scores").get<AspectScores>());
    } catch (const std::exception& e) {
      throw Error(ErrorCode::SchemaError, path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

void ScoreCache::save(const std::string& path) const {
  std::vector<std::pair<std::string, AspectScores>> sorted;
  {
    std::shared_lock lock(mutex_);
    sorted.assign(entries_.begin(), entries_.end());
  }
  std::ranges::sort(sorted, {}, &std::pair<std::string, AspectScores>::first);
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::InvalidConfig, "cannot write cache file " + path);
  for (const auto& [k, scores] : sorted) {
    const std::size_t sep = k.find('\x1f');
    out << nlohmann::json{{"id", k.substr(sep + 1)}, {"fingerprint", k.substr(0, sep)}, {"scores", scores}}.dump()
        << '\n';
  }
}

AspectScores score_video(const VideoRecord& record, const FrameSequence* frames, ScorerBackend& backend,
                         ScoreCache* cache) {
  const std::string fp = cache != nullptr ? backend.fingerprint() : std::string{};
  if (cache != nullptr)
    if (auto hit = cache->get(record.id, fp)) return *hit;
  if (backend.needs_frames() && frames == nullptr)
    throw Error(ErrorCode::InvalidArgument, std::string(to_string(backend.kind())) + " backend needs frames for '" +
                                                record.id + "'");
  AspectScores scores = backend.score(record, frames);
  if (!scores.in_range())
    throw Error(ErrorCode::OutOfRangeScore, "backend produced scores outside [1, 4] for '" + record.id + "'");
  if (cache != nullptr) cache->put(record.id, fp, scores);
  return scores;
}

}  // namespace videoeval::scoring
