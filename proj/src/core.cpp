#include "videoeval/core.hpp"

#include <algorithm>
#include <cmath>

namespace videoeval {

namespace {

constexpr std::array<std::string_view, kAspectCount> kKeys = {"vq", "tc", "dd", "tva", "fc"};
constexpr std::array<std::string_view, kAspectCount> kPhrases = {
    "visual quality", "temporal consistency", "dynamic degree", "text-to-video alignment",
    "factual consistency"};
constexpr std::array<std::string_view, kAspectCount> kTitles = {"VQ", "TC", "DD", "TVA", "FC"};

}  // namespace

std::string_view aspect_key(Aspect a) { return kKeys[index_of(a)]; }
std::string_view aspect_phrase(Aspect a) { return kPhrases[index_of(a)]; }
std::string_view aspect_title(Aspect a) { return kTitles[index_of(a)]; }

std::optional<Aspect> aspect_from_key(std::string_view key) {
  for (Aspect a : kAllAspects)
    if (kKeys[index_of(a)] == key) return a;
  return std::nullopt;
}

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::UnreadableMedia: return "UnreadableMedia";
    case ErrorCode::NoInterpolatorConfigured: return "NoInterpolatorConfigured";
    case ErrorCode::InvalidTarget: return "InvalidTarget";
    case ErrorCode::TargetExceedsSource: return "TargetExceedsSource";
    case ErrorCode::TooFewFrames: return "TooFewFrames";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::ProviderError: return "ProviderError";
    case ErrorCode::OutOfDomain: return "OutOfDomain";
    case ErrorCode::RuleMismatch: return "RuleMismatch";
    case ErrorCode::MalformedRule: return "MalformedRule";
    case ErrorCode::MissingAspect: return "MissingAspect";
    case ErrorCode::OutOfRangeScore: return "OutOfRangeScore";
    case ErrorCode::DuplicateAspect: return "DuplicateAspect";
    case ErrorCode::WrongArity: return "WrongArity";
    case ErrorCode::UnmappedAspect: return "UnmappedAspect";
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::OutOfRangeRating: return "OutOfRangeRating";
    case ErrorCode::NonIntegerScore: return "NonIntegerScore";
    case ErrorCode::UnresolvedId: return "UnresolvedId";
    case ErrorCode::TooFewPrompts: return "TooFewPrompts";
    case ErrorCode::EmptyModelGroup: return "EmptyModelGroup";
    case ErrorCode::AllParsesFailed: return "AllParsesFailed";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message, std::optional<Aspect> aspect)
    : std::runtime_error(std::string(to_string(code)) + ": " + message),
      code_(code),
      aspect_(aspect) {}

RatingLabel::RatingLabel(int value) : value_(value) {
  if (!is_valid(value))
    throw Error(ErrorCode::InvalidArgument, "rating label must be in 1..4, got " + std::to_string(value));
}

std::string_view RatingLabel::name() const {
  static constexpr std::array<std::string_view, 4> names = {"Bad", "Average", "Good", "Perfect"};
  return names[static_cast<std::size_t>(value_ - 1)];
}

double& AspectScores::operator[](Aspect a) {
  switch (a) {
    case Aspect::vq: return vq;
    case Aspect::tc: return tc;
    case Aspect::dd: return dd;
    case Aspect::tva: return tva;
    case Aspect::fc: break;
  }
  return fc;
}

double AspectScores::operator[](Aspect a) const { return const_cast<AspectScores&>(*this)[a]; }

AspectScores AspectScores::from_array(const std::array<double, kAspectCount>& v) {
  return AspectScores{v[0], v[1], v[2], v[3], v[4]};
}

bool AspectScores::in_range() const {
  return std::ranges::all_of(to_array(), [](double v) { return v >= 1.0 && v <= 4.0; });
}

bool AspectScores::is_integral() const {
  return std::ranges::all_of(to_array(), [](double v) { return std::nearbyint(v) == v; });
}

Frame::Frame(int w, int h, int c) : width(w), height(h), channels(c) {
  if (w <= 0 || h <= 0) throw Error(ErrorCode::InvalidArgument, "frame dimensions must be positive");
  if (c != 1 && c != 3) throw Error(ErrorCode::InvalidArgument, "frame channel count must be 1 or 3");
  pixels.assign(static_cast<std::size_t>(w) * h * c, 0.0f);
}

Frame Frame::filled(int w, int h, int c, float value) {
  Frame f(w, h, c);
  std::ranges::fill(f.pixels, value);
  return f;
}

Frame Frame::from_u8(int w, int h, int c, std::span<const std::uint8_t> bytes) {
  Frame f(w, h, c);
  if (bytes.size() != f.pixels.size())
    throw Error(ErrorCode::InvalidArgument, "raw frame size does not match its dimensions");
  std::ranges::transform(bytes, f.pixels.begin(),
                         [](std::uint8_t b) { return static_cast<float>(b) / 255.0f; });
  return f;
}

std::vector<std::uint8_t> Frame::to_u8() const {
  std::vector<std::uint8_t> out(pixels.size());
  std::ranges::transform(pixels, out.begin(), [](float v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
  });
  return out;
}

FrameSequence::FrameSequence(std::vector<Frame> frames, int fps) : frames_(std::move(frames)), fps_(fps) {
  if (frames_.empty()) throw Error(ErrorCode::InvalidArgument, "frame sequence is empty");
  if (fps_ < 1) throw Error(ErrorCode::InvalidArgument, "frame rate must be positive");
  for (const Frame& f : frames_)
    if (!f.same_shape(frames_.front()))
      throw Error(ErrorCode::ShapeMismatch, "frames in a sequence must share one shape");
}

std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::left: return "left";
    case Verdict::right: return "right";
    case Verdict::tie: break;
  }
  return "tie";
}

std::optional<Verdict> verdict_from_string(std::string_view s) {
  if (s == "left") return Verdict::left;
  if (s == "right") return Verdict::right;
  if (s == "tie") return Verdict::tie;
  return std::nullopt;
}

std::string_view to_string(Direction d) {
  return d == Direction::higher_better ? "higher_better" : "lower_better";
}

std::optional<Direction> direction_from_string(std::string_view s) {
  if (s == "higher_better") return Direction::higher_better;
  if (s == "lower_better") return Direction::lower_better;
  return std::nullopt;
}

// --- JSON -----------------------------------------------------------------

namespace {

template <typename T>
T required(const nlohmann::json& j, const char* key) {
  if (!j.is_object() || !j.contains(key))
    throw Error(ErrorCode::SchemaError, std::string("missing key '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorCode::SchemaError, std::string("bad value for key '") + key + "'");
  }
}

}  // namespace

void to_json(nlohmann::json& j, const AspectScores& s) {
  j = nlohmann::json::object();
  for (Aspect a : kAllAspects) j[std::string(aspect_key(a))] = s[a];
}

void from_json(const nlohmann::json& j, AspectScores& s) {
  for (Aspect a : kAllAspects) {
    const double v = required<double>(j, std::string(aspect_key(a)).c_str());
    if (!std::isfinite(v) || v < 1.0 || v > 4.0)
      throw Error(ErrorCode::SchemaError,
                  std::string("score '") + std::string(aspect_key(a)) + "' outside [1, 4]", a);
    s[a] = v;
  }
}

void to_json(nlohmann::json& j, const VideoRecord& r) {
  j = nlohmann::json{{"id", r.id},         {"model_name", r.model_name},
                     {"prompt", r.prompt}, {"media_path", r.media_path},
                     {"fps", r.fps},       {"width", r.width},
                     {"height", r.height}, {"duration_s", r.duration_s}};
}

void from_json(const nlohmann::json& j, VideoRecord& r) {
  r.id = required<std::string>(j, "id");
  if (r.id.empty()) throw Error(ErrorCode::SchemaError, "empty id");
  r.model_name = required<std::string>(j, "model_name");
  r.prompt = required<std::string>(j, "prompt");
  r.media_path = required<std::string>(j, "media_path");
  r.fps = required<int>(j, "fps");
  r.width = required<int>(j, "width");
  r.height = required<int>(j, "height");
  r.duration_s = required<double>(j, "duration_s");
}

void to_json(nlohmann::json& j, const LabeledRecord& r) {
  to_json(j, r.record);
  if (r.scores) j["scores"] = *r.scores;
}

void from_json(const nlohmann::json& j, LabeledRecord& r) {
  from_json(j, r.record);
  r.scores.reset();
  if (j.contains("scores") && !j.at("scores").is_null()) r.scores = j.at("scores").get<AspectScores>();
}

void to_json(nlohmann::json& j, const PreferencePair& p) {
  j = nlohmann::json{{"left", p.left}, {"right", p.right}, {"verdict", to_string(p.verdict)}};
  if (!p.group.empty()) j["group"] = p.group;
}

void from_json(const nlohmann::json& j, PreferencePair& p) {
  p.left = required<std::string>(j, "left");
  p.right = required<std::string>(j, "right");
  if (p.left == p.right) throw Error(ErrorCode::SchemaError, "preference pair compares '" + p.left + "' with itself");
  auto v = verdict_from_string(required<std::string>(j, "verdict"));
  if (!v) throw Error(ErrorCode::SchemaError, "verdict must be left, right or tie");
  p.verdict = *v;
  p.group = j.contains("group") ? required<std::string>(j, "group") : std::string{};
}

void to_json(nlohmann::json& j, const MetricValue& m) {
  j = nlohmann::json{{"metric_name", m.metric_name}, {"direction", to_string(m.direction)}, {"raw", m.raw}};
}

void from_json(const nlohmann::json& j, MetricValue& m) {
  m.metric_name = required<std::string>(j, "metric_name");
  auto d = direction_from_string(required<std::string>(j, "direction"));
  if (!d) throw Error(ErrorCode::SchemaError, "direction must be higher_better or lower_better");
  m.direction = *d;
  m.raw = required<double>(j, "raw");
}

}  // namespace videoeval
