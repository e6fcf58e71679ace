#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "videoeval/aspect.hpp"
#include "videoeval/error.hpp"

namespace videoeval {

/// Discrete 1..4 rating: 1 Bad, 2 Average, 3 Good, 4 Perfect.
class RatingLabel {
 public:
  static constexpr int kMin = 1;
  static constexpr int kMax = 4;

  explicit RatingLabel(int value);

  static constexpr bool is_valid(int value) { return value >= kMin && value <= kMax; }

  int value() const noexcept { return value_; }
  std::string_view name() const;

  friend auto operator<=>(const RatingLabel&, const RatingLabel&) = default;

 private:
  int value_;
};

/// Per-aspect scores in [1, 4]. Generative and human scores are integer
/// valued, regression scores are not; both live in the same type.
struct AspectScores {
  double vq = 1.0;
  double tc = 1.0;
  double dd = 1.0;
  double tva = 1.0;
  double fc = 1.0;

  double& operator[](Aspect a);
  double operator[](Aspect a) const;

  std::array<double, kAspectCount> to_array() const { return {vq, tc, dd, tva, fc}; }
  static AspectScores from_array(const std::array<double, kAspectCount>& v);

  bool in_range() const;
  bool is_integral() const;

  friend bool operator==(const AspectScores&, const AspectScores&) = default;
};

/// One decoded frame. Intensities are normalized to [0, 1] and stored
/// interleaved (row-major, channel fastest).
struct Frame {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<float> pixels;

  Frame() = default;
  Frame(int w, int h, int c);

  static Frame filled(int w, int h, int c, float value);
  static Frame from_u8(int w, int h, int c, std::span<const std::uint8_t> bytes);

  std::vector<std::uint8_t> to_u8() const;

  std::size_t sample_count() const { return pixels.size(); }
  float& at(int x, int y, int c = 0) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  float at(int x, int y, int c = 0) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  bool same_shape(const Frame& other) const {
    return width == other.width && height == other.height && channels == other.channels;
  }
};

/// Non-empty run of equally shaped frames at a fixed integer frame rate.
class FrameSequence {
 public:
  FrameSequence(std::vector<Frame> frames, int fps);

  const std::vector<Frame>& frames() const noexcept { return frames_; }
  const Frame& operator[](std::size_t i) const { return frames_[i]; }
  std::size_t size() const noexcept { return frames_.size(); }
  int fps() const noexcept { return fps_; }
  int width() const { return frames_.front().width; }
  int height() const { return frames_.front().height; }
  int channels() const { return frames_.front().channels; }

  auto begin() const { return frames_.begin(); }
  auto end() const { return frames_.end(); }

 private:
  std::vector<Frame> frames_;
  int fps_;
};

struct VideoRecord {
  std::string id;
  std::string model_name;
  std::string prompt;
  std::string media_path;
  int fps = 0;
  int width = 0;
  int height = 0;
  double duration_s = 0.0;

  friend bool operator==(const VideoRecord&, const VideoRecord&) = default;
};

/// A video record plus optional per-aspect scores (human labels or model
/// predictions, depending on where the file came from).
struct LabeledRecord {
  VideoRecord record;
  std::optional<AspectScores> scores;

  friend bool operator==(const LabeledRecord&, const LabeledRecord&) = default;
};

enum class Verdict { left, right, tie };

std::string_view to_string(Verdict v);
std::optional<Verdict> verdict_from_string(std::string_view s);

struct PreferencePair {
  std::string left;
  std::string right;
  Verdict verdict = Verdict::tie;
  // Optional sub-benchmark key (e.g. one of the VBench dimensions).
  std::string group;

  friend bool operator==(const PreferencePair&, const PreferencePair&) = default;
};

enum class Direction { higher_better, lower_better };

std::string_view to_string(Direction d);
std::optional<Direction> direction_from_string(std::string_view s);

struct MetricValue {
  std::string metric_name;
  Direction direction = Direction::higher_better;
  double raw = 0.0;

  friend bool operator==(const MetricValue&, const MetricValue&) = default;
};

// JSON mapping. Field names follow the JSON Lines record schema.
void to_json(nlohmann::json& j, const AspectScores& s);
void from_json(const nlohmann::json& j, AspectScores& s);
void to_json(nlohmann::json& j, const VideoRecord& r);
void from_json(const nlohmann::json& j, VideoRecord& r);
void to_json(nlohmann::json& j, const LabeledRecord& r);
void from_json(const nlohmann::json& j, LabeledRecord& r);
void to_json(nlohmann::json& j, const PreferencePair& p);
void from_json(const nlohmann::json& j, PreferencePair& p);
void to_json(nlohmann::json& j, const MetricValue& m);
void from_json(const nlohmann::json& j, MetricValue& m);

}  // namespace videoeval
