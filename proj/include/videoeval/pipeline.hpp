#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "videoeval/core.hpp"

namespace videoeval::pipeline {

struct PipelineConfig {
  int target_fps = 8;
  int sample_count_for_dynamics = 4;
  double static_ssim_min = 0.995;
  double static_mse_max = 1e-4;  // on [0, 1] intensities
  int prompt_min_words = 5;
  int prompt_max_words = 100;

  void validate() const;
};

void to_json(nlohmann::json& j, const PipelineConfig& c);
void from_json(const nlohmann::json& j, PipelineConfig& c);

// Raw decode result: frames at whatever rate the source was encoded.
struct DecodedVideo {
  std::vector<Frame> frames;
  int source_fps = 0;
};

class FrameDecoder {
 public:
  virtual ~FrameDecoder() = default;
  // Throws Error(UnreadableMedia) when the locator cannot be decoded.
  virtual DecodedVideo decode(const std::string& locator) = 0;
  // Single-threaded decoders get their calls serialized by the harness.
  virtual bool thread_safe() const { return true; }
};

class FrameInterpolator {
 public:
  virtual ~FrameInterpolator() = default;
  virtual FrameSequence interpolate(const FrameSequence& source, int target_fps) = 0;
};

class NsfwClassifier {
 public:
  virtual ~NsfwClassifier() = default;
  virtual bool flags(std::string_view prompt) = 0;
};

/// Indices kept when reducing `n` frames from `src_fps` to `dst_fps`: output
/// frame j is input round(j * src / dst), for j < floor(n * dst / src).
std::vector<std::size_t> downsample_indices(std::size_t n, int src_fps, int dst_fps);
FrameSequence downsample_fps(const FrameSequence& frames, int dst_fps);

FrameSequence crop_center(const FrameSequence& frames, int target_w, int target_h);

/// round(i * (len - 1) / (n - 1)) for i in [0, n).
std::vector<std::size_t> uniform_sample_indices(std::size_t len, int n);
std::vector<Frame> uniform_sample(const FrameSequence& frames, int n);

struct StaticCheck {
  double mean_ssim = 0.0;
  double mean_mse = 0.0;
  bool is_static = false;
};

StaticCheck static_check(const FrameSequence& frames, const PipelineConfig& config);
bool is_static(const FrameSequence& frames, const PipelineConfig& config);

enum class PromptRejection { too_short, too_long, nsfw };

std::string_view to_string(PromptRejection r);

struct PromptDecision {
  std::size_t word_count = 0;
  std::optional<PromptRejection> rejection;

  bool accepted() const { return !rejection.has_value(); }
};

std::size_t count_words(std::string_view text);
PromptDecision filter_prompt(std::string_view prompt, const PipelineConfig& config,
                             NsfwClassifier* nsfw = nullptr);

/// Decode `record` and bring it to `config.target_fps`.
FrameSequence extract_frames(const VideoRecord& record, const PipelineConfig& config,
                             FrameDecoder& decoder, FrameInterpolator* interpolator = nullptr);

// --- subprocess hooks ------------------------------------------------------
//
// Raw frame stream used on hook stdin/stdout:
//   "VFRAMES <width> <height> <channels> <fps> <count>\n"
// followed by count * width * height * channels bytes, 8-bit interleaved.

std::string encode_raw_frames(const std::vector<Frame>& frames, int fps);
DecodedVideo decode_raw_frames(std::string_view bytes);

/// Runs `command... <locator>` and reads a raw frame stream from stdout.
class SubprocessDecoder : public FrameDecoder {
 public:
  explicit SubprocessDecoder(std::vector<std::string> command, bool thread_safe = true);
  DecodedVideo decode(const std::string& locator) override;
  bool thread_safe() const override { return thread_safe_; }

 private:
  std::vector<std::string> command_;
  bool thread_safe_;
};

/// Runs `command... <target_fps>` with a raw frame stream on stdin and
/// reads the interpolated stream back from stdout.
class SubprocessInterpolator : public FrameInterpolator {
 public:
  explicit SubprocessInterpolator(std::vector<std::string> command);
  FrameSequence interpolate(const FrameSequence& source, int target_fps) override;

 private:
  std::vector<std::string> command_;
};

/// Runs `command...` with the prompt on stdin. Output "1", "true" or "nsfw"
/// (case-insensitive) flags the prompt.
class SubprocessNsfwClassifier : public NsfwClassifier {
 public:
  explicit SubprocessNsfwClassifier(std::vector<std::string> command);
  bool flags(std::string_view prompt) override;

 private:
  std::vector<std::string> command_;
};

}  // namespace videoeval::pipeline
