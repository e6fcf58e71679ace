#include "videoeval/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>

#include "videoeval/metrics.hpp"
#include "videoeval/process.hpp"
#include "videoeval/util.hpp"

namespace videoeval::pipeline {

void PipelineConfig::validate() const {
  if (target_fps < 1) throw Error(ErrorCode::InvalidConfig, "target_fps must be >= 1");
  if (sample_count_for_dynamics < 2)
    throw Error(ErrorCode::InvalidConfig, "sample_count_for_dynamics must be >= 2");
  if (prompt_min_words < 0 || prompt_max_words < prompt_min_words)
    throw Error(ErrorCode::InvalidConfig, "prompt word bounds are inconsistent");
}

void to_json(nlohmann::json& j, const PipelineConfig& c) {
  j = nlohmann::json{{"target_fps", c.target_fps},
                     {"sample_count_for_dynamics", c.sample_count_for_dynamics},
                     {"static_ssim_min", c.static_ssim_min},
                     {"static_mse_max", c.static_mse_max},
                     {"prompt_min_words", c.prompt_min_words},
                     {"prompt_max_words", c.prompt_max_words}};
}

void from_json(const nlohmann::json& j, PipelineConfig& c) {
  c = PipelineConfig{};
  c.target_fps = j.value("target_fps", c.target_fps);
  c.sample_count_for_dynamics = j.value("sample_count_for_dynamics", c.sample_count_for_dynamics);
  c.static_ssim_min = j.value("static_ssim_min", c.static_ssim_min);
  c.static_mse_max = j.value("static_mse_max", c.static_mse_max);
  c.prompt_min_words = j.value("prompt_min_words", c.prompt_min_words);
  c.prompt_max_words = j.value("prompt_max_words", c.prompt_max_words);
  c.validate();
}

std::vector<std::size_t> downsample_indices(std::size_t n, int src_fps, int dst_fps) {
  if (dst_fps < 1 || src_fps < 1 || dst_fps > src_fps)
    throw Error(ErrorCode::InvalidTarget, "cannot downsample " + std::to_string(src_fps) + " fps to " +
                                              std::to_string(dst_fps) + " fps");
  const auto src = static_cast<std::uint64_t>(src_fps);
  const auto dst = static_cast<std::uint64_t>(dst_fps);
  const std::size_t m = static_cast<std::size_t>(n * dst / src);
  std::vector<std::size_t> indices;
  indices.reserve(m);
  for (std::uint64_t j = 0; j < m; ++j) {
    // floor(j * src / dst + 1/2) in integers; halves round up.
    const std::uint64_t idx = (2 * j * src + dst) / (2 * dst);
    indices.push_back(std::min<std::size_t>(idx, n - 1));
  }
  return indices;
}

FrameSequence downsample_fps(const FrameSequence& frames, int dst_fps) {
  const auto indices = downsample_indices(frames.size(), frames.fps(), dst_fps);
  if (indices.empty())
    throw Error(ErrorCode::TooFewFrames, "clip too short to keep any frame at " + std::to_string(dst_fps) + " fps");
  std::vector<Frame> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(frames[i]);
  return FrameSequence(std::move(out), dst_fps);
}

FrameSequence crop_center(const FrameSequence& frames, int target_w, int target_h) {
  if (target_w < 1 || target_h < 1)
    throw Error(ErrorCode::InvalidArgument, "crop size must be positive");
  if (target_w > frames.width() || target_h > frames.height())
    throw Error(ErrorCode::TargetExceedsSource,
                "crop " + std::to_string(target_w) + "x" + std::to_string(target_h) + " exceeds source " +
                    std::to_string(frames.width()) + "x" + std::to_string(frames.height()));
  const int x0 = (frames.width() - target_w) / 2;
  const int y0 = (frames.height() - target_h) / 2;
  const int c = frames.channels();
  std::vector<Frame> out;
  out.reserve(frames.size());
  for (const Frame& src : frames) {
    Frame dst(target_w, target_h, c);
    const std::size_t row = static_cast<std::size_t>(target_w) * c;
    for (int y = 0; y < target_h; ++y) {
      const float* from = &src.pixels[(static_cast<std::size_t>(y + y0) * src.width + x0) * c];
      std::copy_n(from, row, &dst.pixels[static_cast<std::size_t>(y) * row]);
    }
    out.push_back(std::move(dst));
  }
  return FrameSequence(std::move(out), frames.fps());
}

std::vector<std::size_t> uniform_sample_indices(std::size_t len, int n) {
  if (n < 2) throw Error(ErrorCode::InvalidArgument, "uniform sampling needs n >= 2");
  if (len < static_cast<std::size_t>(n))
    throw Error(ErrorCode::TooFewFrames,
                "need " + std::to_string(n) + " frames, have " + std::to_string(len));
  const auto span = static_cast<std::uint64_t>(len - 1);
  const auto steps = static_cast<std::uint64_t>(n - 1);
  std::vector<std::size_t> indices;
  indices.reserve(static_cast<std::size_t>(n));
  for (std::uint64_t i = 0; i <= steps; ++i) indices.push_back((2 * i * span + steps) / (2 * steps));
  return indices;
}

std::vector<Frame> uniform_sample(const FrameSequence& frames, int n) {
  std::vector<Frame> out;
  for (std::size_t i : uniform_sample_indices(frames.size(), n)) out.push_back(frames[i]);
  return out;
}

StaticCheck static_check(const FrameSequence& frames, const PipelineConfig& config) {
  const auto sampled = uniform_sample(frames, config.sample_count_for_dynamics);
  StaticCheck check;
  for (std::size_t i = 0; i + 1 < sampled.size(); ++i) {
    check.mean_ssim += metrics::ssim(sampled[i], sampled[i + 1]);
    check.mean_mse += metrics::mse(sampled[i], sampled[i + 1]);
  }
  const auto pairs = static_cast<double>(sampled.size() - 1);
  check.mean_ssim /= pairs;
  check.mean_mse /= pairs;
  check.is_static = check.mean_ssim >= config.static_ssim_min && check.mean_mse <= config.static_mse_max;
  return check;
}

bool is_static(const FrameSequence& frames, const PipelineConfig& config) {
  return static_check(frames, config).is_static;
}

std::string_view to_string(PromptRejection r) {
  switch (r) {
    case PromptRejection::too_short: return "too_short";
    case PromptRejection::too_long: return "too_long";
    case PromptRejection::nsfw: break;
  }
  return "nsfw";
}

std::size_t count_words(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::size_t count = 0;
  for (std::string word; in >> word;) ++count;
  return count;
}

PromptDecision filter_prompt(std::string_view prompt, const PipelineConfig& config, NsfwClassifier* nsfw) {
  PromptDecision decision;
  decision.word_count = count_words(prompt);
  if (decision.word_count < static_cast<std::size_t>(config.prompt_min_words)) {
    decision.rejection = PromptRejection::too_short;
  } else if (decision.word_count > static_cast<std::size_t>(config.prompt_max_words)) {
    decision.rejection = PromptRejection::too_long;
  } else if (nsfw != nullptr && nsfw->flags(prompt)) {
    decision.rejection = PromptRejection::nsfw;
  }
  return decision;
}

FrameSequence extract_frames(const VideoRecord& record, const PipelineConfig& config, FrameDecoder& decoder,
                             FrameInterpolator* interpolator) {
  config.validate();
  DecodedVideo decoded = decoder.decode(record.media_path);
  if (decoded.frames.empty() || decoded.source_fps < 1)
    throw Error(ErrorCode::UnreadableMedia, "decoder returned no frames for '" + record.media_path + "'");
  FrameSequence source(std::move(decoded.frames), decoded.source_fps);

  if (source.fps() == config.target_fps) return source;
  if (source.fps() > config.target_fps) return downsample_fps(source, config.target_fps);

  if (interpolator == nullptr)
    throw Error(ErrorCode::NoInterpolatorConfigured,
                "'" + record.id + "' is " + std::to_string(source.fps()) + " fps, below the target " +
                    std::to_string(config.target_fps) + " fps");
  FrameSequence raised = interpolator->interpolate(source, config.target_fps);
  if (raised.fps() != config.target_fps)
    throw Error(ErrorCode::ProviderError, "interpolator returned " + std::to_string(raised.fps()) + " fps");
  return raised;
}

// --- subprocess hooks ------------------------------------------------------

namespace {

constexpr std::string_view kMagic = "VFRAMES";

int parse_int(std::string_view token) {
  int value = 0;
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc{} || ptr != token.data() + token.size())
    throw Error(ErrorCode::UnreadableMedia, "bad integer in frame stream header: '" + std::string(token) + "'");
  return value;
}

}  // namespace

std::string encode_raw_frames(const std::vector<Frame>& frames, int fps) {
  if (frames.empty()) throw Error(ErrorCode::InvalidArgument, "no frames to encode");
  const Frame& first = frames.front();
  std::string out = std::string(kMagic) + " " + std::to_string(first.width) + " " + std::to_string(first.height) +
                    " " + std::to_string(first.channels) + " " + std::to_string(fps) + " " +
                    std::to_string(frames.size()) + "\n";
  for (const Frame& f : frames) {
    const auto bytes = f.to_u8();
    out.append(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  }
  return out;
}

DecodedVideo decode_raw_frames(std::string_view bytes) {
  const std::size_t eol = bytes.find('\n');
  if (eol == std::string_view::npos) throw Error(ErrorCode::UnreadableMedia, "frame stream has no header");
  const auto fields = split(bytes.substr(0, eol), ' ');
  if (fields.size() != 6 || fields[0] != kMagic)
    throw Error(ErrorCode::UnreadableMedia, "malformed frame stream header");
  const int w = parse_int(fields[1]);
  const int h = parse_int(fields[2]);
  const int c = parse_int(fields[3]);
  const int fps = parse_int(fields[4]);
  const int count = parse_int(fields[5]);
  if (w < 1 || h < 1 || (c != 1 && c != 3) || fps < 1 || count < 1)
    throw Error(ErrorCode::UnreadableMedia, "frame stream header out of range");

  const std::size_t frame_bytes = static_cast<std::size_t>(w) * h * c;
  const std::string_view payload = bytes.substr(eol + 1);
  if (payload.size() != frame_bytes * static_cast<std::size_t>(count))
    throw Error(ErrorCode::UnreadableMedia, "frame stream payload has " + std::to_string(payload.size()) +
                                                " bytes, expected " + std::to_string(frame_bytes * count));
  DecodedVideo video;
  video.source_fps = fps;
  video.frames.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(payload.data()) + frame_bytes * i;
    video.frames.push_back(Frame::from_u8(w, h, c, {p, frame_bytes}));
  }
  return video;
}

SubprocessDecoder::SubprocessDecoder(std::vector<std::string> command, bool thread_safe)
    : command_(std::move(command)), thread_safe_(thread_safe) {
  if (command_.empty()) throw Error(ErrorCode::InvalidConfig, "decoder command is empty");
}

DecodedVideo SubprocessDecoder::decode(const std::string& locator) {
  auto argv = command_;
  argv.push_back(locator);
  ProcessResult result;
  try {
    result = run_process(argv);
  } catch (const std::runtime_error& e) {
    throw Error(ErrorCode::UnreadableMedia, e.what());
  }
  if (result.exit_code != 0)
    throw Error(ErrorCode::UnreadableMedia,
                "decoder exited with " + std::to_string(result.exit_code) + " for '" + locator + "'");
  return decode_raw_frames(result.stdout_data);
}

SubprocessInterpolator::SubprocessInterpolator(std::vector<std::string> command) : command_(std::move(command)) {
  if (command_.empty()) throw Error(ErrorCode::InvalidConfig, "interpolator command is empty");
}

FrameSequence SubprocessInterpolator::interpolate(const FrameSequence& source, int target_fps) {
  auto argv = command_;
  argv.push_back(std::to_string(target_fps));
  ProcessResult result;
  try {
    result = run_process(argv, encode_raw_frames(source.frames(), source.fps()));
  } catch (const std::runtime_error& e) {
    throw Error(ErrorCode::ProviderError, e.what());
  }
  if (result.exit_code != 0)
    throw Error(ErrorCode::ProviderError, "interpolator exited with " + std::to_string(result.exit_code));
  try {
    DecodedVideo out = decode_raw_frames(result.stdout_data);
    return FrameSequence(std::move(out.frames), out.source_fps);
  } catch (const Error& e) {
    throw Error(ErrorCode::ProviderError, std::string("interpolator output: ") + e.what());
  }
}

SubprocessNsfwClassifier::SubprocessNsfwClassifier(std::vector<std::string> command)
    : command_(std::move(command)) {
  if (command_.empty()) throw Error(ErrorCode::InvalidConfig, "nsfw command is empty");
}

bool SubprocessNsfwClassifier::flags(std::string_view prompt) {
  ProcessResult result;
  try {
    result = run_process(command_, prompt);
  } catch (const std::runtime_error& e) {
    throw Error(ErrorCode::ProviderError, e.what());
  }
  if (result.exit_code != 0)
    throw Error(ErrorCode::ProviderError, "nsfw classifier exited with " + std::to_string(result.exit_code));
  const std::string verdict = to_lower(trim(result.stdout_data));
  return verdict == "1" || verdict == "true" || verdict == "nsfw";
}

}  // namespace videoeval::pipeline
