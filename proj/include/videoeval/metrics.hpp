#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "videoeval/core.hpp"

namespace videoeval::metrics {

// Canonical metric names, shared with the discretization rule file.
inline constexpr std::string_view kPiqe = "PIQE";
inline constexpr std::string_view kBrisque = "BRISQUE";
inline constexpr std::string_view kClipSim = "CLIP-sim";
inline constexpr std::string_view kDinoSim = "DINO-sim";
inline constexpr std::string_view kSsimSim = "SSIM-sim";
inline constexpr std::string_view kMseDyn = "MSE-dyn";            // squared 8-bit units
inline constexpr std::string_view kMseDynUnit = "MSE-dyn-unit";   // squared [0, 1] units
inline constexpr std::string_view kSsimDyn = "SSIM-dyn";
inline constexpr std::string_view kClipScore = "CLIP-Score";
inline constexpr std::string_view kXClipScore = "X-CLIP-Score";

// Factor converting an MSE on [0, 1] intensities to squared 8-bit units.
inline constexpr double kEightBitMseScale = 255.0 * 255.0;

using Embedding = std::vector<double>;

/// Frame/text/video encoder behind a service (CLIP, DINO, X-CLIP, ...).
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::vector<Embedding> embed_frames(std::span<const Frame> frames) = 0;
  virtual Embedding embed_text(std::string_view text) = 0;
  virtual Embedding embed_video(const FrameSequence& frames) = 0;
};

/// No-reference image quality scorer (PIQE, BRISQUE, ...). Lower is better.
class IqaProvider {
 public:
  virtual ~IqaProvider() = default;
  virtual std::vector<double> score_frames(std::span<const Frame> frames) = 0;
};

/// Rec. 601 luma for 3-channel frames; single-channel frames pass through.
std::vector<double> luma(const Frame& frame);

/// Global-statistics SSIM on luma with C1 = (0.01 L)^2, C2 = (0.03 L)^2, L = 1.
double ssim(const Frame& a, const Frame& b);

/// Mean squared difference over every pixel and channel.
double mse(const Frame& a, const Frame& b);

double cosine_similarity(std::span<const double> a, std::span<const double> b);

MetricValue ssim_sim(const FrameSequence& frames);

/// Mean cosine of adjacent frame embeddings. `metric_name` selects the
/// reported name, e.g. CLIP-sim or DINO-sim.
MetricValue embed_temporal_sim(const FrameSequence& frames, EmbeddingProvider& provider,
                               std::string_view metric_name = kClipSim);

struct DynamicScores {
  MetricValue mse_dyn;   // higher_better, [0, 1] intensity units
  MetricValue ssim_dyn;  // lower_better
};

DynamicScores dynamic_scores(const FrameSequence& frames, int n = 4);

MetricValue text_frame_alignment(const FrameSequence& frames, std::string_view prompt,
                                 EmbeddingProvider& provider, std::string_view metric_name = kClipScore);

MetricValue text_video_alignment(const FrameSequence& frames, std::string_view prompt,
                                 EmbeddingProvider& provider, std::string_view metric_name = kXClipScore);

MetricValue iqa_video_score(const FrameSequence& frames, IqaProvider& provider,
                            std::string_view metric_name = kPiqe);

}  // namespace videoeval::metrics
