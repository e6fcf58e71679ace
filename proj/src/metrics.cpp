#include "videoeval/metrics.hpp"

#include <cmath>
#include <numeric>

#include "videoeval/pipeline.hpp"

namespace videoeval::metrics {

namespace {

constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

void require_same_shape(const Frame& a, const Frame& b) {
  if (!a.same_shape(b))
    throw Error(ErrorCode::ShapeMismatch, std::to_string(a.width) + "x" + std::to_string(a.height) + "x" +
                                              std::to_string(a.channels) + " vs " + std::to_string(b.width) +
                                              "x" + std::to_string(b.height) + "x" + std::to_string(b.channels));
}

void require_pairs(const FrameSequence& frames) {
  if (frames.size() < 2) throw Error(ErrorCode::TooFewFrames, "need at least 2 frames");
}

// Runs a provider call, mapping anything it throws onto ProviderError.
template <typename F>
auto call_provider(F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ProviderError) throw;
    throw Error(ErrorCode::ProviderError, e.what());
  } catch (const std::exception& e) {
    throw Error(ErrorCode::ProviderError, e.what());
  }
}

void check_embedding(const Embedding& e, std::size_t expected_dim) {
  if (e.empty()) throw Error(ErrorCode::ProviderError, "empty embedding");
  if (expected_dim != 0 && e.size() != expected_dim)
    throw Error(ErrorCode::ProviderError, "embedding dimension " + std::to_string(e.size()) + " != " +
                                              std::to_string(expected_dim));
  for (double v : e)
    if (!std::isfinite(v)) throw Error(ErrorCode::ProviderError, "non-finite embedding entry");
}

double provider_cosine(const Embedding& a, const Embedding& b) {
  try {
    return cosine_similarity(a, b);
  } catch (const Error& e) {
    throw Error(ErrorCode::ProviderError, e.what());
  }
}

}  // namespace

std::vector<double> luma(const Frame& frame) {
  const std::size_t n = static_cast<std::size_t>(frame.width) * frame.height;
  std::vector<double> y(n);
  if (frame.channels == 1) {
    for (std::size_t i = 0; i < n; ++i) y[i] = frame.pixels[i];
    return y;
  }
  for (std::size_t i = 0; i < n; ++i) {
    const float* p = &frame.pixels[i * 3];
    y[i] = 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2];
  }
  return y;
}

double ssim(const Frame& a, const Frame& b) {
  require_same_shape(a, b);
  const auto ya = luma(a);
  const auto yb = luma(b);
  const auto n = static_cast<double>(ya.size());

  double mu_a = 0.0;
  double mu_b = 0.0;
  for (std::size_t i = 0; i < ya.size(); ++i) {
    mu_a += ya[i];
    mu_b += yb[i];
  }
  mu_a /= n;
  mu_b /= n;

  double var_a = 0.0;
  double var_b = 0.0;
  double cov = 0.0;
  for (std::size_t i = 0; i < ya.size(); ++i) {
    const double da = ya[i] - mu_a;
    const double db = yb[i] - mu_b;
    var_a += da * da;
    var_b += db * db;
    cov += da * db;
  }
  var_a /= n;
  var_b /= n;
  cov /= n;

  return ((2.0 * mu_a * mu_b + kC1) * (2.0 * cov + kC2)) /
         ((mu_a * mu_a + mu_b * mu_b + kC1) * (var_a + var_b + kC2));
}

double mse(const Frame& a, const Frame& b) {
  require_same_shape(a, b);
  double sum = 0.0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    const double d = static_cast<double>(a.pixels[i]) - b.pixels[i];
    sum += d * d;
  }
  return sum / static_cast<double>(a.pixels.size());
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty())
    throw Error(ErrorCode::InvalidArgument, "cosine needs equal-length non-empty vectors");
  const double dot = std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
  const double na = std::sqrt(std::inner_product(a.begin(), a.end(), a.begin(), 0.0));
  const double nb = std::sqrt(std::inner_product(b.begin(), b.end(), b.begin(), 0.0));
  if (na == 0.0 || nb == 0.0) throw Error(ErrorCode::InvalidArgument, "cosine of a zero vector");
  return dot / (na * nb);
}

MetricValue ssim_sim(const FrameSequence& frames) {
  require_pairs(frames);
  double sum = 0.0;
  for (std::size_t i = 0; i + 1 < frames.size(); ++i) sum += ssim(frames[i], frames[i + 1]);
  return {std::string(kSsimSim), Direction::higher_better, sum / static_cast<double>(frames.size() - 1)};
}

MetricValue embed_temporal_sim(const FrameSequence& frames, EmbeddingProvider& provider,
                               std::string_view metric_name) {
  require_pairs(frames);
  const auto embeddings = call_provider([&] { return provider.embed_frames(frames.frames()); });
  if (embeddings.size() != frames.size())
    throw Error(ErrorCode::ProviderError, "provider returned " + std::to_string(embeddings.size()) +
                                              " embeddings for " + std::to_string(frames.size()) + " frames");
  for (const auto& e : embeddings) check_embedding(e, embeddings.front().size());
  double sum = 0.0;
  for (std::size_t i = 0; i + 1 < embeddings.size(); ++i) sum += provider_cosine(embeddings[i], embeddings[i + 1]);
  return {std::string(metric_name), Direction::higher_better, sum / static_cast<double>(embeddings.size() - 1)};
}

DynamicScores dynamic_scores(const FrameSequence& frames, int n) {
  const auto sampled = pipeline::uniform_sample(frames, n);
  double mse_sum = 0.0;
  double ssim_sum = 0.0;
  for (std::size_t i = 0; i + 1 < sampled.size(); ++i) {
    mse_sum += mse(sampled[i], sampled[i + 1]);
    ssim_sum += ssim(sampled[i], sampled[i + 1]);
  }
  const auto pairs = static_cast<double>(sampled.size() - 1);
  return {{std::string(kMseDynUnit), Direction::higher_better, mse_sum / pairs},
          {std::string(kSsimDyn), Direction::lower_better, ssim_sum / pairs}};
}

MetricValue text_frame_alignment(const FrameSequence& frames, std::string_view prompt, EmbeddingProvider& provider,
                                 std::string_view metric_name) {
  const Embedding text = call_provider([&] { return provider.embed_text(prompt); });
  check_embedding(text, 0);
  const auto embeddings = call_provider([&] { return provider.embed_frames(frames.frames()); });
  if (embeddings.size() != frames.size())
    throw Error(ErrorCode::ProviderError, "provider returned " + std::to_string(embeddings.size()) +
                                              " embeddings for " + std::to_string(frames.size()) + " frames");
  double sum = 0.0;
  for (const auto& e : embeddings) {
    check_embedding(e, text.size());
    sum += provider_cosine(e, text);
  }
  return {std::string(metric_name), Direction::higher_better, sum / static_cast<double>(embeddings.size())};
}

MetricValue text_video_alignment(const FrameSequence& frames, std::string_view prompt, EmbeddingProvider& provider,
                                 std::string_view metric_name) {
  const Embedding text = call_provider([&] { return provider.embed_text(prompt); });
  check_embedding(text, 0);
  const Embedding video = call_provider([&] { return provider.embed_video(frames); });
  check_embedding(video, text.size());
  return {std::string(metric_name), Direction::higher_better, provider_cosine(video, text)};
}

MetricValue iqa_video_score(const FrameSequence& frames, IqaProvider& provider, std::string_view metric_name) {
  const auto values = call_provider([&] { return provider.score_frames(frames.frames()); });
  if (values.size() != frames.size())
    throw Error(ErrorCode::ProviderError, "provider returned " + std::to_string(values.size()) +
                                              " scores for " + std::to_string(frames.size()) + " frames");
  double sum = 0.0;
  for (double v : values) {
    if (!std::isfinite(v)) throw Error(ErrorCode::ProviderError, "non-finite quality score");
    sum += v;
  }
  return {std::string(metric_name), Direction::lower_better, sum / static_cast<double>(values.size())};
}

}  // namespace videoeval::metrics
