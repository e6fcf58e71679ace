#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "videoeval/core.hpp"
#include "videoeval/metrics.hpp"
#include "videoeval/protocol.hpp"

// Deterministic in-process providers. Everything here is a pure function of
// the input bytes and the seed, so runs need no model assets.
namespace videoeval::stub {

// Unit vector with non-negative components derived from SHA-256(seed, bytes),
// so cosine similarities fall in [0, 1].
metrics::Embedding hashed_unit_vector(std::string_view bytes, std::uint64_t seed, std::size_t dim);

std::string frame_bytes(const Frame& frame);

class StubEmbeddingProvider : public metrics::EmbeddingProvider {
 public:
  explicit StubEmbeddingProvider(std::uint64_t seed = 0, std::size_t dim = 32) : seed_(seed), dim_(dim) {}
  std::vector<metrics::Embedding> embed_frames(std::span<const Frame> frames) override;
  metrics::Embedding embed_text(std::string_view text) override;
  metrics::Embedding embed_video(const FrameSequence& frames) override;

 private:
  std::uint64_t seed_;
  std::size_t dim_;
};

// Per-frame pseudo IQA values in [0, 100).
class StubIqaProvider : public metrics::IqaProvider {
 public:
  explicit StubIqaProvider(std::uint64_t seed = 0) : seed_(seed) {}
  std::vector<double> score_frames(std::span<const Frame> frames) override;

 private:
  std::uint64_t seed_;
};

// Integer 1..4 scores for each aspect, seeded by `key`.
AspectScores sampled_scores(std::string_view key, std::uint64_t seed);

// Real-valued scores in [1, 4].
AspectScores sampled_regression_scores(std::string_view key, std::uint64_t seed);

// Model reply in the template's output layout, with a short preamble.
std::string generative_reply(const AspectScores& scores);

// Wire-protocol handler answering every task; malformed requests get an
// {"error": ...} document instead of an exception.
protocol::InProcessTransport::Handler service_handler(std::uint64_t seed = 0, std::size_t dim = 32);

}  // namespace videoeval::stub
