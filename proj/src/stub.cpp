#include "videoeval/stub.hpp"

#include <cmath>
#include <cstring>
#include <random>

#include "videoeval/scorer.hpp"
#include "videoeval/util.hpp"

namespace videoeval::stub {

namespace {

std::mt19937_64 seeded_rng(std::string_view bytes, std::uint64_t seed) {
  std::string material = std::to_string(seed);
  material += ':';
  material += bytes;
  const std::string digest = sha256_hex(material);
  return std::mt19937_64(std::stoull(digest.substr(0, 16), nullptr, 16));
}

double unit_draw(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace

metrics::Embedding hashed_unit_vector(std::string_view bytes, std::uint64_t seed, std::size_t dim) {
  auto rng = seeded_rng(bytes, seed);
  metrics::Embedding v(dim);
  double norm = 0.0;
  for (double& x : v) {
    x = 0.05 + unit_draw(rng);
    norm += x * x;
  }
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return v;
}

std::string frame_bytes(const Frame& frame) {
  const auto u8 = frame.to_u8();
  std::string out = std::to_string(frame.width) + "x" + std::to_string(frame.height) + "x" +
                    std::to_string(frame.channels) + ":";
  out.append(reinterpret_cast<const char*>(u8.data()), u8.size());
  return out;
}

std::vector<metrics::Embedding> StubEmbeddingProvider::embed_frames(std::span<const Frame> frames) {
  std::vector<metrics::Embedding> out;
  out.reserve(frames.size());
  for (const Frame& f : frames) out.push_back(hashed_unit_vector(frame_bytes(f), seed_, dim_));
  return out;
}

metrics::Embedding StubEmbeddingProvider::embed_text(std::string_view text) {
  return hashed_unit_vector(std::string("text:") + std::string(text), seed_, dim_);
}

metrics::Embedding StubEmbeddingProvider::embed_video(const FrameSequence& frames) {
  std::string all = "video:";
  for (const Frame& f : frames) all += frame_bytes(f);
  return hashed_unit_vector(all, seed_, dim_);
}

std::vector<double> StubIqaProvider::score_frames(std::span<const Frame> frames) {
  std::vector<double> out;
  out.reserve(frames.size());
  for (const Frame& f : frames) {
    auto rng = seeded_rng(frame_bytes(f), seed_);
    out.push_back(100.0 * unit_draw(rng));
  }
  return out;
}

AspectScores sampled_scores(std::string_view key, std::uint64_t seed) {
  auto rng = seeded_rng(key, seed);
  AspectScores s;
  for (Aspect a : kAllAspects) s[a] = 1.0 + static_cast<double>(uniform_index(rng, 4));
  return s;
}

AspectScores sampled_regression_scores(std::string_view key, std::uint64_t seed) {
  auto rng = seeded_rng(key, seed);
  AspectScores s;
  for (Aspect a : kAllAspects) s[a] = 1.0 + 3.0 * unit_draw(rng);
  return s;
}

std::string generative_reply(const AspectScores& scores) {
  return "Here are the scores for this video:\n" + scoring::render_generative(scores);
}

protocol::InProcessTransport::Handler service_handler(std::uint64_t seed, std::size_t dim) {
  return [seed, dim](const nlohmann::json& body) -> nlohmann::json {
    try {
      const auto req = protocol::Request::from_json(body);
      std::vector<Frame> frames;
      if (req.frames)
        for (const auto& f : *req.frames) frames.push_back(protocol::decode_frame(f));

      protocol::Response resp;
      switch (req.task) {
        case protocol::Task::score: {
          std::string key = *req.prompt;
          for (const Frame& f : frames) key += frame_bytes(f);
          if (*req.mode == ScoringMode::generative) {
            resp.text = generative_reply(sampled_scores(key, seed));
          } else {
            const auto arr = sampled_regression_scores(key, seed).to_array();
            resp.scores = std::vector<double>(arr.begin(), arr.end());
          }
          break;
        }
        case protocol::Task::embed_frames:
          resp.vectors = StubEmbeddingProvider(seed, dim).embed_frames(frames);
          break;
        case protocol::Task::embed_text:
          resp.vectors = std::vector<metrics::Embedding>{StubEmbeddingProvider(seed, dim).embed_text(*req.prompt)};
          break;
        case protocol::Task::embed_video:
          resp.vectors =
              std::vector<metrics::Embedding>{StubEmbeddingProvider(seed, dim).embed_video(FrameSequence(frames, 1))};
          break;
        case protocol::Task::iqa:
          resp.values = StubIqaProvider(seed).score_frames(frames);
          break;
      }
      return resp.to_json();
    } catch (const std::exception& e) {
      return nlohmann::json{{"error", e.what()}};
    }
  };
}

}  // namespace videoeval::stub
