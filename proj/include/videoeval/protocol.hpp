#pragma once

#include <chrono>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "videoeval/core.hpp"
#include "videoeval/metrics.hpp"

namespace videoeval {

enum class ScoringMode { generative, regression };

std::string_view to_string(ScoringMode m);
std::optional<ScoringMode> scoring_mode_from_string(std::string_view s);

}  // namespace videoeval

namespace videoeval::protocol {

enum class Task { score, embed_frames, embed_text, embed_video, iqa };

std::string_view to_string(Task t);
std::optional<Task> task_from_string(std::string_view s);

// Frames travel as base64-encoded PNG (8-bit, gray or RGB).
std::string encode_png(const Frame& frame);
Frame decode_png(std::string_view png);
std::string base64_encode(std::string_view bytes);
std::string base64_decode(std::string_view text);
std::string encode_frame(const Frame& frame);
Frame decode_frame(std::string_view encoded);

struct Request {
  Task task = Task::score;
  std::optional<std::string> prompt;
  std::optional<std::vector<std::string>> frames;  // encoded frames
  std::optional<ScoringMode> mode;

  nlohmann::json to_json() const;
  /// Validates field types and the per-task required fields; throws SchemaError.
  static Request from_json(const nlohmann::json& j);
};

struct Response {
  std::optional<std::string> text;
  std::optional<std::vector<double>> scores;
  std::optional<std::vector<std::vector<double>>> vectors;
  std::optional<std::vector<double>> values;
  std::optional<std::string> error;

  nlohmann::json to_json() const;
  static Response from_json(const nlohmann::json& j);
};

Request make_request(Task task, std::span<const Frame> frames = {},
                     std::optional<std::string> prompt = std::nullopt,
                     std::optional<ScoringMode> mode = std::nullopt);

class Transport {
 public:
  virtual ~Transport() = default;
  /// Sends one request. Transport failures, malformed responses and
  /// {"error": ...} replies all surface as Error(ProviderError).
  virtual Response call(const Request& request) = 0;
  /// Stable identifier of the endpoint, used in cache fingerprints.
  virtual std::string endpoint() const = 0;
};

struct HttpOptions {
  std::chrono::milliseconds timeout{30000};
  int max_retries = 2;
  std::chrono::milliseconds initial_backoff{200};
};

/// POSTs the JSON request to `url` (http://host:port/path).
class HttpTransport : public Transport {
 public:
  explicit HttpTransport(std::string url, HttpOptions options = {});
  Response call(const Request& request) override;
  std::string endpoint() const override { return url_; }

 private:
  std::string url_;
  std::string origin_;
  std::string path_;
  HttpOptions options_;
};

/// Routes requests through JSON serialization to an in-process handler.
class InProcessTransport : public Transport {
 public:
  using Handler = std::function<nlohmann::json(const nlohmann::json&)>;
  InProcessTransport(std::string name, Handler handler);
  Response call(const Request& request) override;
  std::string endpoint() const override { return "inproc:" + name_; }

 private:
  std::string name_;
  Handler handler_;
};

struct ProviderOptions {
  std::size_t expected_dim = 0;  // 0 accepts any consistent dimension
  std::size_t batch_size = 0;    // frames per request, 0 = all at once
  std::size_t max_in_flight = 1;
};

class RemoteEmbeddingProvider : public metrics::EmbeddingProvider {
 public:
  RemoteEmbeddingProvider(std::shared_ptr<Transport> transport, ProviderOptions options = {});

  std::vector<metrics::Embedding> embed_frames(std::span<const Frame> frames) override;
  metrics::Embedding embed_text(std::string_view text) override;
  metrics::Embedding embed_video(const FrameSequence& frames) override;

 private:
  metrics::Embedding single_vector(const Response& r) const;
  std::shared_ptr<Transport> transport_;
  ProviderOptions options_;
};

class RemoteIqaProvider : public metrics::IqaProvider {
 public:
  RemoteIqaProvider(std::shared_ptr<Transport> transport, ProviderOptions options = {});
  std::vector<double> score_frames(std::span<const Frame> frames) override;

 private:
  std::shared_ptr<Transport> transport_;
  ProviderOptions options_;
};

}  // namespace videoeval::protocol
