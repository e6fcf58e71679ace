#include "videoeval/protocol.hpp"

#include <cmath>
#include <cstring>
#include <future>
#include <thread>

#include <httplib.h>
#include <openssl/evp.h>
#include <png.h>

namespace videoeval {

std::string_view to_string(ScoringMode m) { return m == ScoringMode::generative ? "generative" : "regression"; }

std::optional<ScoringMode> scoring_mode_from_string(std::string_view s) {
  if (s == "generative") return ScoringMode::generative;
  if (s == "regression") return ScoringMode::regression;
  return std::nullopt;
}

}  // namespace videoeval

namespace videoeval::protocol {

namespace {

[[noreturn]] void schema(const std::string& why) { throw Error(ErrorCode::SchemaError, "wire message: " + why); }

[[noreturn]] void provider(const std::string& why) { throw Error(ErrorCode::ProviderError, why); }

struct PngReadState {
  std::string_view data;
  std::size_t offset = 0;
};

void png_write_to_string(png_structp png, png_bytep data, png_size_t length) {
  auto* out = static_cast<std::string*>(png_get_io_ptr(png));
  out->append(reinterpret_cast<const char*>(data), length);
}

void png_read_from_view(png_structp png, png_bytep data, png_size_t length) {
  auto* state = static_cast<PngReadState*>(png_get_io_ptr(png));
  if (state->offset + length > state->data.size()) png_error(png, "truncated PNG");
  std::memcpy(data, state->data.data() + state->offset, length);
  state->offset += length;
}

template <typename T>
std::optional<T> optional_field(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    schema(std::string("field '") + key + "' has the wrong type");
  }
}

}  // namespace

std::string_view to_string(Task t) {
  switch (t) {
    case Task::score: return "score";
    case Task::embed_frames: return "embed_frames";
    case Task::embed_text: return "embed_text";
    case Task::embed_video: return "embed_video";
    case Task::iqa: break;
  }
  return "iqa";
}

std::optional<Task> task_from_string(std::string_view s) {
  for (Task t : {Task::score, Task::embed_frames, Task::embed_text, Task::embed_video, Task::iqa})
    if (to_string(t) == s) return t;
  return std::nullopt;
}

std::string encode_png(const Frame& frame) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (png == nullptr) throw std::runtime_error("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  std::string out;
  const std::vector<std::uint8_t> bytes = frame.to_u8();
  if (info == nullptr || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("PNG encoding failed");
  }
  png_set_write_fn(png, &out, png_write_to_string, nullptr);
  png_set_IHDR(png, info, static_cast<png_uint_32>(frame.width), static_cast<png_uint_32>(frame.height), 8,
               frame.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t stride = static_cast<std::size_t>(frame.width) * frame.channels;
  for (int y = 0; y < frame.height; ++y)
    png_write_row(png, const_cast<png_bytep>(bytes.data() + stride * static_cast<std::size_t>(y)));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

Frame decode_png(std::string_view data) {
  if (data.size() < 8 || png_sig_cmp(reinterpret_cast<png_const_bytep>(data.data()), 0, 8) != 0)
    schema("frame payload is not a PNG");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (png == nullptr) throw std::runtime_error("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  PngReadState state{data, 0};
  std::vector<std::uint8_t> bytes;
  int width = 0;
  int height = 0;
  int channels = 0;
  if (info == nullptr || setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    schema("corrupt PNG frame");
  }
  png_set_read_fn(png, &state, png_read_from_view);
  png_read_info(png, info);
  // Normalize to 8-bit gray or RGB.
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  png_read_update_info(png, info);
  width = static_cast<int>(png_get_image_width(png, info));
  height = static_cast<int>(png_get_image_height(png, info));
  channels = png_get_channels(png, info);
  if (channels != 1 && channels != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    schema("unsupported PNG channel layout");
  }
  const std::size_t stride = static_cast<std::size_t>(width) * channels;
  bytes.resize(stride * static_cast<std::size_t>(height));
  for (int y = 0; y < height; ++y) png_read_row(png, bytes.data() + stride * static_cast<std::size_t>(y), nullptr);
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return Frame::from_u8(width, height, channels, bytes);
}

std::string base64_encode(std::string_view bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3) + 1, '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(bytes.data()), static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::string base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) schema("base64 length is not a multiple of 4");
  std::string out(3 * (text.size() / 4) + 1, '\0');
  const int n = EVP_DecodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(text.data()), static_cast<int>(text.size()));
  if (n < 0) schema("invalid base64");
  std::size_t padding = 0;
  if (!text.empty() && text.back() == '=') ++padding;
  if (text.size() > 1 && text[text.size() - 2] == '=') ++padding;
  out.resize(static_cast<std::size_t>(n) - padding);
  return out;
}

std::string encode_frame(const Frame& frame) { return base64_encode(encode_png(frame)); }

Frame decode_frame(std::string_view encoded) { return decode_png(base64_decode(encoded)); }

nlohmann::json Request::to_json() const {
  nlohmann::json j{{"task", protocol::to_string(task)}};
  if (prompt) j["prompt"] = *prompt;
  if (frames) j["frames"] = *frames;
  if (mode) j["mode"] = videoeval::to_string(*mode);
  return j;
}

Request Request::from_json(const nlohmann::json& j) {
  if (!j.is_object()) schema("request is not an object");
  const auto task_name = optional_field<std::string>(j, "task");
  if (!task_name) schema("missing 'task'");
  const auto task = task_from_string(*task_name);
  if (!task) schema("unknown task '" + *task_name + "'");
  Request r;
  r.task = *task;
  r.prompt = optional_field<std::string>(j, "prompt");
  r.frames = optional_field<std::vector<std::string>>(j, "frames");
  if (const auto mode_name = optional_field<std::string>(j, "mode")) {
    r.mode = scoring_mode_from_string(*mode_name);
    if (!r.mode) schema("unknown mode '" + *mode_name + "'");
  }
  const bool needs_frames = r.task != Task::embed_text;
  if (needs_frames && (!r.frames || r.frames->empty())) schema(*task_name + " request needs frames");
  if ((r.task == Task::embed_text || r.task == Task::score) && !r.prompt) schema(*task_name + " request needs a prompt");
  if (r.task == Task::score && !r.mode) schema("score request needs a mode");
  return r;
}

nlohmann::json Response::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  if (text) j["text"] = *text;
  if (scores) j["scores"] = *scores;
  if (vectors) j["vectors"] = *vectors;
  if (values) j["values"] = *values;
  if (error) j["error"] = *error;
  return j;
}

Response Response::from_json(const nlohmann::json& j) {
  if (!j.is_object()) schema("response is not an object");
  Response r;
  r.text = optional_field<std::string>(j, "text");
  r.scores = optional_field<std::vector<double>>(j, "scores");
  r.vectors = optional_field<std::vector<std::vector<double>>>(j, "vectors");
  r.values = optional_field<std::vector<double>>(j, "values");
  r.error = optional_field<std::string>(j, "error");
  return r;
}

Request make_request(Task task, std::span<const Frame> frames, std::optional<std::string> prompt,
                     std::optional<ScoringMode> mode) {
  Request r;
  r.task = task;
  r.prompt = std::move(prompt);
  r.mode = mode;
  if (!frames.empty()) {
    std::vector<std::string> encoded;
    encoded.reserve(frames.size());
    for (const Frame& f : frames) encoded.push_back(encode_frame(f));
    r.frames = std::move(encoded);
  }
  return r;
}

namespace {

Response checked(const nlohmann::json& body, const std::string& endpoint) {
  Response r;
  try {
    r = Response::from_json(body);
  } catch (const Error& e) {
    provider(endpoint + ": " + e.what());
  }
  if (r.error) provider(endpoint + " replied with error: " + *r.error);
  return r;
}

}  // namespace

HttpTransport::HttpTransport(std::string url, HttpOptions options) : url_(std::move(url)), options_(options) {
  const std::string scheme = "http://";
  if (url_.rfind(scheme, 0) != 0) throw Error(ErrorCode::InvalidConfig, "provider URL must start with http://: " + url_);
  const std::size_t slash = url_.find('/', scheme.size());
  origin_ = url_.substr(0, slash);
  path_ = slash == std::string::npos ? "/" : url_.substr(slash);
}

Response HttpTransport::call(const Request& request) {
  const std::string body = request.to_json().dump();
  httplib::Client client(origin_);
  const auto seconds = std::chrono::duration_cast<std::chrono::seconds>(options_.timeout);
  const auto micros = std::chrono::duration_cast<std::chrono::microseconds>(options_.timeout - seconds);
  client.set_connection_timeout(seconds.count(), micros.count());
  client.set_read_timeout(seconds.count(), micros.count());
  client.set_write_timeout(seconds.count(), micros.count());

  std::string failure;
  auto backoff = options_.initial_backoff;
  for (int attempt = 0; attempt <= options_.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
    auto res = client.Post(path_, body, "application/json");
    if (!res) {
      failure = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500) {
      failure = "HTTP " + std::to_string(res->status);
      continue;
    }
    nlohmann::json parsed;
    try {
      parsed = nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::parse_error&) {
      provider(url_ + ": response is not JSON (HTTP " + std::to_string(res->status) + ")");
    }
    if (res->status != 200 && !(parsed.is_object() && parsed.contains("error")))
      provider(url_ + ": HTTP " + std::to_string(res->status));
    return checked(parsed, url_);
  }
  provider(url_ + ": " + failure);
}

InProcessTransport::InProcessTransport(std::string name, Handler handler)
    : name_(std::move(name)), handler_(std::move(handler)) {}

Response InProcessTransport::call(const Request& request) {
  nlohmann::json reply;
  try {
    reply = handler_(nlohmann::json::parse(request.to_json().dump()));
  } catch (const std::exception& e) {
    provider(endpoint() + ": " + e.what());
  }
  return checked(reply, endpoint());
}

namespace {

// Splits `frames` into batches and issues up to `max_in_flight` requests at a
// time; results are stitched back together in frame order.
template <typename Item, typename Extract>
std::vector<Item> batched_call(Transport& transport, Task task, std::span<const Frame> frames,
                               const ProviderOptions& options, Extract extract) {
  const std::size_t batch = options.batch_size == 0 ? std::max<std::size_t>(frames.size(), 1) : options.batch_size;
  std::vector<std::span<const Frame>> chunks;
  for (std::size_t i = 0; i < frames.size(); i += batch) chunks.push_back(frames.subspan(i, std::min(batch, frames.size() - i)));

  std::vector<std::vector<Item>> results(chunks.size());
  const std::size_t lanes = std::max<std::size_t>(options.max_in_flight, 1);
  for (std::size_t start = 0; start < chunks.size(); start += lanes) {
    std::vector<std::future<void>> wave;
    for (std::size_t c = start; c < std::min(chunks.size(), start + lanes); ++c) {
      wave.push_back(std::async(lanes == 1 ? std::launch::deferred : std::launch::async, [&, c] {
        const Response r = transport.call(make_request(task, chunks[c]));
        results[c] = extract(r, chunks[c].size());
      }));
    }
    for (auto& f : wave) f.get();
  }
  std::vector<Item> out;
  for (auto& r : results) std::move(r.begin(), r.end(), std::back_inserter(out));
  return out;
}

void check_vector(const std::vector<double>& v, std::size_t expected_dim, const std::string& endpoint) {
  if (v.empty()) provider(endpoint + ": empty embedding");
  if (expected_dim != 0 && v.size() != expected_dim)
    provider(endpoint + ": embedding dimension " + std::to_string(v.size()) + ", declared " +
             std::to_string(expected_dim));
  for (double x : v)
    if (!std::isfinite(x)) provider(endpoint + ": non-finite embedding entry");
}

}  // namespace

RemoteEmbeddingProvider::RemoteEmbeddingProvider(std::shared_ptr<Transport> transport, ProviderOptions options)
    : transport_(std::move(transport)), options_(options) {
  if (!transport_) throw Error(ErrorCode::InvalidConfig, "embedding provider without transport");
}

std::vector<metrics::Embedding> RemoteEmbeddingProvider::embed_frames(std::span<const Frame> frames) {
  const std::string endpoint = transport_->endpoint();
  return batched_call<metrics::Embedding>(
      *transport_, Task::embed_frames, frames, options_, [&](const Response& r, std::size_t expected) {
        if (!r.vectors || r.vectors->size() != expected)
          provider(endpoint + ": expected " + std::to_string(expected) + " vectors");
        for (const auto& v : *r.vectors) check_vector(v, options_.expected_dim, endpoint);
        return *r.vectors;
      });
}

metrics::Embedding RemoteEmbeddingProvider::single_vector(const Response& r) const {
  if (!r.vectors || r.vectors->size() != 1) provider(transport_->endpoint() + ": expected exactly one vector");
  check_vector(r.vectors->front(), options_.expected_dim, transport_->endpoint());
  return r.vectors->front();
}

metrics::Embedding RemoteEmbeddingProvider::embed_text(std::string_view text) {
  return single_vector(transport_->call(make_request(Task::embed_text, {}, std::string(text))));
}

metrics::Embedding RemoteEmbeddingProvider::embed_video(const FrameSequence& frames) {
  return single_vector(transport_->call(make_request(Task::embed_video, frames.frames())));
}

RemoteIqaProvider::RemoteIqaProvider(std::shared_ptr<Transport> transport, ProviderOptions options)
    : transport_(std::move(transport)), options_(options) {
  if (!transport_) throw Error(ErrorCode::InvalidConfig, "IQA provider without transport");
}

std::vector<double> RemoteIqaProvider::score_frames(std::span<const Frame> frames) {
  const std::string endpoint = transport_->endpoint();
  return batched_call<double>(*transport_, Task::iqa, frames, options_, [&](const Response& r, std::size_t expected) {
    if (!r.values || r.values->size() != expected)
      provider(endpoint + ": expected " + std::to_string(expected) + " values");
    for (double v : *r.values)
      if (!std::isfinite(v)) provider(endpoint + ": non-finite quality score");
    return *r.values;
  });
}

}  // namespace videoeval::protocol
