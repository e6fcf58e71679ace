#include <gtest/gtest.h>

#include <thread>

#include "oracles.hpp"
#include "videoeval/pipeline.hpp"

using namespace videoeval;
using namespace videoeval::pipeline;

namespace {

FrameSequence ramp(std::size_t n, int fps, int w = 4, int h = 4) {
  std::vector<Frame> frames;
  for (std::size_t i = 0; i < n; ++i) frames.push_back(Frame::filled(w, h, 1, static_cast<float>(i) / n));
  return FrameSequence(std::move(frames), fps);
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorCode::InvalidArgument;
}

std::string words(int n) {
  std::string s;
  for (int i = 0; i < n; ++i) s += (i ? " " : "") + std::string("word");
  return s;
}

class FixedDecoder : public FrameDecoder {
 public:
  DecodedVideo video;
  DecodedVideo decode(const std::string&) override { return video; }
};

const std::vector<std::string> kHook{VE_FAKE_HOOK};

std::vector<std::string> hook(std::initializer_list<std::string> args) {
  auto v = kHook;
  v.insert(v.end(), args);
  return v;
}

}  // namespace

TEST(Downsample, TwentyFourToEightKeepsEveryThird) {
  const auto idx = downsample_indices(48, 24, 8);
  ASSERT_EQ(idx.size(), 16u);
  for (std::size_t j = 0; j < idx.size(); ++j) EXPECT_EQ(idx[j], 3 * j);
}

TEST(Downsample, MatchesNearestTimeOracle) {
  EXPECT_EQ(downsample_indices(23, 23, 8), oracle::nearest_time_indices(23, 23, 8));
  EXPECT_EQ(downsample_indices(70, 23, 8), oracle::nearest_time_indices(70, 23, 8));
  for (int src = 8; src <= 60; ++src)
    for (std::size_t n : {1u, 7u, 30u, 97u})
      EXPECT_EQ(downsample_indices(n, src, 8), oracle::nearest_time_indices(n, src, 8)) << src << " " << n;
}

TEST(Downsample, Errors) {
  EXPECT_EQ(code_of([] { downsample_indices(10, 8, 24); }), ErrorCode::InvalidTarget);
  EXPECT_EQ(code_of([] { downsample_indices(10, 8, 0); }), ErrorCode::InvalidTarget);
  EXPECT_EQ(code_of([] { downsample_fps(ramp(2, 24), 8); }), ErrorCode::TooFewFrames);
  const auto out = downsample_fps(ramp(48, 24), 8);
  EXPECT_EQ(out.fps(), 8);
  EXPECT_EQ(out.size(), 16u);
  EXPECT_FLOAT_EQ(out[1].pixels[0], 3.f / 48);
}

TEST(Crop, CentreAndErrors) {
  std::vector<Frame> frames{Frame(4, 4, 1)};
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) frames[0].at(x, y) = static_cast<float>(y * 4 + x) / 16;
  const auto c = crop_center(FrameSequence(frames, 8), 2, 2);
  EXPECT_FLOAT_EQ(c[0].at(0, 0), 5.f / 16);
  EXPECT_FLOAT_EQ(c[0].at(1, 1), 10.f / 16);
  EXPECT_EQ(code_of([&] { crop_center(FrameSequence(frames, 8), 5, 2); }), ErrorCode::TargetExceedsSource);
}

TEST(UniformSample, EndpointsAndRounding) {
  EXPECT_EQ(uniform_sample_indices(10, 4), (std::vector<std::size_t>{0, 3, 6, 9}));
  EXPECT_EQ(uniform_sample_indices(4, 4), (std::vector<std::size_t>{0, 1, 2, 3}));
  EXPECT_EQ(uniform_sample_indices(8, 4), (std::vector<std::size_t>{0, 2, 5, 7}));  // 7/3 -> 2, 14/3 -> 5
  EXPECT_EQ(code_of([] { uniform_sample_indices(3, 4); }), ErrorCode::TooFewFrames);
  EXPECT_EQ(code_of([] { uniform_sample_indices(3, 1); }), ErrorCode::InvalidArgument);
}

TEST(StaticDetection, ConstantAndMoving) {
  PipelineConfig cfg;
  std::vector<Frame> still(12, Frame::filled(8, 8, 3, 0.4f));
  EXPECT_TRUE(is_static(FrameSequence(still, 8), cfg));
  EXPECT_FALSE(is_static(ramp(12, 8), cfg));
  const auto check = static_check(FrameSequence(still, 8), cfg);
  EXPECT_DOUBLE_EQ(check.mean_ssim, 1.0);
  EXPECT_DOUBLE_EQ(check.mean_mse, 0.0);
}

TEST(PromptFilter, WordBounds) {
  PipelineConfig cfg;
  EXPECT_EQ(filter_prompt(words(4), cfg).rejection, PromptRejection::too_short);
  EXPECT_TRUE(filter_prompt(words(5), cfg).accepted());
  EXPECT_TRUE(filter_prompt(words(100), cfg).accepted());
  EXPECT_EQ(filter_prompt(words(101), cfg).rejection, PromptRejection::too_long);
  EXPECT_EQ(count_words("  a\tcat \n on  a mat "), 5u);
}

TEST(PromptFilter, NsfwHook) {
  PipelineConfig cfg;
  SubprocessNsfwClassifier nsfw(hook({"nsfw"}));
  EXPECT_EQ(filter_prompt("a forbidden scene with five words", cfg, &nsfw).rejection, PromptRejection::nsfw);
  EXPECT_TRUE(filter_prompt("a calm scene with five words", cfg, &nsfw).accepted());
  // Word bounds are checked before the classifier runs.
  EXPECT_EQ(filter_prompt("forbidden", cfg, &nsfw).rejection, PromptRejection::too_short);
}

TEST(Config, Validation) {
  PipelineConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.target_fps = 0;
  EXPECT_EQ(code_of([&] { cfg.validate(); }), ErrorCode::InvalidConfig);
  nlohmann::json j = PipelineConfig{};
  EXPECT_EQ(j.get<PipelineConfig>().target_fps, 8);
}

TEST(ExtractFrames, RateHandling) {
  PipelineConfig cfg;
  VideoRecord rec{"v", "m", "p", "loc", 24, 4, 4, 1.0};
  FixedDecoder d;
  d.video = {ramp(24, 24).frames(), 24};
  EXPECT_EQ(extract_frames(rec, cfg, d).size(), 8u);
  d.video = {ramp(8, 8).frames(), 8};
  EXPECT_EQ(extract_frames(rec, cfg, d).size(), 8u);
  d.video = {ramp(4, 4).frames(), 4};
  EXPECT_EQ(code_of([&] { extract_frames(rec, cfg, d); }), ErrorCode::NoInterpolatorConfigured);
  d.video = {{}, 24};
  EXPECT_EQ(code_of([&] { extract_frames(rec, cfg, d); }), ErrorCode::UnreadableMedia);
}

TEST(RawStream, RoundTripAndMalformed) {
  const auto seq = ramp(3, 8, 5, 2);
  const auto bytes = encode_raw_frames(seq.frames(), 8);
  const auto back = decode_raw_frames(bytes);
  EXPECT_EQ(back.source_fps, 8);
  ASSERT_EQ(back.frames.size(), 3u);
  EXPECT_EQ(back.frames[2].to_u8(), seq[2].to_u8());
  EXPECT_EQ(code_of([] { decode_raw_frames("nonsense"); }), ErrorCode::UnreadableMedia);
  EXPECT_EQ(code_of([&] { decode_raw_frames(bytes.substr(0, bytes.size() - 1)); }), ErrorCode::UnreadableMedia);
}

TEST(SubprocessHooks, DecodeInterpolate) {
  PipelineConfig cfg;
  SubprocessDecoder decoder(hook({"decode"}));
  SubprocessInterpolator interp(hook({"interpolate"}));
  VideoRecord rec{"v", "m", "p", "ramp:6:4:3:24:48", 24, 6, 4, 2.0};
  const auto frames = extract_frames(rec, cfg, decoder);
  EXPECT_EQ(frames.size(), 16u);
  EXPECT_EQ(frames.channels(), 3);

  rec.media_path = "const:6:4:1:4:8:0.5";
  EXPECT_EQ(code_of([&] { extract_frames(rec, cfg, decoder); }), ErrorCode::NoInterpolatorConfigured);
  const auto raised = extract_frames(rec, cfg, decoder, &interp);
  EXPECT_EQ(raised.fps(), 8);
  EXPECT_EQ(raised.size(), 16u);
  EXPECT_TRUE(is_static(raised, cfg));

  SubprocessInterpolator liar(hook({"interpolate-wrong"}));
  EXPECT_EQ(code_of([&] { extract_frames(rec, cfg, decoder, &liar); }), ErrorCode::ProviderError);
}

TEST(SubprocessHooks, DecoderFailures) {
  SubprocessDecoder decoder(hook({"decode"}));
  EXPECT_EQ(code_of([&] { decoder.decode("fail"); }), ErrorCode::UnreadableMedia);
  EXPECT_EQ(code_of([&] { decoder.decode("garbage"); }), ErrorCode::UnreadableMedia);
  SubprocessDecoder missing({"/nonexistent/decoder"});
  EXPECT_EQ(code_of([&] { missing.decode("x"); }), ErrorCode::UnreadableMedia);
  EXPECT_THROW(SubprocessDecoder({}), Error);
}

TEST(SubprocessHooks, ConcurrentDecodes) {
  SubprocessDecoder decoder(hook({"decode"}));
  std::vector<std::jthread> threads;
  std::atomic<int> ok{0};
  for (int i = 0; i < 8; ++i)
    threads.emplace_back([&, i] {
      if (decoder.decode("const:4:4:1:8:" + std::to_string(8 + i) + ":0.25").frames.size() == 8u + i) ++ok;
    });
  threads.clear();
  EXPECT_EQ(ok.load(), 8);
}
