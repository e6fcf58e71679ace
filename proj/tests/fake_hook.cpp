// Stand-in for external decoder / interpolator / NSFW hooks in tests.
//   fake_hook decode <locator>         locator: const:W:H:C:FPS:COUNT:LEVEL | ramp:W:H:C:FPS:COUNT | fail | garbage
//   fake_hook interpolate <fps>        repeat frames of the stdin stream up to <fps>
//   fake_hook interpolate-wrong <fps>  same, but reports fps + 1
//   fake_hook nsfw                     "nsfw" when stdin mentions "forbidden", else "0"

#include <cstdint>
#include <iostream>
#include <iterator>
#include <string>
#include <vector>

#include "videoeval/pipeline.hpp"
#include "videoeval/util.hpp"

namespace ve = videoeval;

namespace {

std::string read_stdin() {
  std::cin >> std::noskipws;
  return {std::istreambuf_iterator<char>(std::cin), std::istreambuf_iterator<char>()};
}

int decode(const std::string& locator) {
  const auto f = ve::split(locator, ':');
  if (f.empty() || f[0] == "fail") return 1;
  if (f[0] == "garbage") {
    std::cout << "VFRAMES 4 4 1 8 9\nxyz";
    return 0;
  }
  const int w = std::stoi(f.at(1)), h = std::stoi(f.at(2)), c = std::stoi(f.at(3));
  const int fps = std::stoi(f.at(4)), count = std::stoi(f.at(5));
  std::vector<ve::Frame> frames;
  for (int i = 0; i < count; ++i) {
    const float level = f[0] == "const" ? std::stof(f.at(6)) : static_cast<float>(i) / static_cast<float>(count);
    frames.push_back(ve::Frame::filled(w, h, c, level));
  }
  std::cout << ve::pipeline::encode_raw_frames(frames, fps);
  return 0;
}

int interpolate(int target, bool lie) {
  const auto in = ve::pipeline::decode_raw_frames(read_stdin());
  const std::size_t n = in.frames.size();
  const std::size_t m = (n * static_cast<std::size_t>(target) + in.source_fps - 1) / in.source_fps;
  std::vector<ve::Frame> out;
  for (std::size_t j = 0; j < m; ++j) out.push_back(in.frames[std::min(n - 1, j * in.source_fps / target)]);
  std::cout << ve::pipeline::encode_raw_frames(out, lie ? target + 1 : target);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  std::ios::sync_with_stdio(false);
  const std::vector<std::string> args(argv + 1, argv + argc);
  if (args.size() == 2 && args[0] == "decode") return decode(args[1]);
  if (args.size() == 2 && args[0] == "interpolate") return interpolate(std::stoi(args[1]), false);
  if (args.size() == 2 && args[0] == "interpolate-wrong") return interpolate(std::stoi(args[1]), true);
  if (args.size() == 1 && args[0] == "nsfw") {
    std::cout << (read_stdin().find("forbidden") != std::string::npos ? "nsfw\n" : "0\n");
    return 0;
  }
  std::cerr << "usage: fake_hook decode|interpolate|interpolate-wrong|nsfw ...\n";
  return 2;
}
