#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "videoeval/core.hpp"

namespace fs = std::filesystem;
using videoeval::AspectScores;
using videoeval::LabeledRecord;
using videoeval::VideoRecord;

namespace {

struct CliResult {
  int code;
  std::string out;
};

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("ve_cli_" + std::to_string(::getpid()));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path write(const std::string& name, const std::string& text) const {
    std::ofstream(dir_ / name) << text;
    return dir_ / name;
  }

  CliResult run(const std::string& args) const {
    const fs::path out = dir_ / "stdout.txt";
    const std::string cmd = std::string(VE_CLI) + " " + args + " > " + out.string() + " 2> " + (dir_ / "stderr.txt").string();
    const int status = std::system(cmd.c_str());
    std::ifstream in(out);
    std::stringstream ss;
    ss << in.rdbuf();
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, ss.str()};
  }

  std::string dataset(int n, bool with_media) const {
    std::string out;
    for (int i = 0; i < n; ++i) {
      const double v = 1.0 + i % 4;
      VideoRecord r{"v" + std::to_string(i), i % 2 ? "alpha" : "beta", "a small boat drifting on a calm lake",
                    with_media ? "const:16:16:3:8:16:" + std::to_string(0.1 + 0.05 * i) : "none", 8, 16, 16, 2.0};
      out += nlohmann::json(LabeledRecord{r, AspectScores{v, v, v, v, v}}).dump() + "\n";
    }
    return out;
  }

  fs::path dir_;
};

}  // namespace

TEST_F(CliTest, PrecomputedCorrelationIsPerfect) {
  const auto data = write("d.jsonl", dataset(8, false));
  const auto r = run("eval-correlation --dataset " + data.string() + " --backend precomputed:" + data.string() +
                     " --method echo --format csv");
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(r.out,
            "benchmark,method,VQ,TC,DD,TVA,FC,Average,evaluated,parse_failures,skipped,total\n"
            "VideoFeedback,echo,100.0,100.0,100.0,100.0,100.0,100.0,8,0,0,8\n");
}

TEST_F(CliTest, StubBackendEndToEndIsReproducible) {
  const auto data = write("d.jsonl", dataset(12, true));
  const auto config = write("c.json", nlohmann::json{{"decoder", {VE_FAKE_HOOK, "decode"}}, {"seed", 4}}.dump());
  const std::string args = "eval-correlation --dataset " + data.string() + " --config " + config.string() +
                           " --random --format text --json " + (dir_ / "doc.json").string();
  const auto a = run(args);
  const auto b = run(args);
  ASSERT_EQ(a.code, 0);
  EXPECT_EQ(a.out, b.out);
  EXPECT_NE(a.out.find("Random"), std::string::npos);
  std::ifstream doc(dir_ / "doc.json");
  const auto j = nlohmann::json::parse(doc);
  EXPECT_EQ(j.at("results").size(), 2u);
  EXPECT_EQ(j.at("config").at("seed"), 4);
}

TEST_F(CliTest, ExitCodes) {
  const auto bad = write("bad.jsonl", "{\"id\": 3}\n");
  EXPECT_EQ(run("eval-correlation --dataset " + bad.string()).code, 2);
  EXPECT_EQ(run("eval-correlation").code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
  const auto cfg = write("typo.json", "{\"sede\": 1}");
  const auto data = write("d.jsonl", dataset(4, false));
  EXPECT_EQ(run("eval-correlation --dataset " + data.string() + " --config " + cfg.string()).code, 2);
  const auto remote = write("remote.json", R"({"kind": "remote", "url": "http://127.0.0.1:1", "max_retries": 0,
                                             "timeout_ms": 500})");
  const auto cfg2 = write("c.json", nlohmann::json{{"decoder", {VE_FAKE_HOOK, "decode"}}}.dump());
  const auto media = write("m.jsonl", dataset(2, true));
  EXPECT_EQ(run("eval-correlation --dataset " + media.string() + " --config " + cfg2.string() + " --backend " +
                remote.string())
                .code,
            3);
  EXPECT_EQ(run("discretize --metric CLIP-sim --value 1.5").code, 1);
}

TEST_F(CliTest, Discretize) {
  const auto r = run("discretize --metric PIQE --value 10 --value 40 --value 80");
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(r.out, "metric,value,label\nPIQE,10,4\nPIQE,40,2\nPIQE,80,1\n");
}

TEST_F(CliTest, LeaderboardAndBestOfK) {
  const auto data = write("d.jsonl", dataset(8, false));
  const auto lb = run("leaderboard --format csv --records " + data.string());
  ASSERT_EQ(lb.code, 0);
  EXPECT_EQ(lb.out.substr(0, lb.out.find('\n')), "rank,model,videos,VQ,TC,DD,TVA,FC,Average");

  const auto bok = run("best-of-k --candidates " + data.string() + " --k 8 --backend precomputed:" + data.string());
  ASSERT_EQ(bok.code, 0);
  const auto pick = nlohmann::json::parse(bok.out.substr(0, bok.out.find('\n')));
  EXPECT_EQ(pick.at("id"), "v3");
}

TEST_F(CliTest, PipelineReport) {
  const auto data = write("d.jsonl", dataset(2, true));
  const auto cfg = write("c.json", nlohmann::json{{"decoder", {VE_FAKE_HOOK, "decode"}}}.dump());
  const auto r = run("pipeline --records " + data.string() + " --config " + cfg.string());
  ASSERT_EQ(r.code, 0);
  const auto line = nlohmann::json::parse(r.out.substr(0, r.out.find('\n')));
  EXPECT_EQ(line.at("frames"), 16);
  EXPECT_EQ(line.at("static"), true);
  EXPECT_EQ(line.at("prompt_accepted"), true);
}
