#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "oracles.hpp"
#include "videoeval/harness.hpp"
#include "videoeval/stub.hpp"
#include "videoeval/util.hpp"

using namespace videoeval;
using namespace videoeval::harness;
namespace fs = std::filesystem;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorCode::InvalidArgument;
}

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() / ("ve_harness_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  fs::path write(const std::string& name, const std::string& text) const {
    std::ofstream(path_ / name) << text;
    return path_ / name;
  }

 private:
  fs::path path_;
};

struct Quiet {
  Quiet() { set_warning_sink([](std::string_view) {}); }
  ~Quiet() { set_warning_sink(nullptr); }
};

VideoRecord video(const std::string& id, const std::string& model = "m", const std::string& prompt = "a cat") {
  return {id, model, prompt, id + ".mp4", 8, 64, 64, 2.0};
}

AspectScores uniform(double v) { return {v, v, v, v, v}; }

std::string jsonl(const std::vector<LabeledRecord>& records) {
  std::string out;
  for (const auto& r : records) out += nlohmann::json(r).dump() + "\n";
  return out;
}

}  // namespace

TEST(Loaders, DatasetRoundTripAndErrors) {
  TempDir dir;
  const std::vector<LabeledRecord> records{{video("a"), AspectScores{1, 2, 3, 4, 2}}, {video("b"), uniform(3)}};
  EXPECT_EQ(load_labeled_dataset(dir.write("d.jsonl", jsonl(records) + "\n")), records);

  const auto bad = dir.write("bad.jsonl", jsonl(records) + "{\"id\": \"c\"}\n");
  try {
    load_dataset(bad, false);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SchemaError);
    EXPECT_NE(std::string(e.what()).find(":3"), std::string::npos) << e.what();
  }
  EXPECT_EQ(code_of([&] { load_dataset(dir.write("dup.jsonl", jsonl({records[0], records[0]})), false); }),
            ErrorCode::DuplicateId);
  EXPECT_EQ(code_of([&] { load_labeled_dataset(dir.write("u.jsonl", jsonl({{video("x"), std::nullopt}}))); }),
            ErrorCode::SchemaError);
  EXPECT_EQ(code_of([&] { load_dataset(dir.write("j.jsonl", "{not json\n"), false); }), ErrorCode::SchemaError);
  auto out_of_range = nlohmann::json(LabeledRecord{video("x"), uniform(1)});
  out_of_range["scores"]["fc"] = 4.5;
  EXPECT_EQ(code_of([&] { load_dataset(dir.write("r.jsonl", out_of_range.dump() + "\n"), false); }),
            ErrorCode::SchemaError);
}

TEST(Loaders, Pairs) {
  TempDir dir;
  const auto p = dir.write("p.jsonl",
                           "{\"left\":\"a\",\"right\":\"b\",\"verdict\":\"left\"}\n"
                           "{\"left\":\"b\",\"right\":\"c\",\"verdict\":\"tie\",\"group\":\"motion\"}\n");
  const auto pairs = load_pairs(p);
  ASSERT_EQ(pairs.size(), 2u);
  EXPECT_EQ(pairs[0].verdict, Verdict::left);
  EXPECT_EQ(pairs[1].group, "motion");
  EXPECT_EQ(code_of([&] { load_pairs(dir.write("q.jsonl", "{\"left\":\"a\",\"right\":\"b\",\"verdict\":\"up\"}\n")); }),
            ErrorCode::SchemaError);
  EXPECT_EQ(code_of([&] { load_pairs(dir.write("s.jsonl", "{\"left\":\"a\",\"right\":\"a\",\"verdict\":\"tie\"}\n")); }),
            ErrorCode::SchemaError);
}

TEST(Loaders, EvalCrafterNormalization) {
  EXPECT_DOUBLE_EQ(normalize_evalcrafter(1, 1, 1), 0.0);
  EXPECT_DOUBLE_EQ(normalize_evalcrafter(5, 5, 5), 1.0);
  EXPECT_DOUBLE_EQ(normalize_evalcrafter(3, 3, 3), 0.5);
  EXPECT_DOUBLE_EQ(normalize_evalcrafter(1, 2, 5), (8.0 / 3.0 - 1.0) / 4.0);
  EXPECT_EQ(code_of([] { normalize_evalcrafter(0, 3, 3); }), ErrorCode::OutOfRangeRating);
  EXPECT_EQ(code_of([] { normalize_evalcrafter(3, 6, 3); }), ErrorCode::OutOfRangeRating);

  TempDir dir;
  const auto csv = dir.write("ec.csv", "video_id,aspect,r1,r2,r3\na,vq,5,5,5\na,tva,1,1,1\nb,tc,3,3,3\n");
  const auto ratings = load_evalcrafter_csv(csv);
  EXPECT_EQ(ratings.at("a")[index_of(Aspect::vq)], 1.0);
  EXPECT_EQ(ratings.at("a")[index_of(Aspect::tva)], 0.0);
  EXPECT_FALSE(ratings.at("a")[index_of(Aspect::tc)].has_value());
  EXPECT_EQ(ratings.at("b")[index_of(Aspect::tc)], 0.5);
  EXPECT_EQ(code_of([&] { load_evalcrafter_csv(dir.write("d.csv", "video_id,aspect,r1,r2,r3\na,vq,5,5,5\na,vq,1,1,1\n")); }),
            ErrorCode::DuplicateId);
  EXPECT_EQ(code_of([&] { load_evalcrafter_csv(dir.write("o.csv", "video_id,aspect,r1,r2,r3\na,vq,5,5,7\n")); }),
            ErrorCode::OutOfRangeRating);
  EXPECT_EQ(code_of([&] { load_evalcrafter_csv(dir.write("h.csv", "id,aspect,a,b,c\n")); }), ErrorCode::SchemaError);

  const std::vector<LabeledRecord> records{{video("a"), std::nullopt}, {video("b"), std::nullopt}};
  EXPECT_EQ(items_from_ratings(records, ratings).size(), 2u);
  auto extra = ratings;
  extra["zzz"] = {};
  EXPECT_EQ(code_of([&] { items_from_ratings(records, extra); }), ErrorCode::UnresolvedId);
}

TEST(Loaders, RatingMatrices) {
  TempDir dir;
  const auto path = dir.write("r.csv",
                              "item_id,rater,aspect,label\n"
                              "v1,r1,vq,4\nv1,r2,vq,4\nv2,r1,vq,2\nv2,r2,vq,3\nv1,r1,tc,1\n");
  const auto m = load_rating_matrices(path);
  ASSERT_EQ(m.size(), 2u);
  EXPECT_EQ(m.at(Aspect::vq).items(), 2u);
  const auto rows = iaa_table(m);
  EXPECT_EQ(rows.size(), 2u);
  EXPECT_DOUBLE_EQ(*rows[0].match_ratio, 0.5);
  EXPECT_EQ(code_of([&] { load_rating_matrices(dir.write("x.csv", "item_id,rater,aspect,label\nv1,r1,vq,5\n")); }),
            ErrorCode::OutOfRangeRating);
  EXPECT_EQ(code_of([&] { load_rating_matrices(dir.write("y.csv", "item_id,rater,aspect,label\nv1,r1,vq,2\nv1,r1,vq,3\n")); }),
            ErrorCode::DuplicateId);
}

TEST(Correlation, EchoBackendIsPerfect) {
  std::mt19937_64 rng(3);
  std::vector<LabeledRecord> data;
  std::map<std::string, AspectScores> predicted;
  for (int i = 0; i < 30; ++i) {
    AspectScores s;
    for (Aspect a : kAllAspects) s[a] = 1 + static_cast<int>(rng() % 4);
    data.push_back({video("v" + std::to_string(i)), s});
    predicted["v" + std::to_string(i)] = s;
  }
  scoring::PrecomputedBackend echo("echo", predicted);
  const auto items = items_from_labeled(data);
  EvalSettings settings;
  settings.method = "echo";
  const auto r = run_correlation_eval(items, echo, kAllAspects, settings);
  ASSERT_EQ(r.columns, (std::vector<std::string>{"VQ", "TC", "DD", "TVA", "FC"}));
  for (const auto& v : r.values) EXPECT_DOUBLE_EQ(*v, 1.0);
  EXPECT_DOUBLE_EQ(*r.average(), 1.0);
  EXPECT_TRUE(r.counts.reconciles());

  // Same data through the oracle for a shuffled prediction.
  std::map<std::string, AspectScores> shuffled;
  for (int i = 0; i < 30; ++i) shuffled["v" + std::to_string(i)] = predicted["v" + std::to_string((i * 7) % 30)];
  scoring::PrecomputedBackend other("other", shuffled);
  const auto r2 = run_correlation_eval(items, other, kAllAspects, settings);
  for (Aspect a : kAllAspects) {
    std::vector<double> x, y;
    for (int i = 0; i < 30; ++i) {
      x.push_back(shuffled["v" + std::to_string(i)][a]);
      y.push_back(data[i].scores->operator[](a));
    }
    EXPECT_NEAR(*r2.values[index_of(a)], *oracle::spearman(x, y), 1e-12);
  }
}

TEST(Correlation, ParseFailuresAreExcludedAndCounted) {
  Quiet quiet;
  std::vector<EvalItem> items;
  for (int i = 0; i < 6; ++i) {
    ReferenceScores ref;
    ref.fill(1.0 + i % 4);
    items.push_back({video("v" + std::to_string(i)), ref});
  }
  scoring::GenerativeTextBackend gen("flaky", [](const VideoRecord& r, std::string_view, const FrameSequence*) {
    if (r.id == "v2") return std::string("I cannot rate this video.");
    const double v = 1.0 + (r.id.back() - '0') % 4;
    return scoring::render_generative(uniform(v));
  });
  EvalSettings settings;
  const auto r = run_correlation_eval(items, gen, kAllAspects, settings);
  EXPECT_EQ(r.counts.total, 6u);
  EXPECT_EQ(r.counts.evaluated, 5u);
  EXPECT_EQ(r.counts.parse_failures, 1u);
  EXPECT_TRUE(r.counts.reconciles());
  EXPECT_DOUBLE_EQ(*r.values[0], 1.0);

  scoring::GenerativeTextBackend never("never", [](const VideoRecord&, std::string_view, const FrameSequence*) {
    return std::string("no");
  });
  EXPECT_EQ(code_of([&] { run_correlation_eval(items, never, kAllAspects, settings); }), ErrorCode::AllParsesFailed);
}

TEST(Correlation, ConstantPredictionIsDegenerate) {
  std::vector<EvalItem> items;
  std::map<std::string, AspectScores> predicted;
  for (int i = 0; i < 4; ++i) {
    ReferenceScores ref;
    ref.fill(1.0 + i);
    items.push_back({video("v" + std::to_string(i)), ref});
    predicted["v" + std::to_string(i)] = uniform(2);
  }
  scoring::PrecomputedBackend flat("flat", predicted);
  Quiet quiet;
  const auto r = run_correlation_eval(items, flat, kAllAspects, {});
  EXPECT_EQ(r.degenerate_columns.size(), 5u);
  EXPECT_FALSE(r.average().has_value());
  const std::vector<BenchmarkResult> results{r};
  EXPECT_NE(run_report(results, ReportFormat::csv).find("n/a"), std::string::npos);
  EXPECT_NE(run_report(results, ReportFormat::aligned_text).find("note: "), std::string::npos);
}

TEST(Preference, AccuracyExtremesAndTies) {
  const std::vector<VideoRecord> videos{video("hi"), video("lo"), video("mid")};
  scoring::PrecomputedBackend b("p", {{"hi", uniform(4)}, {"lo", uniform(1)}, {"mid", uniform(2.5)}});
  const std::vector<PreferencePair> all_right{{"hi", "lo", Verdict::left, ""}, {"lo", "mid", Verdict::right, ""}};
  auto r = run_preference_eval(all_right, videos, b, 0.0, {});
  EXPECT_EQ(r.columns, std::vector<std::string>{"overall"});
  EXPECT_DOUBLE_EQ(*r.values[0], 100.0);

  const std::vector<PreferencePair> half{{"hi", "lo", Verdict::left, ""}, {"hi", "mid", Verdict::tie, ""}};
  r = run_preference_eval(half, videos, b, 0.0, {});
  EXPECT_DOUBLE_EQ(*r.values[0], 50.0);
  r = run_preference_eval(half, videos, b, 1.6, {});
  EXPECT_DOUBLE_EQ(*r.values[0], 100.0);
  r = run_preference_eval(half, videos, b, 3.5, {});
  EXPECT_DOUBLE_EQ(*r.values[0], 50.0);

  const std::vector<PreferencePair> grouped{{"hi", "lo", Verdict::left, "g1"}, {"hi", "lo", Verdict::right, "g2"}};
  r = run_preference_eval(grouped, videos, b, 0.0, {});
  EXPECT_EQ(r.columns, (std::vector<std::string>{"g1", "g2"}));
  EXPECT_DOUBLE_EQ(*r.values[0], 100.0);
  EXPECT_DOUBLE_EQ(*r.values[1], 0.0);
  EXPECT_DOUBLE_EQ(*r.average(), 50.0);

  const std::vector<PreferencePair> missing{{"hi", "nope", Verdict::left, ""}};
  EXPECT_EQ(code_of([&] { run_preference_eval(missing, videos, b, 0.0, {}); }), ErrorCode::UnresolvedId);
  const std::vector<VideoRecord> dup{video("hi"), video("hi"), video("lo")};
  EXPECT_EQ(code_of([&] { run_preference_eval(all_right, dup, b, 0.0, {}); }), ErrorCode::DuplicateId);
}

TEST(Preference, RandomBaselineRowIsSeeded) {
  std::vector<PreferencePair> pairs;
  for (int i = 0; i < 60; ++i)
    pairs.push_back({"a" + std::to_string(i), "b" + std::to_string(i), static_cast<Verdict>(i % 3), i < 30 ? "x" : "y"});
  EvalSettings s;
  s.fingerprint.seed = 11;
  const auto r1 = random_preference_row(pairs, s, 200);
  const auto r2 = random_preference_row(pairs, s, 200);
  EXPECT_EQ(r1.values, r2.values);
  EXPECT_EQ(r1.method, "Random");
  for (const auto& v : r1.values) EXPECT_NEAR(*v, 100.0 / 3.0, 6.0);
}

TEST(Selection, SubsampleMatchesReplay) {
  std::vector<LabeledRecord> data;
  const std::vector<std::string> prompts{"p0", "p1", "p2", "p3", "p4"};
  for (int i = 0; i < 15; ++i) data.push_back({video("v" + std::to_string(i), "m", prompts[i % 5]), std::nullopt});
  EXPECT_EQ(unique_prompts(data), prompts);
  for (std::uint64_t seed : {0ull, 7ull, 12345ull}) {
    const auto chosen = oracle::replay_sample(prompts, 2, seed);
    const auto kept = subsample_prompts(data, 2, seed);
    ASSERT_EQ(kept.size(), 6u);
    for (const auto& r : kept) EXPECT_TRUE(r.record.prompt == chosen[0] || r.record.prompt == chosen[1]);
    for (std::size_t i = 1; i < kept.size(); ++i)
      EXPECT_LT(std::stoi(kept[i - 1].record.id.substr(1)), std::stoi(kept[i].record.id.substr(1)));
    EXPECT_EQ(subsample_prompts(data, 2, seed), kept);
  }
  EXPECT_EQ(code_of([&] { subsample_prompts(data, 6, 0); }), ErrorCode::TooFewPrompts);
  EXPECT_EQ(subsample_prompts(data, 5, 3).size(), 15u);
}

TEST(Selection, PairGroupSubsample) {
  std::vector<VideoRecord> videos;
  std::vector<PreferencePair> pairs;
  for (int i = 0; i < 10; ++i) {
    videos.push_back(video("l" + std::to_string(i), "m", "p" + std::to_string(i)));
    videos.push_back(video("r" + std::to_string(i), "n", "p" + std::to_string(i)));
    pairs.push_back({"l" + std::to_string(i), "r" + std::to_string(i), Verdict::left, i < 7 ? "big" : "small"});
  }
  const auto kept = subsample_pair_groups(pairs, videos, 4, 5);
  std::size_t big = 0, small = 0;
  for (const auto& p : kept) (p.group == "big" ? big : small)++;
  EXPECT_EQ(big, 4u);
  EXPECT_EQ(small, 3u);
}

TEST(Selection, BestOfK) {
  const auto run = [](std::vector<AspectScores> scores) {
    std::vector<Candidate> cands;
    std::map<std::string, AspectScores> table;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      cands.push_back({video("c" + std::to_string(i)), std::nullopt});
      table["c" + std::to_string(i)] = scores[i];
    }
    scoring::PrecomputedBackend b("t", table);
    return best_of_k(cands, b);
  };
  EXPECT_EQ(run({uniform(2.0), uniform(3.5), uniform(3.1)}).index, 1u);
  EXPECT_EQ(run({uniform(3.0), AspectScores{4, 2, 3, 3, 3}, uniform(3.0)}).index, 0u);
  EXPECT_EQ(run({uniform(1.0)}).index, 0u);

  std::vector<Candidate> cands{{video("a"), std::nullopt}, {video("b"), std::nullopt}, {video("c"), std::nullopt}};
  scoring::GenerativeTextBackend gen("g", [](const VideoRecord& r, std::string_view, const FrameSequence*) {
    if (r.id == "b") return std::string("visual quality: 9");
    return scoring::render_generative(uniform(r.id == "a" ? 2 : 3));
  });
  const auto pick = best_of_k(cands, gen);
  EXPECT_EQ(pick.index, 2u);
  EXPECT_EQ(pick.parse_failures, 1u);
  EXPECT_FALSE(pick.candidate_scores[1].has_value());
}

TEST(Leaderboard, DisplayScaleAndOrder) {
  EXPECT_DOUBLE_EQ(display_score(1.0), 0.0);
  EXPECT_DOUBLE_EQ(display_score(4.0), 100.0);
  EXPECT_DOUBLE_EQ(display_score(2.5), 50.0);
  const std::vector<LabeledRecord> records{
      {video("a1", "alpha"), uniform(2.9)}, {video("b1", "beta"), uniform(3.2)},
      {video("a2", "alpha"), uniform(2.9)}, {video("c1", "gamma"), uniform(4.0)},
      {video("d1", "delta"), uniform(1.0)}, {video("b2", "beta"), std::nullopt}};
  const auto rows = leaderboard(records);
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0].model, "gamma");
  EXPECT_DOUBLE_EQ(rows[0].display_average, 100.0);
  EXPECT_EQ(rows[1].model, "beta");
  EXPECT_EQ(rows[1].videos, 1u);
  EXPECT_NEAR(rows[1].display_average, 2.2 / 3.0 * 100.0, 1e-9);
  EXPECT_EQ(rows[2].model, "alpha");
  EXPECT_EQ(rows[3].model, "delta");
  EXPECT_DOUBLE_EQ(rows[3].display_average, 0.0);
  EXPECT_NE(render_leaderboard(rows, ReportFormat::csv).find("1,gamma,1,100.0,100.0,100.0,100.0,100.0,100.0"),
            std::string::npos);

  const std::vector<LabeledRecord> empty{{video("x", "ghost"), std::nullopt}};
  EXPECT_EQ(code_of([&] { leaderboard(empty); }), ErrorCode::EmptyModelGroup);
}

TEST(Report, HeaderOnlyAndDeterministic) {
  EXPECT_EQ(run_report({}, ReportFormat::csv),
            "benchmark,method,VQ,TC,DD,TVA,FC,Average,evaluated,parse_failures,skipped,total\n");
  BenchmarkResult r;
  r.benchmark = "VideoFeedback";
  r.method = "m";
  r.columns = {"VQ", "TC"};
  r.values = {0.5, std::nullopt};
  r.counts = {4, 3, 1, 0};
  const std::vector<BenchmarkResult> results{r};
  const auto csv = run_report(results, ReportFormat::csv);
  EXPECT_EQ(csv, "benchmark,method,VQ,TC,Average,evaluated,parse_failures,skipped,total\n"
                 "VideoFeedback,m,50.0,n/a,50.0,3,1,0,4\n");
  EXPECT_EQ(run_report(results, ReportFormat::aligned_text), run_report(results, ReportFormat::aligned_text));
  EXPECT_EQ(report_format_from_string("text"), ReportFormat::aligned_text);
  EXPECT_FALSE(report_format_from_string("xml").has_value());
}

TEST(Config, ParseValidateAndFingerprint) {
  TempDir dir;
  const auto path = dir.write("c.json", R"({"seed": 9, "k": 3, "tie_margin": 0.1, "threads": 4,
                                            "backend": {"kind": "stub", "mode": "regression"}})");
  const auto c = load_config(path);
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.k, 3);
  EXPECT_EQ(c.threads, 4u);
  EXPECT_EQ(code_of([&] { load_config(dir.write("u.json", R"({"sede": 1})")); }), ErrorCode::InvalidConfig);
  EXPECT_EQ(code_of([&] { load_config(dir.write("k.json", R"({"k": 0})")); }), ErrorCode::InvalidConfig);
  EXPECT_EQ(code_of([&] { load_config(dir.write("t.json", R"({"tie_margin": -1})")); }), ErrorCode::InvalidConfig);
  const nlohmann::json round = c;
  EXPECT_EQ(round.get<RunConfig>().seed, 9u);

  const auto rules = load_rule_set(c);
  auto backend = make_backend(c.backend, c, rules);
  EXPECT_EQ(backend->kind(), scoring::BackendKind::remote_service);
  const auto f1 = make_fingerprint(c, rules, backend->fingerprint());
  RunConfig c2 = c;
  c2.seed = 10;
  EXPECT_NE(f1.digest(), make_fingerprint(c2, rules, backend->fingerprint()).digest());
  EXPECT_EQ(f1.digest(), make_fingerprint(c, rules, backend->fingerprint()).digest());

  EXPECT_EQ(code_of([&] { make_backend("nonsense", c, rules); }), ErrorCode::InvalidConfig);
  EXPECT_EQ(parse_backend_option("remote:http://x"), nlohmann::json("remote:http://x"));
  EXPECT_EQ(parse_backend_option(R"({"kind":"stub"})")["kind"], "stub");
}

TEST(Scoring, ThreadedRunMatchesSerial) {
  RunConfig cfg;
  const auto rules = load_rule_set(cfg);
  nlohmann::json desc{{"kind", "stub"}, {"max_in_flight", 8}};
  auto backend = make_backend(desc, cfg, rules);
  std::vector<VideoRecord> records;
  for (int i = 0; i < 40; ++i) records.push_back(video("v" + std::to_string(i), "m", "prompt " + std::to_string(i)));
  const FrameSource frames = [](const VideoRecord& r) {
    std::vector<Frame> f;
    for (int i = 0; i < 4; ++i) f.push_back(Frame::filled(8, 8, 3, static_cast<float>(r.id.size() * 0.1 + i * 0.05)));
    return FrameSequence(std::move(f), 8);
  };
  const auto serial = score_all(records, *backend, {frames, nullptr, 1});
  const auto threaded = score_all(records, *backend, {frames, nullptr, 8});
  ASSERT_EQ(serial.size(), threaded.size());
  for (std::size_t i = 0; i < serial.size(); ++i) EXPECT_EQ(serial[i].scores, threaded[i].scores);
  EXPECT_EQ(code_of([&] { score_all(records, *backend, {}); }), ErrorCode::InvalidConfig);
}
