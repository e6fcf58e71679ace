#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "videoeval/discretize.hpp"
#include "videoeval/harness.hpp"
#include "videoeval/pipeline.hpp"
#include "videoeval/scorer.hpp"
#include "videoeval/util.hpp"

namespace ve = videoeval;
namespace harness = videoeval::harness;

namespace {

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> k;
  std::optional<double> tie_margin;
  std::optional<std::string> rules;
  std::optional<std::string> backend;
  std::optional<std::size_t> threads;
  std::string format = "text";
  std::string report_path;
  std::string json_path;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config_path, "Run configuration (JSON)")->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "Seed for every random choice");
  cmd->add_option("--k", o.k, "Candidates per prompt for best-of-k");
  cmd->add_option("--tie-margin", o.tie_margin, "Average-score gap below which a pair counts as a tie");
  cmd->add_option("--rules", o.rules, "Discretization rule file");
  cmd->add_option("--backend", o.backend, "Backend: stub, remote:<url>, precomputed:<path>, JSON or a .json file");
  cmd->add_option("--threads", o.threads, "Concurrent scoring workers");
  cmd->add_option("--format", o.format, "Report format")->check(CLI::IsMember({"csv", "text"}));
  cmd->add_option("--report", o.report_path, "Write the report here instead of stdout");
  cmd->add_option("--json", o.json_path, "Write the machine-readable result document here");
}

harness::RunConfig resolve_config(const CommonOptions& o) {
  harness::RunConfig c = o.config_path.empty() ? harness::RunConfig{} : harness::load_config(o.config_path);
  if (o.seed) c.seed = *o.seed;
  if (o.k) c.k = *o.k;
  if (o.tie_margin) c.tie_margin = *o.tie_margin;
  if (o.rules) c.rules_path = *o.rules;
  if (o.backend) c.backend = harness::parse_backend_option(*o.backend);
  if (o.threads) c.threads = *o.threads;
  c.validate();
  return c;
}

harness::ReportFormat report_format(const CommonOptions& o) { return *harness::report_format_from_string(o.format); }

void emit(const std::string& text, const std::string& path) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ve::Error(ve::ErrorCode::InvalidConfig, "cannot write " + path);
  out << text;
}

harness::FrameSource frame_source(const harness::RunConfig& c) {
  if (c.decoder_command.empty()) return {};
  auto decoder = std::make_shared<ve::pipeline::SubprocessDecoder>(c.decoder_command, c.decoder_thread_safe);
  std::shared_ptr<ve::pipeline::FrameInterpolator> interpolator;
  if (!c.interpolator_command.empty())
    interpolator = std::make_shared<ve::pipeline::SubprocessInterpolator>(c.interpolator_command);
  return harness::decoder_source(decoder, interpolator, c.pipeline);
}

struct Session {
  harness::RunConfig config;
  ve::rules::RuleSet rules;
  std::unique_ptr<ve::scoring::ScorerBackend> backend;
  ve::scoring::ScoreCache cache;
  harness::EvalSettings settings;

  explicit Session(const CommonOptions& o) : config(resolve_config(o)), rules(harness::load_rule_set(config)) {
    backend = harness::make_backend(config.backend, config, rules);
    if (!config.cache_path.empty()) cache.load(config.cache_path);
    settings.fingerprint = harness::make_fingerprint(config, rules, backend->fingerprint());
    settings.scoring = {frame_source(config), &cache, config.threads};
  }

  void save_cache() const {
    if (!config.cache_path.empty()) cache.save(config.cache_path);
  }
};

std::vector<ve::VideoRecord> records_of(const std::vector<ve::LabeledRecord>& dataset) {
  std::vector<ve::VideoRecord> out;
  for (const auto& r : dataset) out.push_back(r.record);
  return out;
}

int exit_code_for(ve::ErrorCode code) {
  switch (code) {
    case ve::ErrorCode::SchemaError:
    case ve::ErrorCode::DuplicateId:
    case ve::ErrorCode::MalformedRule:
    case ve::ErrorCode::InvalidConfig:
    case ve::ErrorCode::OutOfRangeRating:
    case ve::ErrorCode::UnresolvedId:
      return 2;
    case ve::ErrorCode::ProviderError:
    case ve::ErrorCode::AllParsesFailed:
      return 3;
    default:
      return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Text-to-video evaluation toolkit"};
  app.require_subcommand(1);

  // eval-correlation
  CommonOptions corr_opts;
  std::string corr_dataset, corr_ratings, corr_benchmark = "VideoFeedback", corr_method;
  std::vector<std::string> corr_aspects;
  bool corr_random = false;
  auto* corr = app.add_subcommand("eval-correlation", "Spearman correlation against human labels");
  add_common(corr, corr_opts);
  corr->add_option("--dataset", corr_dataset, "JSON Lines records (with labels unless --evalcrafter is given)")
      ->required()
      ->check(CLI::ExistingFile);
  corr->add_option("--evalcrafter", corr_ratings, "EvalCrafter ratings CSV; restricts to VQ, TC and TVA")
      ->check(CLI::ExistingFile);
  corr->add_option("--benchmark", corr_benchmark, "Benchmark name in the report");
  corr->add_option("--method", corr_method, "Method name in the report");
  corr->add_option("--aspects", corr_aspects, "Aspect keys to evaluate (vq tc dd tva fc)");
  corr->add_flag("--random", corr_random, "Add the seeded Random row");

  // eval-preference
  CommonOptions pref_opts;
  std::string pref_pairs, pref_videos, pref_benchmark = "GenAI-Bench", pref_method;
  bool pref_random = false, pref_subsample = false;
  auto* pref = app.add_subcommand("eval-preference", "Pairwise preference accuracy");
  add_common(pref, pref_opts);
  pref->add_option("--pairs", pref_pairs, "JSON Lines preference pairs")->required()->check(CLI::ExistingFile);
  pref->add_option("--videos", pref_videos, "JSON Lines video records")->required()->check(CLI::ExistingFile);
  pref->add_option("--benchmark", pref_benchmark, "Benchmark name in the report");
  pref->add_option("--method", pref_method, "Method name in the report");
  pref->add_flag("--subsample", pref_subsample, "Sample vbench_subsample prompts per pair group");
  pref->add_flag("--random", pref_random, "Add the seeded Random row");

  // iaa
  CommonOptions iaa_opts;
  std::string iaa_ratings, iaa_level = "ordinal";
  auto* iaa = app.add_subcommand("iaa", "Inter-annotator agreement");
  add_common(iaa, iaa_opts);
  iaa->add_option("--ratings", iaa_ratings, "CSV item_id,rater,aspect,label")->required()->check(CLI::ExistingFile);
  iaa->add_option("--level", iaa_level, "Krippendorff alpha level")
      ->check(CLI::IsMember({"nominal", "ordinal", "interval"}));

  // discretize
  CommonOptions disc_opts;
  std::string disc_metric, disc_input;
  std::vector<double> disc_values;
  auto* disc = app.add_subcommand("discretize", "Map metric values to 1..4 labels");
  add_common(disc, disc_opts);
  disc->add_option("--metric", disc_metric, "Metric name");
  disc->add_option("--value", disc_values, "Raw metric value(s)");
  disc->add_option("--input", disc_input, "JSON Lines {metric_name, direction, raw}")->check(CLI::ExistingFile);

  // best-of-k
  CommonOptions bok_opts;
  std::string bok_candidates, bok_out;
  auto* bok = app.add_subcommand("best-of-k", "Keep the highest-scoring candidate per prompt");
  add_common(bok, bok_opts);
  bok->add_option("--candidates", bok_candidates, "JSON Lines records, k per prompt")
      ->required()
      ->check(CLI::ExistingFile);
  bok->add_option("--out", bok_out, "Selected records as JSON Lines (default stdout)");

  // leaderboard
  CommonOptions lb_opts;
  std::string lb_records;
  bool lb_score = false;
  auto* lb = app.add_subcommand("leaderboard", "Rank models by their mean aspect scores");
  add_common(lb, lb_opts);
  lb->add_option("--records", lb_records, "JSON Lines records with scores")->required()->check(CLI::ExistingFile);
  lb->add_flag("--score", lb_score, "Score every record with the backend instead of using stored scores");

  // pipeline
  CommonOptions pipe_opts;
  std::string pipe_records, pipe_out_dir;
  auto* pipe = app.add_subcommand("pipeline", "Prompt filtering, frame extraction and static detection");
  add_common(pipe, pipe_opts);
  pipe->add_option("--records", pipe_records, "JSON Lines video records")->required()->check(CLI::ExistingFile);
  pipe->add_option("--out-dir", pipe_out_dir, "Write extracted frames as raw streams here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*corr) {
      Session s(corr_opts);
      s.settings.benchmark = corr_benchmark;
      s.settings.method = corr_method;
      std::vector<ve::Aspect> aspects;
      for (const auto& key : corr_aspects) {
        auto a = ve::aspect_from_key(key);
        if (!a) throw ve::Error(ve::ErrorCode::InvalidConfig, "unknown aspect '" + key + "'");
        aspects.push_back(*a);
      }
      std::vector<harness::EvalItem> items;
      if (corr_ratings.empty()) {
        items = harness::items_from_labeled(harness::load_labeled_dataset(corr_dataset));
        if (aspects.empty()) aspects.assign(ve::kAllAspects.begin(), ve::kAllAspects.end());
      } else {
        items = harness::items_from_ratings(harness::load_dataset(corr_dataset, false),
                                            harness::load_evalcrafter_csv(corr_ratings));
        if (aspects.empty()) aspects.assign(harness::kEvalCrafterAspects.begin(), harness::kEvalCrafterAspects.end());
      }
      std::vector<harness::BenchmarkResult> results;
      if (corr_random)
        results.push_back(harness::random_correlation_row(items, aspects, s.settings, s.config.random_trials));
      results.push_back(harness::run_correlation_eval(items, *s.backend, aspects, s.settings));
      s.save_cache();
      emit(harness::run_report(results, report_format(corr_opts)), corr_opts.report_path);
      if (!corr_opts.json_path.empty())
        emit(harness::result_document(results, s.config).dump(2) + "\n", corr_opts.json_path);
    } else if (*pref) {
      Session s(pref_opts);
      s.settings.benchmark = pref_benchmark;
      s.settings.method = pref_method;
      auto pairs = harness::load_pairs(pref_pairs);
      const auto videos = records_of(harness::load_dataset(pref_videos, false));
      if (pref_subsample)
        pairs = harness::subsample_pair_groups(pairs, videos, static_cast<std::size_t>(s.config.vbench_subsample),
                                               s.config.seed);
      std::vector<harness::BenchmarkResult> results;
      if (pref_random) results.push_back(harness::random_preference_row(pairs, s.settings, s.config.random_trials));
      results.push_back(harness::run_preference_eval(pairs, videos, *s.backend, s.config.tie_margin, s.settings));
      s.save_cache();
      emit(harness::run_report(results, report_format(pref_opts)), pref_opts.report_path);
      if (!pref_opts.json_path.empty())
        emit(harness::result_document(results, s.config).dump(2) + "\n", pref_opts.json_path);
    } else if (*iaa) {
      resolve_config(iaa_opts);
      const auto level = iaa_level == "nominal"   ? ve::stats::AlphaLevel::nominal
                         : iaa_level == "interval" ? ve::stats::AlphaLevel::interval
                                                   : ve::stats::AlphaLevel::ordinal;
      const auto rows = harness::iaa_table(harness::load_rating_matrices(iaa_ratings), level);
      emit(harness::render_iaa(rows, report_format(iaa_opts)), iaa_opts.report_path);
    } else if (*disc) {
      const auto config = resolve_config(disc_opts);
      const auto rules = harness::load_rule_set(config);
      std::vector<ve::MetricValue> values;
      if (!disc_input.empty()) {
        std::ifstream in(disc_input);
        for (std::string line; std::getline(in, line);)
          if (!ve::trim(line).empty()) {
            try {
              values.push_back(nlohmann::json::parse(line).get<ve::MetricValue>());
            } catch (const nlohmann::json::exception& e) {
              throw ve::Error(ve::ErrorCode::SchemaError, disc_input + ": " + e.what());
            }
          }
      }
      if (!disc_values.empty()) {
        auto it = rules.find(disc_metric);
        if (it == rules.end()) throw ve::Error(ve::ErrorCode::InvalidConfig, "no rule for metric '" + disc_metric + "'");
        for (double v : disc_values) values.push_back({disc_metric, it->second.direction(), v});
      }
      if (values.empty()) throw ve::Error(ve::ErrorCode::InvalidConfig, "give --metric with --value, or --input");
      std::string out = "metric,value,label\n";
      for (const auto& v : values) {
        auto it = rules.find(v.metric_name);
        if (it == rules.end())
          throw ve::Error(ve::ErrorCode::RuleMismatch, "no rule for metric '" + v.metric_name + "'");
        std::ostringstream line;
        line << v.metric_name << ',' << v.raw << ',' << ve::rules::discretize(v, it->second).value() << '\n';
        out += line.str();
      }
      emit(out, disc_opts.report_path);
    } else if (*bok) {
      Session s(bok_opts);
      const auto candidates = harness::load_dataset(bok_candidates, false);
      std::vector<std::string> prompts = harness::unique_prompts(candidates);
      std::string out;
      std::size_t failures = 0;
      for (const auto& prompt : prompts) {
        std::vector<harness::Candidate> group;
        for (const auto& r : candidates)
          if (r.record.prompt == prompt && group.size() < static_cast<std::size_t>(s.config.k)) {
            harness::Candidate c{r.record, std::nullopt};
            if (s.backend->needs_frames()) {
              if (!s.settings.scoring.frames)
                throw ve::Error(ve::ErrorCode::InvalidConfig, "backend needs frames but no decoder is configured");
              c.frames = s.settings.scoring.frames(r.record);
            }
            group.push_back(std::move(c));
          }
        if (group.size() != static_cast<std::size_t>(s.config.k))
          ve::warn("prompt '" + prompt + "' has " + std::to_string(group.size()) + " candidates, expected " +
                   std::to_string(s.config.k));
        const auto pick = harness::best_of_k(group, *s.backend, &s.cache);
        failures += pick.parse_failures;
        out += nlohmann::json(ve::LabeledRecord{group[pick.index].record, pick.scores}).dump() + "\n";
      }
      if (failures > 0) ve::warn(std::to_string(failures) + " candidate outputs failed to parse");
      s.save_cache();
      emit(out, bok_out);
    } else if (*lb) {
      auto records = harness::load_dataset(lb_records, false);
      if (lb_score) {
        Session s(lb_opts);
        const auto outcomes = harness::score_all(records_of(records), *s.backend, s.settings.scoring);
        for (std::size_t i = 0; i < records.size(); ++i) records[i].scores = outcomes[i].scores;
        s.save_cache();
      } else {
        resolve_config(lb_opts);
      }
      emit(harness::render_leaderboard(harness::leaderboard(records), report_format(lb_opts)), lb_opts.report_path);
    } else if (*pipe) {
      const auto config = resolve_config(pipe_opts);
      const auto source = frame_source(config);
      std::unique_ptr<ve::pipeline::NsfwClassifier> nsfw;
      if (!config.nsfw_command.empty())
        nsfw = std::make_unique<ve::pipeline::SubprocessNsfwClassifier>(config.nsfw_command);
      if (!pipe_out_dir.empty()) std::filesystem::create_directories(pipe_out_dir);
      std::string out;
      for (const auto& r : harness::load_dataset(pipe_records, false)) {
        nlohmann::json line{{"id", r.record.id}};
        const auto decision = ve::pipeline::filter_prompt(r.record.prompt, config.pipeline, nsfw.get());
        line["words"] = decision.word_count;
        line["prompt_accepted"] = decision.accepted();
        if (decision.rejection) line["rejection"] = ve::pipeline::to_string(*decision.rejection);
        if (source) {
          try {
            const auto frames = source(r.record);
            const auto check = ve::pipeline::static_check(frames, config.pipeline);
            line["frames"] = frames.size();
            line["fps"] = frames.fps();
            line["static"] = check.is_static;
            line["mean_ssim"] = check.mean_ssim;
            line["mean_mse"] = check.mean_mse;
            if (!pipe_out_dir.empty()) {
              std::ofstream f(std::filesystem::path(pipe_out_dir) / (r.record.id + ".vframes"), std::ios::binary);
              f << ve::pipeline::encode_raw_frames(frames.frames(), frames.fps());
            }
          } catch (const ve::Error& e) {
            line["error"] = e.what();
          }
        }
        out += line.dump() + "\n";
      }
      emit(out, pipe_opts.report_path);
    }
  } catch (const ve::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
