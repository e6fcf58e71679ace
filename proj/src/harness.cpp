#include "videoeval/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <random>
#include <set>
#include <sstream>
#include <thread>
#include <unordered_map>

#include "videoeval/protocol.hpp"
#include "videoeval/stub.hpp"
#include "videoeval/util.hpp"

namespace videoeval::harness {

namespace {

constexpr std::string_view kNormalization = "evalcrafter=(mean-1)/4;display=(mean-1)/3*100";

std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  std::string s(buf);
  if (s.front() == '-' && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
  return s;
}

std::string format_statistic(const stats::Statistic& v, ValueFormat format) {
  if (!v) return "n/a";
  return fixed(format == ValueFormat::correlation ? *v * 100.0 : *v, 1);
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::SchemaError, "cannot open " + path.string());
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

template <typename T>
std::vector<T> load_jsonl(const std::filesystem::path& path) {
  std::vector<T> out;
  const auto lines = read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(i + 1) + ": ";
    try {
      out.push_back(nlohmann::json::parse(lines[i]).get<T>());
    } catch (const Error& e) {
      throw Error(e.code(), where + e.what(), e.aspect());
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::SchemaError, where + e.what());
    }
  }
  return out;
}

int parse_int_field(std::string_view field, const std::string& where) {
  const std::string t = trim(field);
  int v = 0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc{} || ptr != t.data() + t.size() || t.empty())
    throw Error(ErrorCode::SchemaError, where + "expected an integer, got '" + t + "'");
  return v;
}

Aspect parse_aspect_field(std::string_view field, const std::string& where) {
  const std::string t = to_lower(trim(field));
  if (auto a = aspect_from_key(t)) return *a;
  for (Aspect a : kAllAspects)
    if (t == aspect_phrase(a) || t == to_lower(aspect_title(a))) return a;
  throw Error(ErrorCode::SchemaError, where + "unknown aspect '" + t + "'");
}

// Data rows of a CSV file whose first line must equal `header`.
std::vector<std::pair<std::size_t, std::vector<std::string>>> read_csv(const std::filesystem::path& path,
                                                                       std::string_view header) {
  const auto lines = read_lines(path);
  std::size_t first = 0;
  while (first < lines.size() && trim(lines[first]).empty()) ++first;
  if (first == lines.size()) throw Error(ErrorCode::SchemaError, path.string() + ": empty file");
  std::string got;
  for (const auto& f : split(lines[first], ',')) got += (got.empty() ? "" : ",") + to_lower(trim(f));
  if (got != header)
    throw Error(ErrorCode::SchemaError, path.string() + ": expected header '" + std::string(header) + "'");
  const std::size_t width = split(header, ',').size();
  std::vector<std::pair<std::size_t, std::vector<std::string>>> rows;
  for (std::size_t i = first + 1; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    auto fields = split(lines[i], ',');
    if (fields.size() != width)
      throw Error(ErrorCode::SchemaError, path.string() + ":" + std::to_string(i + 1) + ": expected " +
                                              std::to_string(width) + " fields");
    rows.emplace_back(i + 1, std::move(fields));
  }
  return rows;
}

std::string csv_cell(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

std::string render_table(const Table& t, ReportFormat format) {
  std::string out;
  if (format == ReportFormat::csv) {
    const auto line = [&](const std::vector<std::string>& cells) {
      for (std::size_t i = 0; i < cells.size(); ++i) out += (i ? "," : "") + csv_cell(cells[i]);
      out += '\n';
    };
    line(t.header);
    for (const auto& r : t.rows) line(r);
    return out;
  }
  std::vector<std::size_t> width(t.header.size());
  for (std::size_t c = 0; c < t.header.size(); ++c) {
    width[c] = t.header[c].size();
    for (const auto& r : t.rows) width[c] = std::max(width[c], r[c].size());
  }
  const auto line = [&](const std::vector<std::string>& cells) {
    std::string l;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const std::string pad(width[c] - cells[c].size(), ' ');
      if (c == 0)
        l += cells[c] + pad;
      else
        l += "  " + pad + cells[c];
    }
    while (!l.empty() && l.back() == ' ') l.pop_back();
    out += l + '\n';
  };
  line(t.header);
  std::string rule;
  for (std::size_t c = 0; c < width.size(); ++c) rule += (c ? "  " : "") + std::string(width[c], '-');
  out += rule + '\n';
  for (const auto& r : t.rows) line(r);
  return out;
}

bool is_media_failure(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnreadableMedia:
    case ErrorCode::TooFewFrames:
    case ErrorCode::InvalidTarget:
    case ErrorCode::TargetExceedsSource:
    case ErrorCode::ShapeMismatch:
      return true;
    default:
      return false;
  }
}

std::string method_name(const EvalSettings& settings, const scoring::ScorerBackend& backend) {
  return settings.method.empty() ? std::string(scoring::to_string(backend.kind())) : settings.method;
}

void warn_failures(const std::string& what, const Counts& c) {
  if (c.parse_failures > 0)
    warn(what + ": " + std::to_string(c.parse_failures) + " of " + std::to_string(c.total) +
         " outputs failed to parse and were excluded");
  if (c.skipped > 0) warn(what + ": " + std::to_string(c.skipped) + " of " + std::to_string(c.total) + " skipped");
}

std::vector<std::string> sample_prompts(std::vector<std::string> prompts, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw Error(ErrorCode::InvalidArgument, "sample size must be >= 1");
  if (prompts.size() < n)
    throw Error(ErrorCode::TooFewPrompts, "requested " + std::to_string(n) + " prompts but only " +
                                              std::to_string(prompts.size()) + " are unique");
  std::mt19937_64 rng(seed);
  partial_shuffle(prompts, n, rng);
  prompts.resize(n);
  return prompts;
}

std::string group_name(const PreferencePair& p) { return p.group.empty() ? "overall" : p.group; }

}  // namespace

// --- config ------------------------------------------------------------------

void RunConfig::validate() const {
  if (k < 1) throw Error(ErrorCode::InvalidConfig, "k must be >= 1");
  if (vbench_subsample < 1) throw Error(ErrorCode::InvalidConfig, "vbench_subsample must be >= 1");
  if (!std::isfinite(tie_margin) || tie_margin < 0.0) throw Error(ErrorCode::InvalidConfig, "tie_margin must be >= 0");
  if (threads < 1) throw Error(ErrorCode::InvalidConfig, "threads must be >= 1");
  if (random_trials < 1) throw Error(ErrorCode::InvalidConfig, "random_trials must be >= 1");
  pipeline.validate();
}

void to_json(nlohmann::json& j, const RunConfig& c) {
  j = nlohmann::json{{"seed", c.seed},
                     {"k", c.k},
                     {"vbench_subsample", c.vbench_subsample},
                     {"tie_margin", c.tie_margin},
                     {"threads", c.threads},
                     {"random_trials", c.random_trials},
                     {"backend", c.backend},
                     {"rules", c.rules_path},
                     {"providers", c.providers},
                     {"decoder", c.decoder_command},
                     {"interpolator", c.interpolator_command},
                     {"nsfw", c.nsfw_command},
                     {"decoder_thread_safe", c.decoder_thread_safe},
                     {"cache", c.cache_path},
                     {"pipeline", c.pipeline}};
}

void from_json(const nlohmann::json& j, RunConfig& c) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidConfig, "config must be a JSON object");
  static const std::set<std::string> known = {"seed",     "k",         "vbench_subsample", "tie_margin",
                                              "threads",  "random_trials", "backend",      "rules",
                                              "providers", "decoder",  "interpolator",     "nsfw",
                                              "decoder_thread_safe", "cache", "pipeline"};
  for (const auto& [key, _] : j.items())
    if (!known.contains(key)) throw Error(ErrorCode::InvalidConfig, "unknown config key '" + key + "'");
  RunConfig out;
  try {
    out.seed = j.value("seed", out.seed);
    out.k = j.value("k", out.k);
    out.vbench_subsample = j.value("vbench_subsample", out.vbench_subsample);
    out.tie_margin = j.value("tie_margin", out.tie_margin);
    out.threads = j.value("threads", out.threads);
    out.random_trials = j.value("random_trials", out.random_trials);
    if (j.contains("backend")) out.backend = j.at("backend");
    out.rules_path = j.value("rules", out.rules_path);
    out.providers = j.value("providers", out.providers);
    out.decoder_command = j.value("decoder", out.decoder_command);
    out.interpolator_command = j.value("interpolator", out.interpolator_command);
    out.nsfw_command = j.value("nsfw", out.nsfw_command);
    out.decoder_thread_safe = j.value("decoder_thread_safe", out.decoder_thread_safe);
    out.cache_path = j.value("cache", out.cache_path);
    if (j.contains("pipeline")) out.pipeline = j.at("pipeline").get<pipeline::PipelineConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, e.what());
  }
  out.validate();
  c = std::move(out);
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::InvalidConfig, "cannot open config " + path.string());
  try {
    return nlohmann::json::parse(in).get<RunConfig>();
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::InvalidConfig, path.string() + ": " + e.what());
  }
}

rules::RuleSet load_rule_set(const RunConfig& config) {
  return config.rules_path.empty() ? rules::default_rules() : rules::load_rules(config.rules_path);
}

std::string Fingerprint::digest() const {
  const nlohmann::json j{{"seed", seed},
                         {"tie_margin", tie_margin},
                         {"rules_hash", rules_hash},
                         {"backend", backend},
                         {"normalization", normalization}};
  return sha256_hex(j.dump());
}

Fingerprint make_fingerprint(const RunConfig& config, const rules::RuleSet& rules, const std::string& backend) {
  return {config.seed, config.tie_margin, rules::rules_fingerprint(rules), backend, std::string(kNormalization)};
}

stats::Statistic BenchmarkResult::average() const {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& v : values)
    if (v) {
      sum += *v;
      ++n;
    }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

nlohmann::json to_json(const BenchmarkResult& r) {
  nlohmann::json values = nlohmann::json::object();
  for (std::size_t i = 0; i < r.columns.size(); ++i)
    values[r.columns[i]] = r.values[i] ? nlohmann::json(*r.values[i]) : nlohmann::json(nullptr);
  const auto avg = r.average();
  return {{"benchmark", r.benchmark},
          {"method", r.method},
          {"statistic", r.format == ValueFormat::correlation ? "spearman" : "pairwise_accuracy_percent"},
          {"columns", r.columns},
          {"values", values},
          {"average", avg ? nlohmann::json(*avg) : nlohmann::json(nullptr)},
          {"counts",
           {{"total", r.counts.total},
            {"evaluated", r.counts.evaluated},
            {"parse_failures", r.counts.parse_failures},
            {"skipped", r.counts.skipped}}},
          {"degenerate_columns", r.degenerate_columns},
          {"fingerprint",
           {{"seed", r.fingerprint.seed},
            {"tie_margin", r.fingerprint.tie_margin},
            {"rules_hash", r.fingerprint.rules_hash},
            {"backend", r.fingerprint.backend},
            {"normalization", r.fingerprint.normalization},
            {"digest", r.fingerprint.digest()}}}};
}

// --- inputs ------------------------------------------------------------------

std::vector<LabeledRecord> load_dataset(const std::filesystem::path& path, bool require_scores) {
  auto records = load_jsonl<LabeledRecord>(path);
  std::set<std::string> seen;
  for (const auto& r : records) {
    if (!seen.insert(r.record.id).second)
      throw Error(ErrorCode::DuplicateId, path.string() + ": duplicate id '" + r.record.id + "'");
    if (require_scores && !r.scores)
      throw Error(ErrorCode::SchemaError, path.string() + ": record '" + r.record.id + "' has no scores");
  }
  return records;
}

std::vector<LabeledRecord> load_labeled_dataset(const std::filesystem::path& path) { return load_dataset(path, true); }

std::vector<PreferencePair> load_pairs(const std::filesystem::path& path) { return load_jsonl<PreferencePair>(path); }

double normalize_evalcrafter(int r1, int r2, int r3) {
  for (int r : {r1, r2, r3})
    if (r < 1 || r > 5) throw Error(ErrorCode::OutOfRangeRating, "rating " + std::to_string(r) + " outside 1..5");
  return ((r1 + r2 + r3) / 3.0 - 1.0) / 4.0;
}

std::map<std::string, ReferenceScores> load_evalcrafter_csv(const std::filesystem::path& path) {
  std::map<std::string, ReferenceScores> out;
  for (const auto& [line, f] : read_csv(path, "video_id,aspect,r1,r2,r3")) {
    const std::string where = path.string() + ":" + std::to_string(line) + ": ";
    const std::string id = trim(f[0]);
    if (id.empty()) throw Error(ErrorCode::SchemaError, where + "empty video_id");
    const Aspect a = parse_aspect_field(f[1], where);
    double v = 0.0;
    try {
      v = normalize_evalcrafter(parse_int_field(f[2], where), parse_int_field(f[3], where),
                                parse_int_field(f[4], where));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::OutOfRangeRating) throw;
      throw Error(e.code(), where + e.what(), a);
    }
    auto& slot = out[id][index_of(a)];
    if (slot) throw Error(ErrorCode::DuplicateId, where + "second rating row for '" + id + "' " + std::string(aspect_key(a)));
    slot = v;
  }
  return out;
}

std::vector<EvalItem> items_from_labeled(const std::vector<LabeledRecord>& dataset) {
  std::vector<EvalItem> items;
  items.reserve(dataset.size());
  for (const auto& r : dataset) {
    if (!r.scores) throw Error(ErrorCode::SchemaError, "record '" + r.record.id + "' has no scores");
    EvalItem item{r.record, {}};
    for (Aspect a : kAllAspects) item.reference[index_of(a)] = (*r.scores)[a];
    items.push_back(std::move(item));
  }
  return items;
}

std::vector<EvalItem> items_from_ratings(const std::vector<LabeledRecord>& records,
                                         const std::map<std::string, ReferenceScores>& ratings) {
  std::unordered_map<std::string, const VideoRecord*> by_id;
  for (const auto& r : records) by_id.emplace(r.record.id, &r.record);
  std::vector<EvalItem> items;
  for (const auto& [id, ref] : ratings) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw Error(ErrorCode::UnresolvedId, "rated video '" + id + "' is not in the dataset");
    items.push_back({*it->second, ref});
  }
  return items;
}

std::map<Aspect, stats::LabelMatrix> load_rating_matrices(const std::filesystem::path& path) {
  struct Grid {
    std::vector<std::string> items;
    std::map<std::string, std::size_t> item_index;
    std::map<std::pair<std::size_t, std::size_t>, int> cells;
  };
  std::vector<std::string> raters;
  std::map<std::string, std::size_t> rater_index;
  std::map<Aspect, Grid> grids;
  for (const auto& [line, f] : read_csv(path, "item_id,rater,aspect,label")) {
    const std::string where = path.string() + ":" + std::to_string(line) + ": ";
    const std::string item = trim(f[0]);
    const std::string rater = trim(f[1]);
    const Aspect a = parse_aspect_field(f[2], where);
    const int label = parse_int_field(f[3], where);
    if (!RatingLabel::is_valid(label))
      throw Error(ErrorCode::OutOfRangeRating, where + "label " + std::to_string(label) + " outside 1..4", a);
    if (!rater_index.contains(rater)) {
      rater_index[rater] = raters.size();
      raters.push_back(rater);
    }
    Grid& g = grids[a];
    if (!g.item_index.contains(item)) {
      g.item_index[item] = g.items.size();
      g.items.push_back(item);
    }
    if (!g.cells.emplace(std::pair{g.item_index[item], rater_index[rater]}, label).second)
      throw Error(ErrorCode::DuplicateId, where + "rater '" + rater + "' labels '" + item + "' twice");
  }
  std::map<Aspect, stats::LabelMatrix> out;
  for (const auto& [a, g] : grids) {
    stats::LabelMatrix m(g.items.size(), raters.size());
    for (const auto& [pos, label] : g.cells) m.set(pos.first, pos.second, label);
    out.emplace(a, std::move(m));
  }
  return out;
}

// --- scoring -----------------------------------------------------------------

FrameSource decoder_source(std::shared_ptr<pipeline::FrameDecoder> decoder,
                           std::shared_ptr<pipeline::FrameInterpolator> interpolator,
                           pipeline::PipelineConfig config) {
  if (!decoder) throw Error(ErrorCode::InvalidConfig, "no frame decoder configured");
  auto lock = std::make_shared<std::mutex>();
  return [decoder, interpolator, config, lock](const VideoRecord& record) {
    std::unique_lock<std::mutex> guard(*lock, std::defer_lock);
    if (!decoder->thread_safe()) guard.lock();
    return pipeline::extract_frames(record, config, *decoder, interpolator.get());
  };
}

std::vector<ScoreOutcome> score_all(std::span<const VideoRecord> records, scoring::ScorerBackend& backend,
                                    const ScoringOptions& options) {
  if (backend.needs_frames() && !options.frames)
    throw Error(ErrorCode::InvalidConfig,
                std::string(scoring::to_string(backend.kind())) + " backend needs frames but no decoder is configured");
  std::vector<ScoreOutcome> outcomes(records.size());
  std::vector<std::exception_ptr> errors(records.size());

  const auto work = [&](std::size_t i) {
    const VideoRecord& record = records[i];
    try {
      std::optional<FrameSequence> frames;
      if (backend.needs_frames()) frames.emplace(options.frames(record));
      outcomes[i].scores = scoring::score_video(record, frames ? &*frames : nullptr, backend, options.cache);
    } catch (const Error& e) {
      if (is_parse_failure(e.code())) {
        outcomes[i].parse_failure = true;
        outcomes[i].message = e.what();
      } else if (is_media_failure(e.code())) {
        outcomes[i].skipped = true;
        outcomes[i].message = e.what();
      } else {
        errors[i] = std::current_exception();
      }
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };

  const std::size_t workers =
      std::max<std::size_t>(1, std::min({options.threads, backend.max_in_flight(), records.size()}));
  if (workers == 1) {
    for (std::size_t i = 0; i < records.size(); ++i) work(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t i; (i = next.fetch_add(1)) < records.size();) work(i);
      });
  }
  // Lowest index first, so the surfaced error does not depend on scheduling.
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  for (std::size_t i = 0; i < records.size(); ++i)
    if (!outcomes[i].message.empty()) warn("'" + records[i].id + "': " + outcomes[i].message);
  return outcomes;
}

BenchmarkResult run_correlation_eval(std::span<const EvalItem> items, scoring::ScorerBackend& backend,
                                     std::span<const Aspect> aspects, const EvalSettings& settings) {
  if (items.empty()) throw Error(ErrorCode::InvalidArgument, "empty dataset");
  if (aspects.empty()) throw Error(ErrorCode::InvalidArgument, "no aspects requested");
  std::vector<VideoRecord> records;
  records.reserve(items.size());
  for (const auto& it : items) records.push_back(it.record);
  const auto outcomes = score_all(records, backend, settings.scoring);

  BenchmarkResult r;
  r.benchmark = settings.benchmark;
  r.method = method_name(settings, backend);
  r.format = ValueFormat::correlation;
  r.fingerprint = settings.fingerprint;
  r.counts.total = items.size();
  for (const auto& o : outcomes) {
    if (o.scores) ++r.counts.evaluated;
    if (o.parse_failure) ++r.counts.parse_failures;
    if (o.skipped) ++r.counts.skipped;
  }
  if (r.counts.evaluated == 0)
    throw Error(ErrorCode::AllParsesFailed, r.method + " on " + r.benchmark + ": no video was scored (" +
                                                std::to_string(r.counts.parse_failures) + " parse failures, " +
                                                std::to_string(r.counts.skipped) + " skipped)");
  warn_failures(r.method + " on " + r.benchmark, r.counts);

  for (Aspect a : aspects) {
    std::vector<double> predicted, reference;
    for (std::size_t i = 0; i < items.size(); ++i) {
      const auto& ref = items[i].reference[index_of(a)];
      if (outcomes[i].scores && ref) {
        predicted.push_back((*outcomes[i].scores)[a]);
        reference.push_back(*ref);
      }
    }
    const std::string column(aspect_title(a));
    const stats::Statistic rho = predicted.size() >= 2 ? stats::spearman_rho(predicted, reference) : std::nullopt;
    if (!rho) r.degenerate_columns.push_back(column);
    r.columns.push_back(column);
    r.values.push_back(rho);
  }
  return r;
}

BenchmarkResult run_preference_eval(std::span<const PreferencePair> pairs, std::span<const VideoRecord> videos,
                                    scoring::ScorerBackend& backend, double tie_margin,
                                    const EvalSettings& settings) {
  if (pairs.empty()) throw Error(ErrorCode::InvalidArgument, "no preference pairs");
  std::unordered_map<std::string, const VideoRecord*> by_id;
  for (const auto& v : videos)
    if (!by_id.emplace(v.id, &v).second) throw Error(ErrorCode::DuplicateId, "duplicate video id '" + v.id + "'");

  std::vector<VideoRecord> needed;
  std::unordered_map<std::string, std::size_t> slot;
  for (const auto& p : pairs)
    for (const std::string* id : {&p.left, &p.right}) {
      auto it = by_id.find(*id);
      if (it == by_id.end()) throw Error(ErrorCode::UnresolvedId, "pair references unknown video '" + *id + "'");
      if (slot.emplace(*id, needed.size()).second) needed.push_back(*it->second);
    }
  const auto outcomes = score_all(needed, backend, settings.scoring);

  BenchmarkResult r;
  r.benchmark = settings.benchmark;
  r.method = method_name(settings, backend);
  r.format = ValueFormat::percent;
  r.fingerprint = settings.fingerprint;
  r.counts.total = pairs.size();

  std::vector<std::string> groups;
  std::map<std::string, std::vector<stats::ScoredPair>> scored;
  for (const auto& p : pairs) {
    const std::string g = group_name(p);
    if (!scored.contains(g)) groups.push_back(g);
    auto& bucket = scored[g];
    const auto& l = outcomes[slot.at(p.left)];
    const auto& rt = outcomes[slot.at(p.right)];
    if (l.parse_failure || rt.parse_failure) {
      ++r.counts.parse_failures;
    } else if (l.skipped || rt.skipped) {
      ++r.counts.skipped;
    } else {
      ++r.counts.evaluated;
      bucket.push_back({p, scoring::average_aspects(*l.scores), scoring::average_aspects(*rt.scores)});
    }
  }
  if (r.counts.evaluated == 0)
    throw Error(ErrorCode::AllParsesFailed, r.method + " on " + r.benchmark + ": no pair could be scored");
  warn_failures(r.method + " on " + r.benchmark, r.counts);

  for (const auto& g : groups) {
    const auto& bucket = scored.at(g);
    r.columns.push_back(g);
    if (bucket.empty()) {
      r.values.push_back(std::nullopt);
      r.degenerate_columns.push_back(g);
    } else {
      r.values.push_back(stats::pairwise_accuracy(bucket, tie_margin));
    }
  }
  return r;
}

BenchmarkResult random_correlation_row(std::span<const EvalItem> items, std::span<const Aspect> aspects,
                                       const EvalSettings& settings, int trials) {
  std::vector<std::vector<double>> columns;
  for (Aspect a : aspects) {
    std::vector<double> col;
    for (const auto& it : items)
      if (const auto& ref = it.reference[index_of(a)]) col.push_back(*ref);
    columns.push_back(std::move(col));
  }
  const auto estimates = stats::random_correlation_baseline(columns, settings.fingerprint.seed, trials);
  BenchmarkResult r;
  r.benchmark = settings.benchmark;
  r.method = "Random";
  r.format = ValueFormat::correlation;
  r.fingerprint = settings.fingerprint;
  r.counts = {items.size(), items.size(), 0, 0};
  for (std::size_t i = 0; i < aspects.size(); ++i) {
    const std::string column(aspect_title(aspects[i]));
    r.columns.push_back(column);
    r.values.push_back(estimates[i].mean);
    if (!estimates[i].mean) r.degenerate_columns.push_back(column);
  }
  return r;
}

BenchmarkResult random_preference_row(std::span<const PreferencePair> pairs, const EvalSettings& settings,
                                      int trials) {
  std::vector<std::string> groups;
  std::map<std::string, std::vector<PreferencePair>> by_group;
  for (const auto& p : pairs) {
    const std::string g = group_name(p);
    if (!by_group.contains(g)) groups.push_back(g);
    by_group[g].push_back(p);
  }
  BenchmarkResult r;
  r.benchmark = settings.benchmark;
  r.method = "Random";
  r.format = ValueFormat::percent;
  r.fingerprint = settings.fingerprint;
  r.counts = {pairs.size(), pairs.size(), 0, 0};
  for (std::size_t g = 0; g < groups.size(); ++g) {
    r.columns.push_back(groups[g]);
    r.values.push_back(
        stats::random_preference_baseline(by_group.at(groups[g]), settings.fingerprint.seed + g, trials).mean);
  }
  return r;
}

// --- selection ---------------------------------------------------------------

std::vector<std::string> unique_prompts(std::span<const LabeledRecord> dataset) {
  std::vector<std::string> prompts;
  std::set<std::string> seen;
  for (const auto& r : dataset)
    if (seen.insert(r.record.prompt).second) prompts.push_back(r.record.prompt);
  return prompts;
}

std::vector<LabeledRecord> subsample_prompts(std::span<const LabeledRecord> dataset, std::size_t n,
                                             std::uint64_t seed) {
  const auto chosen = sample_prompts(unique_prompts(dataset), n, seed);
  const std::set<std::string> keep(chosen.begin(), chosen.end());
  std::vector<LabeledRecord> out;
  for (const auto& r : dataset)
    if (keep.contains(r.record.prompt)) out.push_back(r);
  return out;
}

std::vector<PreferencePair> subsample_pair_groups(std::span<const PreferencePair> pairs,
                                                  std::span<const VideoRecord> videos, std::size_t n,
                                                  std::uint64_t seed) {
  std::unordered_map<std::string, const VideoRecord*> by_id;
  for (const auto& v : videos) by_id.emplace(v.id, &v);
  const auto prompt_of = [&](const PreferencePair& p) -> const std::string& {
    auto it = by_id.find(p.left);
    if (it == by_id.end()) throw Error(ErrorCode::UnresolvedId, "pair references unknown video '" + p.left + "'");
    return it->second->prompt;
  };
  std::map<std::string, std::vector<std::string>> prompts_by_group;
  for (const auto& p : pairs) {
    auto& list = prompts_by_group[p.group];
    const std::string& prompt = prompt_of(p);
    if (std::find(list.begin(), list.end(), prompt) == list.end()) list.push_back(prompt);
  }
  std::map<std::string, std::set<std::string>> keep;
  for (auto& [group, prompts] : prompts_by_group) {
    if (prompts.size() <= n) {
      keep[group] = {prompts.begin(), prompts.end()};
    } else {
      const auto chosen = sample_prompts(prompts, n, seed);
      keep[group] = {chosen.begin(), chosen.end()};
    }
  }
  std::vector<PreferencePair> out;
  for (const auto& p : pairs)
    if (keep.at(p.group).contains(prompt_of(p))) out.push_back(p);
  return out;
}

BestOfK best_of_k(std::span<const Candidate> candidates, scoring::ScorerBackend& backend, scoring::ScoreCache* cache) {
  if (candidates.empty()) throw Error(ErrorCode::InvalidArgument, "best-of-k needs at least one candidate");
  BestOfK out;
  std::optional<double> best;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const Candidate& c = candidates[i];
    try {
      const AspectScores s = scoring::score_video(c.record, c.frames ? &*c.frames : nullptr, backend, cache);
      out.candidate_scores.push_back(s);
      const double avg = scoring::average_aspects(s);
      if (!best || avg > *best) {
        best = avg;
        out.index = i;
        out.scores = s;
      }
    } catch (const Error& e) {
      if (!is_parse_failure(e.code())) throw;
      out.candidate_scores.push_back(std::nullopt);
      ++out.parse_failures;
    }
  }
  if (!best)
    throw Error(ErrorCode::AllParsesFailed, "none of the " + std::to_string(candidates.size()) + " candidates parsed");
  return out;
}

double display_score(double mean) { return (mean - 1.0) / 3.0 * 100.0; }

std::vector<LeaderboardRow> leaderboard(std::span<const LabeledRecord> records) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<const AspectScores*>> groups;
  for (const auto& r : records) {
    auto [it, inserted] = groups.try_emplace(r.record.model_name);
    if (inserted) order.push_back(r.record.model_name);
    if (r.scores) it->second.push_back(&*r.scores);
  }
  std::vector<LeaderboardRow> rows;
  for (const auto& model : order) {
    const auto& scores = groups.at(model);
    if (scores.empty()) throw Error(ErrorCode::EmptyModelGroup, "model '" + model + "' has no scored video");
    LeaderboardRow row;
    row.model = model;
    row.videos = scores.size();
    double total = 0.0;
    for (Aspect a : kAllAspects) {
      double sum = 0.0;
      for (const AspectScores* s : scores) sum += (*s)[a];
      row.mean[a] = sum / static_cast<double>(scores.size());
      row.display[index_of(a)] = display_score(row.mean[a]);
      total += row.display[index_of(a)];
    }
    row.display_average = total / static_cast<double>(kAspectCount);
    rows.push_back(std::move(row));
  }
  std::stable_sort(rows.begin(), rows.end(), [](const LeaderboardRow& a, const LeaderboardRow& b) {
    if (a.display_average != b.display_average) return a.display_average > b.display_average;
    return a.model < b.model;
  });
  return rows;
}

// --- reports -----------------------------------------------------------------

std::optional<ReportFormat> report_format_from_string(std::string_view s) {
  if (s == "csv") return ReportFormat::csv;
  if (s == "text" || s == "aligned_text") return ReportFormat::aligned_text;
  return std::nullopt;
}

std::string run_report(std::span<const BenchmarkResult> results, ReportFormat format) {
  const bool csv = format == ReportFormat::csv;
  const auto header_for = [&](const std::vector<std::string>& columns) {
    std::vector<std::string> h;
    if (csv) h.push_back("benchmark");
    h.push_back("method");
    h.insert(h.end(), columns.begin(), columns.end());
    h.push_back("Average");
    if (csv) h.insert(h.end(), {"evaluated", "parse_failures", "skipped", "total"});
    return h;
  };

  if (results.empty()) {
    std::vector<std::string> columns;
    for (Aspect a : kAllAspects) columns.emplace_back(aspect_title(a));
    return render_table({header_for(columns), {}}, format);
  }

  std::vector<std::string> order;
  std::map<std::string, std::vector<const BenchmarkResult*>> by_benchmark;
  for (const auto& r : results) {
    if (!by_benchmark.contains(r.benchmark)) order.push_back(r.benchmark);
    by_benchmark[r.benchmark].push_back(&r);
  }

  std::string out;
  for (std::size_t b = 0; b < order.size(); ++b) {
    const auto& group = by_benchmark.at(order[b]);
    std::vector<std::string> columns;
    for (const auto* r : group)
      for (const auto& c : r->columns)
        if (std::find(columns.begin(), columns.end(), c) == columns.end()) columns.push_back(c);

    Table t{header_for(columns), {}};
    std::vector<std::string> notes;
    for (const auto* r : group) {
      std::vector<std::string> row;
      if (csv) row.push_back(r->benchmark);
      row.push_back(r->method);
      for (const auto& c : columns) {
        auto it = std::find(r->columns.begin(), r->columns.end(), c);
        row.push_back(it == r->columns.end() ? "" : format_statistic(r->values[it - r->columns.begin()], r->format));
      }
      row.push_back(format_statistic(r->average(), r->format));
      if (csv)
        for (std::size_t n : {r->counts.evaluated, r->counts.parse_failures, r->counts.skipped, r->counts.total})
          row.push_back(std::to_string(n));
      t.rows.push_back(std::move(row));

      if (r->counts.parse_failures > 0 || r->counts.skipped > 0)
        notes.push_back(r->method + ": evaluated " + std::to_string(r->counts.evaluated) + " of " +
                        std::to_string(r->counts.total) + ", " + std::to_string(r->counts.parse_failures) +
                        " parse failures excluded, " + std::to_string(r->counts.skipped) + " skipped");
      if (!r->degenerate_columns.empty()) {
        std::string cols;
        for (const auto& c : r->degenerate_columns) cols += (cols.empty() ? "" : ", ") + c;
        notes.push_back(r->method + ": undefined statistic for " + cols);
      }
    }

    if (csv) {
      std::string body = render_table(t, format);
      out += b == 0 ? body : body.substr(body.find('\n') + 1);
      continue;
    }
    if (b > 0) out += '\n';
    const std::string unit = group.front()->format == ValueFormat::correlation ? "Spearman rho x 100" : "accuracy %";
    out += order[b] + " (" + unit + ")\n";
    out += render_table(t, format);
    for (const auto& n : notes) out += "note: " + n + '\n';
  }
  return out;
}

std::vector<IaaRow> iaa_table(const std::map<Aspect, stats::LabelMatrix>& matrices, stats::AlphaLevel level) {
  std::vector<IaaRow> rows;
  for (Aspect a : kAllAspects) {
    auto it = matrices.find(a);
    if (it == matrices.end()) continue;
    const auto& m = it->second;
    rows.push_back({a, m.items(), stats::match_ratio(m), m.complete() ? stats::fleiss_kappa(m) : std::nullopt,
                    stats::kripp_alpha(m, level)});
  }
  return rows;
}

std::string render_iaa(std::span<const IaaRow> rows, ReportFormat format) {
  Table t{{"aspect", "items", "match_ratio", "fleiss_kappa", "kripp_alpha"}, {}};
  const auto cell = [](const stats::Statistic& s) { return s ? fixed(*s, 4) : std::string("n/a"); };
  for (const auto& r : rows)
    t.rows.push_back({std::string(aspect_title(r.aspect)), std::to_string(r.items), cell(r.match_ratio),
                      cell(r.fleiss_kappa), cell(r.kripp_alpha)});
  return render_table(t, format);
}

std::string render_leaderboard(std::span<const LeaderboardRow> rows, ReportFormat format) {
  Table t{{"rank", "model", "videos"}, {}};
  for (Aspect a : kAllAspects) t.header.emplace_back(aspect_title(a));
  t.header.push_back("Average");
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    std::vector<std::string> row{std::to_string(i + 1), r.model, std::to_string(r.videos)};
    for (double d : r.display) row.push_back(fixed(d, 1));
    row.push_back(fixed(r.display_average, 1));
    t.rows.push_back(std::move(row));
  }
  return render_table(t, format);
}

std::string render_correlation_matrix(const stats::CorrelationMatrix& m, ReportFormat format) {
  Table t{{"spearman"}, {}};
  for (Aspect a : kAllAspects) t.header.emplace_back(aspect_title(a));
  for (Aspect a : kAllAspects) {
    std::vector<std::string> row{std::string(aspect_title(a))};
    for (Aspect b : kAllAspects) {
      const auto& v = m[index_of(a)][index_of(b)];
      row.push_back(v ? fixed(*v, 3) : "n/a");
    }
    t.rows.push_back(std::move(row));
  }
  return render_table(t, format);
}

nlohmann::json result_document(std::span<const BenchmarkResult> results, const RunConfig& config) {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& r : results) list.push_back(to_json(r));
  return {{"config", config}, {"results", list}};
}

// --- backend construction ----------------------------------------------------

namespace {

std::shared_ptr<protocol::Transport> transport_for(const std::string& endpoint, std::uint64_t seed) {
  if (endpoint == "stub") return std::make_shared<protocol::InProcessTransport>("stub", stub::service_handler(seed));
  return std::make_shared<protocol::HttpTransport>(endpoint);
}

ScoringMode mode_of(const nlohmann::json& d) {
  const std::string s = d.value("mode", std::string("generative"));
  auto m = scoring_mode_from_string(s);
  if (!m) throw Error(ErrorCode::InvalidConfig, "unknown scoring mode '" + s + "'");
  return *m;
}

}  // namespace

nlohmann::json parse_backend_option(const std::string& text) {
  const std::string t = trim(text);
  if (!t.empty() && (t.front() == '{' || t.front() == '"')) {
    try {
      return nlohmann::json::parse(t);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorCode::InvalidConfig, std::string("bad --backend JSON: ") + e.what());
    }
  }
  if (t.ends_with(".json") && std::filesystem::exists(t)) {
    std::ifstream in(t);
    try {
      return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorCode::InvalidConfig, t + ": " + e.what());
    }
  }
  return t;
}

std::unique_ptr<scoring::ScorerBackend> make_backend(const nlohmann::json& descriptor, const RunConfig& config,
                                                     const rules::RuleSet& rules) {
  nlohmann::json d = descriptor;
  if (d.is_string()) {
    const std::string s = d.get<std::string>();
    if (s == "stub") d = {{"kind", "stub"}};
    else if (s == "stub-regression") d = {{"kind", "stub"}, {"mode", "regression"}};
    else if (s.starts_with("remote:")) d = {{"kind", "remote"}, {"url", s.substr(7)}};
    else if (s.starts_with("precomputed:")) d = {{"kind", "precomputed"}, {"path", s.substr(12)}};
    else throw Error(ErrorCode::InvalidConfig, "unknown backend '" + s + "'");
  }
  if (!d.is_object() || !d.contains("kind")) throw Error(ErrorCode::InvalidConfig, "backend descriptor needs a kind");

  try {
    const std::string kind = d.at("kind").get<std::string>();
    const scoring::ParseOptions parse{d.value("strict", false), d.value("allow_synonyms", true)};
    const std::size_t in_flight = d.value("max_in_flight", std::size_t{1});
    if (kind == "stub")
      return std::make_unique<scoring::RemoteServiceBackend>(transport_for("stub", d.value("seed", config.seed)),
                                                             mode_of(d), parse, in_flight);
    if (kind == "remote") {
      protocol::HttpOptions http;
      http.timeout = std::chrono::milliseconds(d.value("timeout_ms", 30000));
      http.max_retries = d.value("max_retries", 2);
      return std::make_unique<scoring::RemoteServiceBackend>(
          std::make_shared<protocol::HttpTransport>(d.at("url").get<std::string>(), http), mode_of(d), parse,
          in_flight);
    }
    if (kind == "precomputed") {
      const std::string path = d.at("path").get<std::string>();
      std::map<std::string, AspectScores> scores;
      for (const auto& r : load_dataset(path, true)) scores.emplace(r.record.id, *r.scores);
      return std::make_unique<scoring::PrecomputedBackend>(std::filesystem::path(path).filename().string(),
                                                           std::move(scores));
    }
    if (kind == "feature") {
      scoring::FeatureMapping mapping;
      for (const auto& [key, metric] : d.at("mapping").items()) {
        auto a = aspect_from_key(key);
        if (!a) throw Error(ErrorCode::InvalidConfig, "unknown aspect '" + key + "' in feature mapping");
        mapping[index_of(*a)] = metric.get<std::string>();
      }
      scoring::FeatureProviders providers;
      const auto embedding = [&](const std::string& name) -> std::shared_ptr<metrics::EmbeddingProvider> {
        auto it = config.providers.find(name);
        if (it == config.providers.end()) return nullptr;
        if (it->second == "stub") return std::make_shared<stub::StubEmbeddingProvider>(config.seed);
        return std::make_shared<protocol::RemoteEmbeddingProvider>(transport_for(it->second, config.seed));
      };
      const auto iqa = [&](const std::string& name) -> std::shared_ptr<metrics::IqaProvider> {
        auto it = config.providers.find(name);
        if (it == config.providers.end()) return nullptr;
        if (it->second == "stub") return std::make_shared<stub::StubIqaProvider>(config.seed);
        return std::make_shared<protocol::RemoteIqaProvider>(transport_for(it->second, config.seed));
      };
      providers.clip = embedding("clip");
      providers.dino = embedding("dino");
      providers.xclip = embedding("xclip");
      providers.piqe = iqa("piqe");
      providers.brisque = iqa("brisque");
      return std::make_unique<scoring::FeatureCompositeBackend>(mapping, rules, providers,
                                                                config.pipeline.sample_count_for_dynamics);
    }
    throw Error(ErrorCode::InvalidConfig, "unknown backend kind '" + kind + "'");
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("bad backend descriptor: ") + e.what());
  }
}

}  // namespace videoeval::harness
