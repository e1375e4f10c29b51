#pragma once

// Subcommand implementations behind the `toolrl` binary. Each returns the
// process exit code:
//   0 success, 1 malformed input lines, 2 missing/unreadable file, 3 invalid config.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include <nlohmann/json.hpp>

#include "toolrl/config.hpp"
#include "toolrl/corpus.hpp"
#include "toolrl/metrics.hpp"
#include "toolrl/reward.hpp"
#include "toolrl/simenv.hpp"

namespace toolrl::cli {

enum ExitCode : int { kOk = 0, kMalformedInput = 1, kMissingFile = 2, kBadConfig = 3 };

struct Streams {
  std::ostream& out;
  std::ostream& err;
};

enum class Verbosity { Quiet, Normal, Debug };

/// Log verbosity from TOOLRL_LOG (quiet | normal | debug).
inline Verbosity verbosity() {
  const char* v = std::getenv("TOOLRL_LOG");
  if (!v) return Verbosity::Normal;
  const std::string_view s(v);
  if (s == "quiet") return Verbosity::Quiet;
  if (s == "debug") return Verbosity::Debug;
  return Verbosity::Normal;
}

namespace detail {

inline std::optional<std::string> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes through `fn` to `path` via a temporary file and rename, or to
/// `fallback` when no path is given.
inline bool write_output(const std::optional<std::string>& path, std::ostream& fallback,
                         const std::function<void(std::ostream&)>& fn, std::ostream& err) {
  if (!path || path->empty() || *path == "-") {
    fn(fallback);
    fallback.flush();
    return true;
  }
  const std::string tmp = *path + ".tmp." + std::to_string(::getpid());
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) {
      err << "error: cannot write " << *path << '\n';
      return false;
    }
    fn(f);
    f.flush();
    if (!f) {
      err << "error: write failed for " << *path << '\n';
      std::filesystem::remove(tmp);
      return false;
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, *path, ec);
  if (ec) {
    err << "error: cannot move output into place: " << ec.message() << '\n';
    std::filesystem::remove(tmp);
    return false;
  }
  return true;
}

inline void print_issues(const LoadedConfig& cfg, std::ostream& err) {
  for (const auto& i : cfg.issues) {
    err << (i.severity == ConfigIssue::Severity::Error ? "error" : "warning");
    if (!i.field.empty()) err << " [" << i.field << "]";
    err << ": " << i.message << '\n';
  }
}

/// Loads and validates a config file; defaults when no path is given.
inline std::optional<LoadedConfig> load_config_file(const std::optional<std::string>& path, std::ostream& err,
                                                    int& exit_code) {
  std::string text;
  if (path && !path->empty()) {
    auto contents = read_file(*path);
    if (!contents) {
      err << "error: cannot read config " << *path << '\n';
      exit_code = kMissingFile;
      return std::nullopt;
    }
    text = std::move(*contents);
  }
  LoadedConfig cfg = load_config(text);
  print_issues(cfg, err);
  if (!cfg.ok()) {
    exit_code = kBadConfig;
    return std::nullopt;
  }
  return cfg;
}

// Outcome from a scored record's reward object, recomputed when absent.
inline bool record_correct(const CorpusRecord& rec, const Transcript& t, const RewardWeights& w) {
  if (auto it = rec.source.find("reward"); it != rec.source.end() && it->is_object()) {
    if (auto rc = it->find("r_corr"); rc != it->end() && rc->is_number()) return rc->get<double>() > 0.0;
  }
  return corr_reward(t, w) > 0.0;
}

struct LoadedCorpus {
  std::vector<CorpusRecord> records;
  std::size_t malformed = 0;
};

inline std::optional<LoadedCorpus> load_corpus(const std::string& path, std::ostream& err) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    err << "error: cannot read " << path << '\n';
    return std::nullopt;
  }
  LoadedCorpus c;
  for_each_corpus_line(in, [&](std::size_t line, CorpusLine parsed) {
    if (parsed.record) {
      c.records.push_back(std::move(*parsed.record));
    } else {
      ++c.malformed;
      err << "warning: " << path << ":" << line << ": " << parsed.error << '\n';
    }
  });
  return c;
}

}  // namespace detail

struct ScoreOptions {
  std::string input;
  std::optional<std::string> output;
  std::optional<std::string> config;
};

/// Appends a `reward` object to every corpus line. Malformed lines become
/// {"line": n, "error": ...} records.
inline int cmd_score(const ScoreOptions& opt, Streams io) {
  int code = kOk;
  auto cfg = detail::load_config_file(opt.config, io.err, code);
  if (!cfg) return code;
  std::ifstream in(opt.input, std::ios::binary);
  if (!in) {
    io.err << "error: cannot read " << opt.input << '\n';
    return kMissingFile;
  }
  const ToolRegistry registry = cfg->config.env.registry();
  std::size_t scored = 0, malformed = 0;
  const bool written = detail::write_output(opt.output, io.out, [&](std::ostream& out) {
    for_each_corpus_line(in, [&](std::size_t line, CorpusLine parsed) {
      if (!parsed.record) {
        ++malformed;
        write_jsonl(out, {{"line", line}, {"error", parsed.error}});
        return;
      }
      const Transcript t = parse_record(*parsed.record, registry);
      nlohmann::json j = to_json(*parsed.record);
      j["reward"] = to_json(total_reward(t, cfg->config.reward, cfg->config.structure));
      write_jsonl(out, j);
      ++scored;
    });
  }, io.err);
  if (!written) return kMissingFile;
  if (verbosity() != Verbosity::Quiet) io.err << "scored " << scored << " records, " << malformed << " malformed\n";
  return malformed == 0 ? kOk : kMalformedInput;
}

struct TiuOptions {
  std::string input;
  std::optional<std::string> output;
  std::optional<std::string> config;
  std::string group_by = "dataset";
  std::string format = "text";  // text | json
};

/// Per-group TER/TTAC/TSS/TIU with a mean row. Input lines are either scored
/// corpus records or component rows {"group"|"dataset", "ter", "ttac", "tss"}.
inline int cmd_metrics_tiu(const TiuOptions& opt, Streams io) {
  int code = kOk;
  auto cfg = detail::load_config_file(opt.config, io.err, code);
  if (!cfg) return code;
  std::ifstream in(opt.input, std::ios::binary);
  if (!in) {
    io.err << "error: cannot read " << opt.input << '\n';
    return kMissingFile;
  }
  const ToolRegistry registry = cfg->config.env.registry();

  std::vector<std::string> order;
  std::map<std::string, std::vector<UsageRecord>> groups;
  std::vector<TiuRow> component_rows;
  std::size_t malformed = 0, line_no = 0;
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (toolrl::detail::trim(line).empty()) continue;
    const auto doc = nlohmann::json::parse(line, nullptr, false);
    if (doc.is_object() && doc.contains("ter")) {
      auto num = [&](const char* k) -> std::optional<double> {
        auto it = doc.find(k);
        if (it == doc.end() || !it->is_number()) return std::nullopt;
        return it->get<double>();
      };
      std::string name = doc.value("group", doc.value(opt.group_by, std::string("(none)")));
      component_rows.push_back(tiu_row(std::move(name), num("ter"), num("ttac"), num("tss")));
      continue;
    }
    CorpusLine parsed = parse_corpus_line(line);
    if (!parsed.record) {
      ++malformed;
      io.err << "warning: line " << line_no << ": " << parsed.error << '\n';
      continue;
    }
    const Transcript t = parse_record(*parsed.record, registry);
    std::string key = "(none)";
    if (auto it = parsed.record->source.find(opt.group_by); it != parsed.record->source.end())
      key = it->is_string() ? it->get<std::string>() : it->dump();
    if (!groups.contains(key)) order.push_back(key);
    groups[key].push_back(usage_record(t, detail::record_correct(*parsed.record, t, cfg->config.reward)));
  }

  std::vector<TiuRow> rows = std::move(component_rows);
  for (const auto& key : order) {
    TiuRow row = metrics_row(key, groups[key], registry);
    if (row.tss) {
      // KL from uniform over K tools is bounded by ln K.
      const double bound = std::log(static_cast<double>(registry.size()));
      if (*row.tss > bound + 1e-12) io.err << "warning: TSS " << *row.tss << " exceeds ln K for " << key << '\n';
    }
    rows.push_back(std::move(row));
  }
  const TiuReport report = make_report(std::move(rows));
  const bool written = detail::write_output(opt.output, io.out, [&](std::ostream& out) {
    if (opt.format == "json")
      out << to_json(report).dump(2) << '\n';
    else
      render_report_text(out, report);
  }, io.err);
  if (!written) return kMissingFile;
  return malformed == 0 ? kOk : kMalformedInput;
}

struct TransitionsOptions {
  std::string input_a;
  std::string input_b;
  std::optional<std::string> output;
  std::optional<std::string> config;
  long cutoff = 5;
};

inline int cmd_metrics_transitions(const TransitionsOptions& opt, Streams io) {
  int code = kOk;
  auto cfg = detail::load_config_file(opt.config, io.err, code);
  if (!cfg) return code;
  const ToolRegistry registry = cfg->config.env.registry();
  auto table_for = [&](const std::string& path, std::size_t& malformed) -> std::optional<TransitionTable> {
    auto corpus = detail::load_corpus(path, io.err);
    if (!corpus) return std::nullopt;
    malformed += corpus->malformed;
    TransitionTable table;
    for (const auto& rec : corpus->records) {
      const Transcript t = parse_record(rec, registry);
      const bool ok = detail::record_correct(rec, t, cfg->config.reward);
      add_transitions(table, t, ok ? Outcome::Correct : Outcome::Incorrect);
    }
    return table;
  };
  std::size_t malformed = 0;
  auto a = table_for(opt.input_a, malformed);
  if (!a) return kMissingFile;
  auto b = table_for(opt.input_b, malformed);
  if (!b) return kMissingFile;
  const auto diff = transition_diff(*a, *b, opt.cutoff);
  if (!detail::write_output(opt.output, io.out, [&](std::ostream& out) { write_diff_csv(out, diff); }, io.err))
    return kMissingFile;
  return malformed == 0 ? kOk : kMalformedInput;
}

struct TrainOptions {
  std::optional<std::string> config;
  std::optional<std::string> output;
  std::optional<std::string> policy_output;
  std::optional<std::uint64_t> seed;
};

/// Runs the training loop; writes the per-iteration JSONL log and the final policy.
inline int cmd_train(const TrainOptions& opt, Streams io) {
  int code = kOk;
  auto cfg = detail::load_config_file(opt.config, io.err, code);
  if (!cfg) return code;
  RunConfig run = cfg->config;
  if (opt.seed) run.seed = *opt.seed;

  const bool debug = verbosity() == Verbosity::Debug;
  const TrainResult result = train(run, [&](const IterationLog& l) {
    if (debug) io.err << "iter " << l.iteration << " reward " << l.mean_total_scaled_reward << " z1 " << l.z1_fraction << '\n';
  });
  const bool log_ok = detail::write_output(opt.output, io.out, [&](std::ostream& out) {
    for (const auto& entry : result.log) write_jsonl(out, to_json(entry));
  }, io.err);
  if (!log_ok) return kMissingFile;

  std::optional<std::string> policy_path = opt.policy_output;
  if (!policy_path && opt.output && *opt.output != "-") policy_path = *opt.output + ".policy.json";
  if (policy_path) {
    nlohmann::json doc = {{"policy", policy_to_json(result.policy, run.env)},
                          {"reference", policy_to_json(result.reference, run.env)},
                          {"seed", run.seed},
                          {"iterations", run.iterations}};
    if (!detail::write_output(policy_path, io.out, [&](std::ostream& out) { out << doc.dump(2) << '\n'; }, io.err))
      return kMissingFile;
  }

  if (verbosity() == Verbosity::Quiet) return kOk;
  if (result.log.empty()) {
    io.err << "no iterations run\n";
  } else {
    io.err << "initial mean reward " << result.log.front().mean_total_scaled_reward << ", final mean reward "
           << result.log.back().mean_total_scaled_reward << '\n';
  }
  return kOk;
}

struct GenCorpusOptions {
  std::optional<std::string> config;
  std::optional<std::string> output;
  std::optional<std::string> policy;
  std::optional<std::uint64_t> seed;
  std::size_t count = 800;
};

inline int cmd_gen_corpus(const GenCorpusOptions& opt, Streams io) {
  int code = kOk;
  auto cfg = detail::load_config_file(opt.config, io.err, code);
  if (!cfg) return code;
  RunConfig run = cfg->config;
  if (opt.seed) run.seed = *opt.seed;
  if (opt.count < 1) {
    io.err << "error: --count must be >= 1\n";
    return kBadConfig;
  }
  PolicySnapshot policy = initial_policy(run.prompt_bias);
  if (opt.policy) {
    auto text = detail::read_file(*opt.policy);
    if (!text) {
      io.err << "error: cannot read policy " << *opt.policy << '\n';
      return kMissingFile;
    }
    const auto doc = nlohmann::json::parse(*text, nullptr, false);
    try {
      if (doc.is_discarded()) throw std::invalid_argument("policy file is not JSON");
      policy = policy_from_json(doc.contains("policy") ? doc.at("policy") : doc);
    } catch (const std::exception& e) {
      io.err << "error: " << e.what() << '\n';
      return kBadConfig;
    }
  }
  if (!detail::write_output(opt.output, io.out, [&](std::ostream& out) { generate_corpus(run, policy, opt.count, out); },
                            io.err))
    return kMissingFile;
  return kOk;
}

/// Echoes the effective configuration and checks the reward normalizer.
inline int cmd_validate_config(const std::optional<std::string>& config_path, Streams io) {
  std::string text;
  if (config_path && !config_path->empty()) {
    auto contents = detail::read_file(*config_path);
    if (!contents) {
      io.err << "error: cannot read config " << *config_path << '\n';
      return kMissingFile;
    }
    text = std::move(*contents);
  }
  const LoadedConfig cfg = load_config(text);
  detail::print_issues(cfg, io.err);
  if (!cfg.ok()) return kBadConfig;

  const RunConfig& c = cfg.config;
  const double computed = computed_normalizer(c.reward, c.structure);
  nlohmann::json report = effective_config(c);
  report["n_norm_computed"] = computed;
  report["n_norm_effective"] = normalizer(c.reward, c.structure);
  if (reward_constants_are_reference(c)) {
    const bool match = computed == kReferenceNormalizer;
    report["n_norm_reference_check"] = match ? "pass" : "fail";
    if (!match) {
      io.err << "error: computed N_norm " << computed << " != " << kReferenceNormalizer << '\n';
      io.out << report.dump(2) << '\n';
      return kBadConfig;
    }
  } else {
    report["n_norm_reference_check"] = "skipped (reward constants overridden)";
  }
  io.out << report.dump(2) << '\n';
  return kOk;
}

}  // namespace toolrl::cli
