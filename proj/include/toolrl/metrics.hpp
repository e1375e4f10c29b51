#pragma once

// Tool-use quality metrics and differential state-transition analysis.
//
//   TER  pooled fraction of attempted tool calls that executed successfully
//   TTAC mean over registry tools of Pearson r(binary usage, binary task success)
//   TSS  KL(P || Uniform) of the empirical tool-usage distribution, natural log
//   TIU  TER * (1 + TTAC) / 2 * tanh(TSS)

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "toolrl/transcript.hpp"

namespace toolrl {

struct CallOutcome {
  std::string tool;  // empty when the payload did not parse
  bool success = false;
};

struct UsageRecord {
  std::string sample_id;
  std::map<std::string, int, std::less<>> tool_counts;  // valid, registered calls only
  std::vector<CallOutcome> calls;                       // every attempted call
  bool task_success = false;
};

/// A call succeeds when it is valid, registered, and the first tool response
/// after it (before the next call) reports success.
inline UsageRecord usage_record(const Transcript& t, bool task_success) {
  UsageRecord rec;
  rec.sample_id = t.sample_id;
  rec.task_success = task_success;
  std::optional<std::size_t> awaiting;  // index into rec.calls
  bool awaiting_valid = false;
  for (const Segment& s : t.segments) {
    if (s.kind == SegmentKind::ToolCall) {
      const bool valid = s.call->syntactically_valid && s.call->registered;
      if (valid) ++rec.tool_counts[s.call->tool_name];
      rec.calls.push_back({s.call->tool_name, false});
      awaiting = rec.calls.size() - 1;
      awaiting_valid = valid;
    } else if (s.kind == SegmentKind::ToolResponse && awaiting) {
      rec.calls[*awaiting].success = awaiting_valid && s.response->success;
      awaiting.reset();
    }
  }
  return rec;
}

inline std::optional<double> ter(std::span<const UsageRecord> records) {
  std::size_t total = 0, ok = 0;
  for (const auto& r : records) {
    total += r.calls.size();
    for (const auto& c : r.calls) ok += c.success ? 1 : 0;
  }
  if (total == 0) return std::nullopt;
  return static_cast<double>(ok) / static_cast<double>(total);
}

/// Pearson correlation of two binary vectors; 0 when either has no variance.
inline double binary_correlation(std::span<const int> x, std::span<const int> y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxy += x[i] * y[i];
  }
  const double mx = sx / n, my = sy / n;
  const double cov = sxy / n - mx * my;
  const double vx = mx - mx * mx, vy = my - my * my;  // binary: E[x^2] = E[x]
  if (vx <= 0.0 || vy <= 0.0) return 0.0;
  return cov / std::sqrt(vx * vy);
}

inline std::optional<double> ttac(std::span<const UsageRecord> records, const ToolRegistry& registry) {
  if (records.size() < 2 || registry.empty()) return std::nullopt;
  std::vector<int> success;
  for (const auto& r : records) success.push_back(r.task_success ? 1 : 0);
  double sum = 0.0;
  for (const auto& tool : registry) {
    std::vector<int> used;
    for (const auto& r : records) {
      auto it = r.tool_counts.find(tool);
      used.push_back(it != r.tool_counts.end() && it->second > 0 ? 1 : 0);
    }
    sum += binary_correlation(used, success);
  }
  return sum / static_cast<double>(registry.size());
}

/// KL divergence of a count vector's empirical distribution from uniform.
inline std::optional<double> kl_from_uniform(std::span<const double> counts) {
  double total = 0.0;
  for (double c : counts) total += c;
  if (total <= 0.0 || counts.empty()) return std::nullopt;
  const double k = static_cast<double>(counts.size());
  double kl = 0.0;
  for (double c : counts) {
    if (c <= 0.0) continue;
    const double p = c / total;
    kl += p * std::log(p * k);
  }
  return kl;
}

inline std::optional<double> tss(std::span<const UsageRecord> records, const ToolRegistry& registry) {
  std::vector<double> counts;
  for (const auto& tool : registry) {
    double n = 0;
    for (const auto& r : records)
      if (auto it = r.tool_counts.find(tool); it != r.tool_counts.end()) n += it->second;
    counts.push_back(n);
  }
  return kl_from_uniform(counts);
}

inline double tiu(double ter_value, double ttac_value, double tss_value) {
  return ter_value * ((1.0 + ttac_value) / 2.0) * std::tanh(tss_value);
}

struct TiuRow {
  std::string group;
  std::optional<double> ter;
  std::optional<double> ttac;
  std::optional<double> tss;
  std::optional<double> tiu;
};

struct TiuReport {
  std::vector<TiuRow> rows;
  TiuRow mean;
};

inline TiuRow tiu_row(std::string group, std::optional<double> ter_v, std::optional<double> ttac_v,
                      std::optional<double> tss_v) {
  TiuRow row{std::move(group), ter_v, ttac_v, tss_v, std::nullopt};
  if (ter_v && ttac_v && tss_v) row.tiu = tiu(*ter_v, *ttac_v, *tss_v);
  return row;
}

inline TiuRow metrics_row(std::string group, std::span<const UsageRecord> records, const ToolRegistry& registry) {
  return tiu_row(std::move(group), ter(records), ttac(records, registry), tss(records, registry));
}

/// Mean row: each column averages the per-group values that are defined.
inline TiuReport make_report(std::vector<TiuRow> rows) {
  TiuReport rep;
  rep.rows = std::move(rows);
  rep.mean.group = "Mean";
  auto average = [&](auto member) -> std::optional<double> {
    double sum = 0.0;
    int n = 0;
    for (const auto& r : rep.rows)
      if (r.*member) {
        sum += *(r.*member);
        ++n;
      }
    if (n == 0) return std::nullopt;
    return sum / n;
  };
  rep.mean.ter = average(&TiuRow::ter);
  rep.mean.ttac = average(&TiuRow::ttac);
  rep.mean.tss = average(&TiuRow::tss);
  rep.mean.tiu = average(&TiuRow::tiu);
  return rep;
}

namespace detail {
inline std::string fmt_cell(const std::optional<double>& v, double scale, int decimals) {
  if (!v) return "—";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, *v * scale);
  return buf;
}
}  // namespace detail

/// Aligned text table: Group, TER (%), TTAC, TSS, TIU (%).
inline void render_report_text(std::ostream& out, const TiuReport& rep) {
  std::vector<std::vector<std::string>> cells;
  cells.push_back({"Group", "TER (%)", "TTAC", "TSS", "TIU (%)"});
  auto add = [&](const TiuRow& r) {
    cells.push_back({r.group, detail::fmt_cell(r.ter, 100.0, 2), detail::fmt_cell(r.ttac, 1.0, 3),
                     detail::fmt_cell(r.tss, 1.0, 2), detail::fmt_cell(r.tiu, 100.0, 2)});
  };
  for (const auto& r : rep.rows) add(r);
  add(rep.mean);
  // Display width counts UTF-8 code points (the em dash placeholder is 3 bytes).
  auto width = [](const std::string& s) {
    return static_cast<std::size_t>(std::count_if(s.begin(), s.end(), [](char c) { return (c & 0xC0) != 0x80; }));
  };
  std::vector<std::size_t> w(5, 0);
  for (const auto& row : cells)
    for (std::size_t i = 0; i < row.size(); ++i) w[i] = std::max(w[i], width(row[i]));
  for (const auto& row : cells) {
    std::string line;
    for (std::size_t i = 0; i < row.size(); ++i) {
      const std::string pad(w[i] - width(row[i]), ' ');
      line += (i == 0) ? row[i] + pad : "  " + pad + row[i];
    }
    out << line << '\n';
  }
}

inline nlohmann::json to_json(const TiuRow& r) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  return {{"group", r.group}, {"ter", opt(r.ter)}, {"ttac", opt(r.ttac)}, {"tss", opt(r.tss)}, {"tiu", opt(r.tiu)}};
}

inline nlohmann::json to_json(const TiuReport& rep) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : rep.rows) rows.push_back(to_json(r));
  return {{"rows", rows}, {"mean", to_json(rep.mean)}};
}

// ---------------------------------------------------------------------------
// State transitions

enum class TraceState {
  Reasoning,
  Tool_Call,
  Tool_Response_Success,
  Tool_Response_Failure,
  Perception,
  Terminal,
  Correct,
  Incorrect
};

enum class Outcome { Correct, Incorrect };

constexpr std::string_view state_label(TraceState s) {
  switch (s) {
    case TraceState::Reasoning: return "Reasoning";
    case TraceState::Tool_Call: return "Tool_Call";
    case TraceState::Tool_Response_Success: return "Tool_Response_Success";
    case TraceState::Tool_Response_Failure: return "Tool_Response_Failure";
    case TraceState::Perception: return "Perception";
    case TraceState::Terminal: return "Terminal";
    case TraceState::Correct: return "Correct";
    case TraceState::Incorrect: return "Incorrect";
  }
  return "";
}

constexpr std::string_view outcome_label(Outcome o) { return o == Outcome::Correct ? "Correct" : "Incorrect"; }

struct TransitionKey {
  TraceState source;
  TraceState target;
  Outcome outcome;
  auto operator<=>(const TransitionKey&) const = default;
};

using TransitionTable = std::map<TransitionKey, long>;

/// Mapped state sequence of a transcript; noise is skipped.
inline std::vector<TraceState> trace_states(const Transcript& t) {
  std::vector<TraceState> out;
  for (const Segment& s : t.segments) {
    switch (s.kind) {
      case SegmentKind::Reasoning: out.push_back(TraceState::Reasoning); break;
      case SegmentKind::ToolCall: out.push_back(TraceState::Tool_Call); break;
      case SegmentKind::ToolResponse:
        out.push_back(s.response->success ? TraceState::Tool_Response_Success : TraceState::Tool_Response_Failure);
        break;
      case SegmentKind::Perception: out.push_back(TraceState::Perception); break;
      case SegmentKind::Answer: out.push_back(TraceState::Terminal); break;
      case SegmentKind::Noise: break;
    }
  }
  return out;
}

/// Adds one transcript's adjacent-pair transitions plus the final edge from its
/// last state to the outcome state.
inline void add_transitions(TransitionTable& table, const Transcript& t, Outcome outcome) {
  const auto states = trace_states(t);
  if (states.empty()) return;
  for (std::size_t i = 0; i + 1 < states.size(); ++i) ++table[{states[i], states[i + 1], outcome}];
  const TraceState end = outcome == Outcome::Correct ? TraceState::Correct : TraceState::Incorrect;
  ++table[{states.back(), end, outcome}];
}

struct ScoredTranscript {
  const Transcript* transcript;
  bool correct;
};

inline TransitionTable transition_table(std::span<const ScoredTranscript> corpus) {
  TransitionTable table;
  for (const auto& item : corpus)
    add_transitions(table, *item.transcript, item.correct ? Outcome::Correct : Outcome::Incorrect);
  return table;
}

struct TransitionDelta {
  TransitionKey key;
  long count_a = 0;
  long count_b = 0;
  long delta() const { return count_b - count_a; }
};

/// Keys with |b - a| >= cutoff (and nonzero), Correct block first, each block
/// sorted by |delta| descending.
inline std::vector<TransitionDelta> transition_diff(const TransitionTable& a, const TransitionTable& b, long cutoff) {
  std::map<TransitionKey, TransitionDelta> merged;
  for (const auto& [k, v] : a) merged[k] = {k, v, 0};
  for (const auto& [k, v] : b) {
    auto& d = merged.try_emplace(k, TransitionDelta{k, 0, 0}).first->second;
    d.count_b = v;
  }
  std::vector<TransitionDelta> out;
  for (const auto& [k, d] : merged) {
    const long mag = std::labs(d.delta());
    if (mag != 0 && mag >= cutoff) out.push_back(d);
  }
  std::stable_sort(out.begin(), out.end(), [](const TransitionDelta& x, const TransitionDelta& y) {
    if (x.key.outcome != y.key.outcome) return x.key.outcome < y.key.outcome;
    return std::labs(x.delta()) > std::labs(y.delta());
  });
  return out;
}

inline void write_diff_csv(std::ostream& out, std::span<const TransitionDelta> diff) {
  out << "source,target,outcome,count_a,count_b,delta\n";
  for (const auto& d : diff) {
    out << state_label(d.key.source) << ',' << state_label(d.key.target) << ',' << outcome_label(d.key.outcome)
        << ',' << d.count_a << ',' << d.count_b << ',' << d.delta() << '\n';
  }
}

}  // namespace toolrl
