#pragma once

// Multi-objective trajectory reward.
//
//   total_raw    = l1*R_corr + l2*R_struct + l3*R_tool + l4*R_term
//   total_scaled = S * total_raw / N_norm
//
// N_norm defaults to the attainable maximum l1*C1 + l2*alpha + l3*(2 + eta) + l4*C2.

#include <algorithm>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "toolrl/structure.hpp"
#include "toolrl/transcript.hpp"

namespace toolrl {

struct RewardWeights {
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  double lambda3 = 2.0;
  double lambda4 = 3.0;
  double c1 = 8.0;    // correctness magnitude
  double c2 = 2.0;    // terminal magnitude
  double beta = 0.1;  // per-tool diversity reward
  int kappa = 2;      // per-tool saturation cap
  double eta = 0.8;   // global diversity cap
  double scale = 2.5;
  std::optional<double> n_norm;  // override of the computed normalizer
};

struct ToolReward {
  double syntax_indicator = 0.0;
  double success_indicator = 0.0;
  double r_div = 0.0;
  double value() const { return syntax_indicator + success_indicator + r_div; }
};

struct RewardBreakdown {
  double r_corr = 0.0;
  double r_struct = 0.0;
  ToolReward r_tool;
  double r_term = 0.0;
  double total_raw = 0.0;
  double total_scaled = 0.0;
  double n_norm = 0.0;
  StructureClass structure;
};

/// Closed-form maximum of total_raw for the given configuration.
inline double computed_normalizer(const RewardWeights& w, const StructParams& s) {
  return w.lambda1 * w.c1 + w.lambda2 * s.alpha + w.lambda3 * (2.0 + w.eta) + w.lambda4 * w.c2;
}

inline double normalizer(const RewardWeights& w, const StructParams& s) {
  const double n = w.n_norm.value_or(computed_normalizer(w, s));
  if (n == 0.0) throw std::invalid_argument("reward normalizer N_norm is zero");
  return n;
}

inline double corr_reward(const Transcript& t, const RewardWeights& w) {
  const auto letter = extract_answer(t);
  const auto truth = extract_option_letter(t.ground_truth);
  return (letter && truth && *letter == *truth) ? w.c1 : 0.0;
}

inline ToolReward tool_reward(const Transcript& t, const RewardWeights& w) {
  ToolReward r;
  std::map<std::string, int, std::less<>> counts;
  bool any_call = false;
  bool all_valid = true;
  bool any_success = false;
  for (const Segment& s : t.segments) {
    if (s.kind == SegmentKind::ToolCall) {
      any_call = true;
      if (s.call->syntactically_valid && s.call->registered)
        ++counts[s.call->tool_name];
      else
        all_valid = false;
    } else if (s.kind == SegmentKind::ToolResponse && s.response->success) {
      any_success = true;
    }
  }
  if (!any_call) return r;
  r.syntax_indicator = all_valid ? 1.0 : 0.0;
  r.success_indicator = any_success ? 1.0 : 0.0;
  // sum_k beta * min(n_k, kappa), with the integer part summed first so the
  // result does not depend on tool order
  long saturated = 0;
  for (const auto& [name, n] : counts) saturated += std::min(n, w.kappa);
  r.r_div = std::min(w.eta, w.beta * static_cast<double>(saturated));
  return r;
}

inline double term_reward(const Transcript& t, const RewardWeights& w) {
  return t.count(SegmentKind::Answer) > 0 ? w.c2 : 0.0;
}

/// Tool calls are assumed parsed against the active registry.
inline RewardBreakdown total_reward(const Transcript& t, const RewardWeights& w, const StructParams& sp) {
  RewardBreakdown b;
  b.n_norm = normalizer(w, sp);
  b.structure = classify_structure(t);
  b.r_corr = corr_reward(t, w);
  b.r_struct = struct_reward(b.structure, sp);
  b.r_tool = tool_reward(t, w);
  b.r_term = term_reward(t, w);
  b.total_raw = w.lambda1 * b.r_corr + w.lambda2 * b.r_struct + w.lambda3 * b.r_tool.value() +
                w.lambda4 * b.r_term;
  b.total_scaled = w.scale * b.total_raw / b.n_norm;
  return b;
}

inline nlohmann::json to_json(const RewardBreakdown& b) {
  return {
      {"r_corr", b.r_corr},
      {"r_struct", b.r_struct},
      {"r_tool",
       {{"value", b.r_tool.value()},
        {"syntax_indicator", b.r_tool.syntax_indicator},
        {"success_indicator", b.r_tool.success_indicator},
        {"r_div", b.r_tool.r_div}}},
      {"r_term", b.r_term},
      {"total_raw", b.total_raw},
      {"total_scaled", b.total_scaled},
      {"n_norm", b.n_norm},
      {"template", std::string(template_label(b.structure.templ))},
  };
}

}  // namespace toolrl
