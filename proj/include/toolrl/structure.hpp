#pragma once

// Rollout topology classification and the hierarchical structure reward.
//
// Templates over the kind string (R=Reasoning, C=ToolCall, S=ToolResponse,
// P=Perception, A=Answer; noise is ignored):
//
//   Z1 optimal      R ((C S)+ P R)+ A     phi = 0
//   Z2 valid        R (P R)+ A            phi = 1
//   Z3 alternative  R A                   phi = 2
//   anything else   deviant               reward 0

#include <algorithm>
#include <cmath>
#include <optional>
#include <regex>
#include <stdexcept>
#include <string>
#include <string_view>

#include "toolrl/transcript.hpp"

namespace toolrl {

enum class RolloutTemplate { Z1_Optimal, Z2_Valid, Z3_Alternative, Deviant };

constexpr std::string_view template_label(RolloutTemplate t) {
  switch (t) {
    case RolloutTemplate::Z1_Optimal: return "Z1";
    case RolloutTemplate::Z2_Valid: return "Z2";
    case RolloutTemplate::Z3_Alternative: return "Z3";
    case RolloutTemplate::Deviant: return "Deviant";
  }
  return "";
}

struct StructureClass {
  RolloutTemplate templ = RolloutTemplate::Deviant;
  std::optional<int> phi;  // absent means infinitely far from any template
  int cycles = 0;          // completed tool cycles, Z1 only
};

struct StructParams {
  double alpha = 2.0;
  double gamma = 0.75;

  void validate() const {
    if (!(alpha > 0.0)) throw std::invalid_argument("alpha must be > 0");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("gamma must be in (0, 1]");
  }
};

inline StructureClass classify_kinds(std::string_view kinds) {
  static const std::regex z1("R((CS)+PR)+A");
  static const std::regex z2("R(PR)+A");
  const std::string s(kinds);
  if (std::regex_match(s, z1))
    return {RolloutTemplate::Z1_Optimal, 0, static_cast<int>(std::count(s.begin(), s.end(), 'P'))};
  if (std::regex_match(s, z2)) return {RolloutTemplate::Z2_Valid, 1, 0};
  if (s == "RA") return {RolloutTemplate::Z3_Alternative, 2, 0};
  return {};
}

inline StructureClass classify_structure(const Transcript& t) { return classify_kinds(kind_string(t)); }

/// alpha * gamma^phi for the three templates, 0 for deviants.
inline double struct_reward(const StructureClass& c, const StructParams& p) {
  if (!c.phi) return 0.0;
  return p.alpha * std::pow(p.gamma, *c.phi);
}

}  // namespace toolrl
