#pragma once

// Flat key-value configuration shared by the reward scorer and the trainer.
//
// Accepted syntax: one `key = value` (or `key: value`) per line, `#` comments,
// or a flat JSON object. Absent keys keep their defaults.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "toolrl/simenv.hpp"

namespace toolrl {

/// Normalizer attained by the reference reward constants.
inline constexpr double kReferenceNormalizer = 21.6;

struct ConfigIssue {
  enum class Severity { Warning, Error };
  Severity severity = Severity::Error;
  std::string field;
  std::string message;
};

struct LoadedConfig {
  RunConfig config;
  std::set<std::string> explicit_keys;
  std::vector<ConfigIssue> issues;

  bool ok() const {
    for (const auto& i : issues)
      if (i.severity == ConfigIssue::Severity::Error) return false;
    return true;
  }
};

inline const std::vector<std::string>& reward_config_keys() {
  static const std::vector<std::string> keys = {"lambda1", "lambda2", "lambda3", "lambda4", "c1",    "c2",   "alpha",
                                                "gamma",   "beta",    "kappa",   "eta",     "s",     "n_norm"};
  return keys;
}

inline const std::vector<std::string>& run_config_keys() {
  static const std::vector<std::string> keys = {"seed",     "iterations", "batch", "g",     "max_turns",
                                                "learning_rate", "eps_low", "eps_high", "psi", "delta",
                                                "update_steps",  "prompt_bias"};
  return keys;
}

namespace detail {

inline std::optional<double> parse_number(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

inline std::map<std::string, std::string> parse_flat_document(std::string_view text, std::vector<ConfigIssue>& issues) {
  std::map<std::string, std::string> kv;
  const std::string_view body = trim(text);
  if (!body.empty() && body.front() == '{') {
    const auto doc = nlohmann::json::parse(body, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) {
      issues.push_back({ConfigIssue::Severity::Error, "", "config is not a valid JSON object"});
      return kv;
    }
    for (const auto& [k, v] : doc.items()) {
      if (v.is_number())
        kv[k] = v.dump();
      else if (v.is_string())
        kv[k] = v.get<std::string>();
      else
        issues.push_back({ConfigIssue::Severity::Error, k, "value must be a number"});
    }
    return kv;
  }
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t sep = line.find_first_of("=:");
    if (sep == std::string_view::npos) {
      issues.push_back({ConfigIssue::Severity::Error, "", "line " + std::to_string(line_no) + ": expected key = value"});
      continue;
    }
    kv[std::string(trim(line.substr(0, sep)))] = std::string(trim(line.substr(sep + 1)));
  }
  return kv;
}

}  // namespace detail

inline std::vector<ConfigIssue> validate_config(const RunConfig& c) {
  using S = ConfigIssue::Severity;
  std::vector<ConfigIssue> out;
  auto err = [&](std::string f, std::string m) { out.push_back({S::Error, std::move(f), std::move(m)}); };
  const auto& w = c.reward;
  for (auto [name, v] : {std::pair{"lambda1", w.lambda1}, std::pair{"lambda2", w.lambda2},
                         std::pair{"lambda3", w.lambda3}, std::pair{"lambda4", w.lambda4}, std::pair{"c1", w.c1},
                         std::pair{"c2", w.c2}, std::pair{"beta", w.beta}, std::pair{"eta", w.eta},
                         std::pair{"s", w.scale}})
    if (v < 0.0) err(name, "must be non-negative");
  if (w.kappa < 1) err("kappa", "must be an integer >= 1");
  if (!(c.structure.alpha > 0.0)) err("alpha", "must be > 0");
  if (!(c.structure.gamma > 0.0 && c.structure.gamma <= 1.0)) err("gamma", "must be in (0, 1]");
  if (w.n_norm && !(*w.n_norm > 0.0)) err("n_norm", "must be > 0");
  if (!w.n_norm && computed_normalizer(w, c.structure) == 0.0) err("n_norm", "computed normalizer is zero");

  const auto& g = c.grpo;
  if (g.group_size < 2) err("g", "group size must be >= 2");
  if (!(g.eps_low > 0.0 && g.eps_low <= 1.0)) err("eps_low", "must be in (0, 1]");
  if (!(g.eps_high > 0.0 && g.eps_high <= 1.0)) err("eps_high", "must be in (0, 1]");
  if (g.psi < 0.0) err("psi", "must be non-negative");
  if (!(g.delta > 0.0)) err("delta", "must be > 0");
  if (g.learning_rate < 0.0) err("learning_rate", "must be non-negative");
  if (c.iterations < 0) err("iterations", "must be non-negative");
  if (c.batch < 1) err("batch", "must be >= 1");
  if (c.max_turns < 1) err("max_turns", "must be >= 1");
  if (c.update_steps < 1) err("update_steps", "must be >= 1");

  const double reachable = w.beta * w.kappa * static_cast<double>(c.env.tools.size());
  if (w.eta > reachable)
    out.push_back({S::Warning, "eta",
                   "eta = " + std::to_string(w.eta) + " exceeds beta*kappa*|T| = " + std::to_string(reachable) +
                       "; the diversity cap is unreachable and N_norm overstates the maximum"});
  if (w.n_norm && *w.n_norm != computed_normalizer(w, c.structure))
    out.push_back({S::Warning, "n_norm",
                   "override " + std::to_string(*w.n_norm) + " differs from computed maximum " +
                       std::to_string(computed_normalizer(w, c.structure))});
  return out;
}

inline LoadedConfig load_config(std::string_view text) {
  LoadedConfig out;
  const auto kv = detail::parse_flat_document(text, out.issues);
  RunConfig& c = out.config;

  std::map<std::string, double*> reals = {
      {"lambda1", &c.reward.lambda1},   {"lambda2", &c.reward.lambda2}, {"lambda3", &c.reward.lambda3},
      {"lambda4", &c.reward.lambda4},   {"c1", &c.reward.c1},           {"c2", &c.reward.c2},
      {"alpha", &c.structure.alpha},    {"gamma", &c.structure.gamma},  {"beta", &c.reward.beta},
      {"eta", &c.reward.eta},           {"s", &c.reward.scale},         {"learning_rate", &c.grpo.learning_rate},
      {"eps_low", &c.grpo.eps_low},     {"eps_high", &c.grpo.eps_high}, {"psi", &c.grpo.psi},
      {"delta", &c.grpo.delta},         {"prompt_bias", &c.prompt_bias}};
  std::map<std::string, int*> ints = {{"kappa", &c.reward.kappa},   {"iterations", &c.iterations},
                                      {"batch", &c.batch},          {"g", &c.grpo.group_size},
                                      {"max_turns", &c.max_turns},  {"update_steps", &c.update_steps}};

  for (const auto& [key, text_value] : kv) {
    const auto v = detail::parse_number(text_value);
    if (!v) {
      out.issues.push_back({ConfigIssue::Severity::Error, key, "'" + text_value + "' is not a number"});
      continue;
    }
    out.explicit_keys.insert(key);
    if (auto it = reals.find(key); it != reals.end()) {
      *it->second = *v;
    } else if (auto jt = ints.find(key); jt != ints.end()) {
      if (*v != std::floor(*v) || std::fabs(*v) > 2e9)
        out.issues.push_back({ConfigIssue::Severity::Error, key, "must be an integer"});
      else
        *jt->second = static_cast<int>(*v);
    } else if (key == "n_norm") {
      c.reward.n_norm = *v;
    } else if (key == "seed") {
      const std::string_view digits = detail::trim(text_value);
      std::uint64_t seed = 0;
      const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), seed);
      if (ec != std::errc() || ptr != digits.data() + digits.size())
        out.issues.push_back({ConfigIssue::Severity::Error, key, "must be a non-negative integer"});
      else
        c.seed = seed;
    } else {
      out.explicit_keys.erase(key);
      out.issues.push_back({ConfigIssue::Severity::Error, key, "unknown key"});
    }
  }
  for (auto& issue : validate_config(c)) out.issues.push_back(std::move(issue));
  return out;
}

inline nlohmann::json effective_config(const RunConfig& c) {
  nlohmann::json j = {
      {"lambda1", c.reward.lambda1},   {"lambda2", c.reward.lambda2}, {"lambda3", c.reward.lambda3},
      {"lambda4", c.reward.lambda4},   {"c1", c.reward.c1},           {"c2", c.reward.c2},
      {"alpha", c.structure.alpha},    {"gamma", c.structure.gamma},  {"beta", c.reward.beta},
      {"kappa", c.reward.kappa},       {"eta", c.reward.eta},         {"s", c.reward.scale},
      {"n_norm", c.reward.n_norm ? nlohmann::json(*c.reward.n_norm) : nlohmann::json(nullptr)},
      {"seed", c.seed},                {"iterations", c.iterations},  {"batch", c.batch},
      {"g", c.grpo.group_size},        {"max_turns", c.max_turns},    {"learning_rate", c.grpo.learning_rate},
      {"eps_low", c.grpo.eps_low},     {"eps_high", c.grpo.eps_high}, {"psi", c.grpo.psi},
      {"delta", c.grpo.delta},         {"update_steps", c.update_steps}, {"prompt_bias", c.prompt_bias}};
  return j;
}

/// True when every reward constant is at its reference default.
inline bool reward_constants_are_reference(const RunConfig& c) {
  const RunConfig d;
  const auto& w = c.reward;
  const auto& dw = d.reward;
  return w.lambda1 == dw.lambda1 && w.lambda2 == dw.lambda2 && w.lambda3 == dw.lambda3 && w.lambda4 == dw.lambda4 &&
         w.c1 == dw.c1 && w.c2 == dw.c2 && w.beta == dw.beta && w.kappa == dw.kappa && w.eta == dw.eta &&
         c.structure.alpha == d.structure.alpha;
}

}  // namespace toolrl
