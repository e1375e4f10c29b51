#pragma once

// Synthetic multiple-choice tool environment and a tabular macro-action policy.
//
// Each decision point is a (last phase, tool-already-called) pair. The policy
// picks one macro-action there; the rollout renders it into tagged text, and
// tool calls are answered by the environment with a tool response drawn from
// the query's pre-sampled tool outcomes.

#include <array>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "toolrl/corpus.hpp"
#include "toolrl/grpo.hpp"
#include "toolrl/random.hpp"
#include "toolrl/reward.hpp"
#include "toolrl/structure.hpp"
#include "toolrl/transcript.hpp"

namespace toolrl {

struct ToolSpec {
  std::string name;
  double reliability = 1.0;      // P(call succeeds)
  double informativeness = 0.0;  // P(successful response reveals the correct option)
};

inline std::vector<ToolSpec> default_tools() {
  return {
      {"captioning_tool", 0.85, 0.30},
      {"ocr_tool", 0.50, 0.10},
      {"detection_tool", 0.70, 0.20},
      {"perception_tool", 0.90, 0.80},
  };
}

struct EnvConfig {
  std::vector<ToolSpec> tools = default_tools();
  double prior_answerable = 0.25;

  ToolRegistry registry() const {
    ToolRegistry r;
    for (const auto& t : tools) r.insert(t.name);
    return r;
  }
};

inline constexpr std::size_t kNumOptions = 4;
inline constexpr std::size_t kNumTools = 4;

// Macro-action alphabet.
namespace action {
inline constexpr std::size_t kReason = 0;
inline constexpr std::size_t kFirstTool = 1;  // kFirstTool + k calls tool k
inline constexpr std::size_t kPerceive = kFirstTool + kNumTools;
inline constexpr std::size_t kFirstAnswer = kPerceive + 1;  // kFirstAnswer + o answers option o
inline constexpr std::size_t kAnswerFromEvidence = kFirstAnswer + kNumOptions;
inline constexpr std::size_t kStop = kAnswerFromEvidence + 1;
inline constexpr std::size_t kCount = kStop + 1;
}  // namespace action

enum class Phase : std::size_t { Start = 0, Reasoning = 1, ToolResponse = 2, Perception = 3 };

inline constexpr std::size_t kNumStates = 8;

constexpr std::size_t decision_state(Phase phase, bool tool_called) {
  return static_cast<std::size_t>(phase) * 2 + (tool_called ? 1 : 0);
}

inline std::string state_name(std::size_t s) {
  static constexpr std::array<std::string_view, 4> phases = {"start", "after_reasoning", "after_tool_response",
                                                             "after_perception"};
  return std::string(phases[s / 2]) + (s % 2 ? "+tool" : "");
}

inline std::string action_name(std::size_t a, const EnvConfig& env) {
  if (a == action::kReason) return "emit_reasoning";
  if (a >= action::kFirstTool && a < action::kPerceive) return "call:" + env.tools[a - action::kFirstTool].name;
  if (a == action::kPerceive) return "emit_perception";
  if (a >= action::kFirstAnswer && a < action::kAnswerFromEvidence)
    return std::string("answer:") + static_cast<char>('A' + (a - action::kFirstAnswer));
  if (a == action::kAnswerFromEvidence) return "answer_from_evidence";
  return "stop_without_answer";
}

/// Initial (and reference) policy: uniform logits plus `prompt_bias` on the
/// phase the rollout prompt asks for next. bias = 0 gives a uniform policy.
inline PolicySnapshot initial_policy(double prompt_bias = 0.0) {
  PolicySnapshot p(kNumStates, action::kCount);
  if (prompt_bias == 0.0) return p;
  p.logit(decision_state(Phase::Start, false), action::kReason) += prompt_bias;
  for (std::size_t k = 0; k < kNumTools; ++k)
    p.logit(decision_state(Phase::Reasoning, false), action::kFirstTool + k) += prompt_bias;
  p.logit(decision_state(Phase::ToolResponse, true), action::kPerceive) += prompt_bias;
  p.logit(decision_state(Phase::Perception, true), action::kReason) += prompt_bias;
  p.logit(decision_state(Phase::Perception, false), action::kReason) += prompt_bias;
  p.logit(decision_state(Phase::Reasoning, true), action::kAnswerFromEvidence) += prompt_bias;
  return p;
}

struct ToolOutcome {
  bool success = false;
  bool reveals = false;
};

struct QueryInstance {
  std::string sample_id;
  std::size_t correct = 0;  // option index
  std::size_t guess = 0;    // option picked when answering without evidence or prior knowledge
  bool prior_answerable = false;
  std::vector<ToolOutcome> tools;

  char correct_letter() const { return static_cast<char>('A' + correct); }
};

inline QueryInstance make_query(std::uint64_t seed, std::uint64_t stream, std::uint64_t index,
                                const EnvConfig& env) {
  Rng rng(seed, {stream, index});
  QueryInstance q;
  char id[32];
  std::snprintf(id, sizeof id, "q%06llu", static_cast<unsigned long long>(index));
  q.sample_id = id;
  q.correct = rng.below(kNumOptions);
  q.guess = rng.below(kNumOptions);
  q.prior_answerable = rng.bernoulli(env.prior_answerable);
  for (const auto& spec : env.tools) {
    ToolOutcome o;
    o.success = rng.bernoulli(spec.reliability);
    const bool informative = rng.bernoulli(spec.informativeness);
    o.reveals = o.success && informative;
    q.tools.push_back(o);
  }
  return q;
}

struct Rollout {
  std::string raw;
  std::vector<Step> steps;
  std::vector<std::size_t> actions;
  bool answered = false;
  bool truncated = false;
};

namespace detail {

inline std::string tagged(SegmentKind kind, std::string_view body) {
  return open_tag(kind) + std::string(body) + close_tag(kind);
}

inline std::string option_text(std::size_t option) {
  const char letter = static_cast<char>('A' + option);
  return std::string("\\boxed{(") + letter + ") option " + letter + "}";
}

}  // namespace detail

/// Samples macro-actions from `policy` until an answer, a stop, or max_turns.
inline Rollout rollout(const PolicySnapshot& policy, const QueryInstance& q, const EnvConfig& env, int max_turns,
                       Rng& rng) {
  if (max_turns < 1) throw std::invalid_argument("max_turns must be >= 1");
  Rollout out;
  std::vector<std::string> parts;
  Phase phase = Phase::Start;
  bool tool_called = false;
  std::optional<std::size_t> evidence;

  for (int turn = 0; turn < max_turns; ++turn) {
    const std::size_t s = decision_state(phase, tool_called);
    const auto probs = policy.probabilities(s);
    const std::size_t a = rng.categorical(probs);
    out.steps.push_back({s, a, std::log(probs[a]), 0.0});
    out.actions.push_back(a);

    if (a == action::kReason) {
      parts.push_back(detail::tagged(SegmentKind::Reasoning, tool_called
                                                                 ? "Weighing the observations against the options."
                                                                 : "Reading the question and deciding which tool could help."));
      phase = Phase::Reasoning;
    } else if (a < action::kPerceive) {
      const std::size_t k = a - action::kFirstTool;
      const auto& spec = env.tools[k];
      const auto& outcome = q.tools[k];
      nlohmann::json call = {{"name", spec.name}, {"arguments", {{"image_url", "sim/" + q.sample_id}}}};
      parts.push_back(detail::tagged(SegmentKind::ToolCall, call.dump()));
      nlohmann::json resp;
      if (!outcome.success) {
        resp = {{"success", false}, {"message", spec.name + " could not process this image."}};
      } else if (outcome.reveals) {
        resp = {{"success", true},
                {"message", std::string("The image supports option ") + q.correct_letter() + "."}};
        evidence = q.correct;
      } else {
        resp = {{"success", true}, {"message", "A diagram with several labeled parts."}};
      }
      parts.push_back(detail::tagged(SegmentKind::ToolResponse, resp.dump()));
      tool_called = true;
      phase = Phase::ToolResponse;
    } else if (a == action::kPerceive) {
      parts.push_back(detail::tagged(SegmentKind::Perception, evidence ? "The observation singles out one option."
                                                                       : "The observation is not conclusive."));
      phase = Phase::Perception;
    } else if (a < action::kStop) {
      std::size_t option = a - action::kFirstAnswer;
      if (a == action::kAnswerFromEvidence) option = evidence ? *evidence : (q.prior_answerable ? q.correct : q.guess);
      parts.push_back(detail::tagged(SegmentKind::Answer, detail::option_text(option)));
      out.answered = true;
      break;
    } else {
      break;  // stop without answer
    }
    if (turn + 1 == max_turns) out.truncated = true;
  }

  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out.raw.push_back('\n');
    out.raw += parts[i];
  }
  return out;
}

/// Kind string implied by a macro-action sequence (C is always followed by S).
inline std::string implied_kinds(std::span<const std::size_t> actions) {
  std::string k;
  for (std::size_t a : actions) {
    if (a == action::kReason) k += 'R';
    else if (a < action::kPerceive) k += "CS";
    else if (a == action::kPerceive) k += 'P';
    else if (a < action::kStop) k += 'A';
  }
  return k;
}

struct RunConfig {
  std::uint64_t seed = 42;
  int iterations = 100;
  int batch = 64;  // prompts per iteration
  int max_turns = 16;
  int update_steps = 1;  // gradient steps per iteration against the same behavior snapshot
  double prompt_bias = 2.0;
  RewardWeights reward;
  StructParams structure;
  GrpoConfig grpo;
  EnvConfig env;
};

struct IterationLog {
  int iteration = 0;
  double mean_total_scaled_reward = 0.0;
  double mean_struct_reward = 0.0;
  double clip_fraction = 0.0;
  double kl_value = 0.0;
  double z1_fraction = 0.0;
  double accuracy = 0.0;
};

inline nlohmann::json to_json(const IterationLog& l) {
  return {{"iteration", l.iteration},
          {"mean_total_scaled_reward", l.mean_total_scaled_reward},
          {"mean_struct_reward", l.mean_struct_reward},
          {"clip_fraction", l.clip_fraction},
          {"kl_value", l.kl_value},
          {"z1_fraction", l.z1_fraction},
          {"accuracy", l.accuracy}};
}

struct TrainResult {
  std::vector<IterationLog> log;
  PolicySnapshot policy;
  PolicySnapshot reference;
};

namespace stream {
inline constexpr std::uint64_t kTrainQuery = 1;
inline constexpr std::uint64_t kTrainRollout = 2;
inline constexpr std::uint64_t kCorpusQuery = 3;
inline constexpr std::uint64_t kCorpusRollout = 4;
}  // namespace stream

/// GRPO loop starting from the prompt-biased initial policy. Deterministic in cfg.
inline TrainResult train(const RunConfig& cfg, const std::function<void(const IterationLog&)>& on_iteration = {}) {
  cfg.structure.validate();
  const ToolRegistry registry = cfg.env.registry();
  TrainResult result;
  result.policy = initial_policy(cfg.prompt_bias);
  result.reference = result.policy.as(PolicyRole::Reference);

  for (int it = 0; it < cfg.iterations; ++it) {
    const PolicySnapshot behavior = result.policy.as(PolicyRole::Behavior);
    std::vector<TrajectoryGroup> groups;
    groups.reserve(static_cast<std::size_t>(cfg.batch));
    double sum_scaled = 0.0, sum_struct = 0.0;
    std::size_t n = 0, z1 = 0, correct = 0;

    for (int b = 0; b < cfg.batch; ++b) {
      const std::uint64_t qi = static_cast<std::uint64_t>(it) * static_cast<std::uint64_t>(cfg.batch) + b;
      const QueryInstance q = make_query(cfg.seed, stream::kTrainQuery, qi, cfg.env);
      TrajectoryGroup group;
      group.query_id = q.sample_id;
      for (int g = 0; g < cfg.grpo.group_size; ++g) {
        Rng rng(cfg.seed, {stream::kTrainRollout, static_cast<std::uint64_t>(it), static_cast<std::uint64_t>(b),
                           static_cast<std::uint64_t>(g)});
        Rollout r = rollout(behavior, q, cfg.env, cfg.max_turns, rng);
        Transcript t = parse_transcript(r.raw, registry);
        t.sample_id = q.sample_id;
        t.ground_truth = std::string(1, q.correct_letter());
        const RewardBreakdown rb = total_reward(t, cfg.reward, cfg.structure);
        for (auto& st : r.steps) st.logp_ref = result.reference.log_prob(st.state, st.action);
        group.trajectories.push_back({std::move(r.steps), rb.total_scaled, 0.0});
        sum_scaled += rb.total_scaled;
        sum_struct += rb.r_struct;
        z1 += rb.structure.templ == RolloutTemplate::Z1_Optimal ? 1 : 0;
        correct += rb.r_corr > 0.0 ? 1 : 0;
        ++n;
      }
      assign_advantages(group, cfg.grpo.delta);
      groups.push_back(std::move(group));
    }

    for (int u = 0; u < cfg.update_steps; ++u)
      result.policy = policy_gradient_step(result.policy, result.reference, groups, cfg.grpo);
    const ObjectiveReport after = surrogate_objective(result.policy, result.reference, groups, cfg.grpo);

    IterationLog entry;
    entry.iteration = it;
    if (n) {
      entry.mean_total_scaled_reward = sum_scaled / static_cast<double>(n);
      entry.mean_struct_reward = sum_struct / static_cast<double>(n);
      entry.z1_fraction = static_cast<double>(z1) / static_cast<double>(n);
      entry.accuracy = static_cast<double>(correct) / static_cast<double>(n);
    }
    entry.clip_fraction = after.clip_fraction;
    entry.kl_value = after.kl;
    result.log.push_back(entry);
    if (on_iteration) on_iteration(entry);
  }
  return result;
}

inline nlohmann::json policy_to_json(const PolicySnapshot& p, const EnvConfig& env) {
  nlohmann::json states = nlohmann::json::array(), actions = nlohmann::json::array(),
                 logits = nlohmann::json::array();
  for (std::size_t s = 0; s < p.states(); ++s) {
    states.push_back(state_name(s));
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t a = 0; a < p.actions(); ++a) row.push_back(p.logit(s, a));
    logits.push_back(row);
  }
  for (std::size_t a = 0; a < p.actions(); ++a) actions.push_back(action_name(a, env));
  return {{"role", std::string(role_label(p.role()))}, {"states", states}, {"actions", actions}, {"logits", logits}};
}

inline PolicySnapshot policy_from_json(const nlohmann::json& j) {
  const auto& rows = j.at("logits");
  if (!rows.is_array() || rows.size() != kNumStates) throw std::invalid_argument("policy file: expected 8 logit rows");
  PolicySnapshot p = initial_policy();
  for (std::size_t s = 0; s < kNumStates; ++s) {
    if (!rows[s].is_array() || rows[s].size() != action::kCount)
      throw std::invalid_argument("policy file: each logit row needs 12 entries");
    for (std::size_t a = 0; a < action::kCount; ++a) p.logit(s, a) = rows[s][a].get<double>();
  }
  return p;
}

inline constexpr std::array<std::string_view, 4> kCorpusSplits = {"split_a", "split_b", "split_c", "split_d"};

/// Writes n rollouts of `policy` as corpus JSONL. Deterministic in cfg.seed.
inline void generate_corpus(const RunConfig& cfg, const PolicySnapshot& policy, std::size_t n, std::ostream& out) {
  for (std::size_t i = 0; i < n; ++i) {
    const QueryInstance q = make_query(cfg.seed, stream::kCorpusQuery, i, cfg.env);
    Rng rng(cfg.seed, {stream::kCorpusRollout, i});
    const Rollout r = rollout(policy, q, cfg.env, cfg.max_turns, rng);
    CorpusRecord rec;
    rec.sample_id = q.sample_id;
    rec.dataset = std::string(kCorpusSplits[i % kCorpusSplits.size()]);
    rec.ground_truth = std::string(1, q.correct_letter());
    rec.raw = r.raw;
    write_jsonl(out, to_json(rec));
  }
}

}  // namespace toolrl
