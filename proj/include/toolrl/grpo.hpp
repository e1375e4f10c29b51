#pragma once

// Group-relative advantages and the clipped, KL-regularized surrogate
// objective for tabular softmax policies.
//
//   A_i = (R_i - mean) / (std + delta)                       population std
//   J   = 1/N sum_i 1/|tau_i| sum_t min(rho A_i, clip(rho, 1-eps_low, 1+eps_high) A_i)
//         - psi * KL(pi || pi_ref)
//
// rho = pi(a|s) / pi_old(a|s). The KL term is the exact categorical divergence
// averaged uniformly over the distinct states visited by the batch.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace toolrl {

struct GrpoConfig {
  int group_size = 8;
  double eps_low = 0.2;
  double eps_high = 0.4;
  double psi = 0.001;
  double delta = 1e-8;
  double learning_rate = 2.0;
};

enum class PolicyRole { Current, Behavior, Reference };

constexpr std::string_view role_label(PolicyRole r) {
  switch (r) {
    case PolicyRole::Current: return "current";
    case PolicyRole::Behavior: return "behavior";
    case PolicyRole::Reference: return "reference";
  }
  return "";
}

/// Row-major logits, one categorical distribution per state.
class PolicySnapshot {
 public:
  PolicySnapshot() = default;
  PolicySnapshot(std::size_t states, std::size_t actions, PolicyRole role = PolicyRole::Current)
      : states_(states), actions_(actions), logits_(states * actions, 0.0), role_(role) {}

  std::size_t states() const { return states_; }
  std::size_t actions() const { return actions_; }
  PolicyRole role() const { return role_; }
  void set_role(PolicyRole r) { role_ = r; }

  std::span<double> logits() { return logits_; }
  std::span<const double> logits() const { return logits_; }
  double& logit(std::size_t s, std::size_t a) { return logits_[s * actions_ + a]; }
  double logit(std::size_t s, std::size_t a) const { return logits_[s * actions_ + a]; }

  std::vector<double> probabilities(std::size_t s) const {
    auto row = std::span<const double>(logits_).subspan(s * actions_, actions_);
    const double m = *std::max_element(row.begin(), row.end());
    std::vector<double> p(actions_);
    double z = 0.0;
    for (std::size_t a = 0; a < actions_; ++a) z += (p[a] = std::exp(row[a] - m));
    for (double& v : p) v /= z;
    return p;
  }

  double log_prob(std::size_t s, std::size_t a) const {
    auto row = std::span<const double>(logits_).subspan(s * actions_, actions_);
    const double m = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double v : row) z += std::exp(v - m);
    return row[a] - m - std::log(z);
  }

  PolicySnapshot as(PolicyRole r) const {
    PolicySnapshot copy = *this;
    copy.role_ = r;
    return copy;
  }

 private:
  std::size_t states_ = 0;
  std::size_t actions_ = 0;
  std::vector<double> logits_;
  PolicyRole role_ = PolicyRole::Current;
};

struct Step {
  std::size_t state = 0;
  std::size_t action = 0;
  double logp_old = 0.0;  // log-probability under the behavior policy
  double logp_ref = 0.0;  // log-probability under the reference policy
};

struct Trajectory {
  std::vector<Step> steps;
  double reward = 0.0;
  double advantage = 0.0;
};

/// G sibling trajectories sampled for one query.
struct TrajectoryGroup {
  std::string query_id;
  std::vector<Trajectory> trajectories;
};

inline std::vector<double> group_advantages(std::span<const double> rewards, double delta) {
  if (rewards.size() < 2) throw std::invalid_argument("group_advantages needs at least two rewards");
  const double n = static_cast<double>(rewards.size());
  const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double sigma = std::sqrt(var / n);
  std::vector<double> adv;
  adv.reserve(rewards.size());
  for (double r : rewards) adv.push_back((r - mean) / (sigma + delta));
  return adv;
}

inline void assign_advantages(TrajectoryGroup& g, double delta) {
  std::vector<double> rewards;
  for (const auto& t : g.trajectories) rewards.push_back(t.reward);
  const auto adv = group_advantages(rewards, delta);
  for (std::size_t i = 0; i < adv.size(); ++i) g.trajectories[i].advantage = adv[i];
}

/// Pessimistic clipped term min(rho A, clip(rho) A).
inline double clipped_term(double ratio, double advantage, double eps_low, double eps_high) {
  const double clipped = std::clamp(ratio, 1.0 - eps_low, 1.0 + eps_high);
  return std::min(ratio * advantage, clipped * advantage);
}

/// True when the clipped branch is selected and carries no gradient.
inline bool clip_active(double ratio, double advantage, double eps_low, double eps_high) {
  return (advantage > 0.0 && ratio > 1.0 + eps_high) || (advantage < 0.0 && ratio < 1.0 - eps_low);
}

/// Per-step log-probabilities of one trajectory under the current and behavior policies.
struct LogProbTrace {
  std::vector<double> logp_current;
  std::vector<double> logp_old;
  double advantage = 0.0;
};

struct SurrogateValue {
  double value = 0.0;
  double clip_fraction = 0.0;
};

/// Clipped part of the objective from precomputed log-probabilities.
inline SurrogateValue surrogate_from_logprobs(std::span<const LogProbTrace> traces, const GrpoConfig& cfg) {
  SurrogateValue out;
  std::size_t steps = 0, clipped = 0;
  for (const auto& tr : traces) {
    if (tr.logp_current.size() != tr.logp_old.size())
      throw std::invalid_argument("log-probability arrays differ in length");
    if (tr.logp_current.empty()) continue;
    double sum = 0.0;
    for (std::size_t t = 0; t < tr.logp_current.size(); ++t) {
      const double rho = std::exp(tr.logp_current[t] - tr.logp_old[t]);
      sum += clipped_term(rho, tr.advantage, cfg.eps_low, cfg.eps_high);
      clipped += clip_active(rho, tr.advantage, cfg.eps_low, cfg.eps_high) ? 1 : 0;
      ++steps;
    }
    out.value += sum / static_cast<double>(tr.logp_current.size());
  }
  if (!traces.empty()) out.value /= static_cast<double>(traces.size());
  if (steps) out.clip_fraction = static_cast<double>(clipped) / static_cast<double>(steps);
  return out;
}

inline double categorical_kl(std::span<const double> p, std::span<const double> q) {
  double kl = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j)
    if (p[j] > 0.0) kl += p[j] * (std::log(p[j]) - std::log(q[j]));
  return kl;
}

inline std::vector<std::size_t> visited_states(std::span<const TrajectoryGroup> groups) {
  std::set<std::size_t> seen;
  for (const auto& g : groups)
    for (const auto& tr : g.trajectories)
      for (const auto& st : tr.steps) seen.insert(st.state);
  return {seen.begin(), seen.end()};
}

/// Exact KL(current || reference) averaged over visited states.
inline double policy_kl(const PolicySnapshot& current, const PolicySnapshot& reference,
                        std::span<const std::size_t> states) {
  if (states.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t s : states) total += categorical_kl(current.probabilities(s), reference.probabilities(s));
  return total / static_cast<double>(states.size());
}

struct ObjectiveReport {
  double value = 0.0;      // surrogate - psi * kl
  double surrogate = 0.0;
  double kl = 0.0;
  double clip_fraction = 0.0;
};

inline std::vector<LogProbTrace> traces_for(const PolicySnapshot& current, std::span<const TrajectoryGroup> groups) {
  std::vector<LogProbTrace> traces;
  for (const auto& g : groups) {
    for (const auto& tr : g.trajectories) {
      LogProbTrace lp;
      lp.advantage = tr.advantage;
      for (const auto& st : tr.steps) {
        lp.logp_current.push_back(current.log_prob(st.state, st.action));
        lp.logp_old.push_back(st.logp_old);
      }
      traces.push_back(std::move(lp));
    }
  }
  return traces;
}

inline ObjectiveReport surrogate_objective(const PolicySnapshot& current, const PolicySnapshot& reference,
                                           std::span<const TrajectoryGroup> groups, const GrpoConfig& cfg) {
  const auto traces = traces_for(current, groups);
  const auto clipped = surrogate_from_logprobs(traces, cfg);
  const auto states = visited_states(groups);
  ObjectiveReport r;
  r.surrogate = clipped.value;
  r.clip_fraction = clipped.clip_fraction;
  r.kl = policy_kl(current, reference, states);
  r.value = r.surrogate - cfg.psi * r.kl;
  return r;
}

/// Analytic gradient of surrogate_objective with respect to the current logits.
inline std::vector<double> surrogate_gradient(const PolicySnapshot& current, const PolicySnapshot& reference,
                                              std::span<const TrajectoryGroup> groups, const GrpoConfig& cfg) {
  const std::size_t na = current.actions();
  std::vector<double> grad(current.logits().size(), 0.0);

  std::size_t n_traj = 0;
  for (const auto& g : groups) n_traj += g.trajectories.size();
  if (n_traj == 0) return grad;

  for (const auto& g : groups) {
    for (const auto& tr : g.trajectories) {
      if (tr.steps.empty() || tr.advantage == 0.0) continue;
      const double w = 1.0 / (static_cast<double>(n_traj) * static_cast<double>(tr.steps.size()));
      for (const auto& st : tr.steps) {
        const double logp = current.log_prob(st.state, st.action);
        const double rho = std::exp(logp - st.logp_old);
        if (clip_active(rho, tr.advantage, cfg.eps_low, cfg.eps_high)) continue;
        // d rho / d z_j = rho * (1[j == a] - p_j)
        const auto p = current.probabilities(st.state);
        const double coeff = w * rho * tr.advantage;
        for (std::size_t j = 0; j < na; ++j)
          grad[st.state * na + j] += coeff * ((j == st.action ? 1.0 : 0.0) - p[j]);
      }
    }
  }

  if (cfg.psi != 0.0) {
    const auto states = visited_states(groups);
    const double w = cfg.psi / static_cast<double>(states.size());
    for (std::size_t s : states) {
      const auto p = current.probabilities(s);
      const auto q = reference.probabilities(s);
      const double kl = categorical_kl(p, q);
      // d KL / d z_k = p_k (log p_k - log q_k - KL)
      for (std::size_t k = 0; k < na; ++k) {
        if (p[k] == 0.0) continue;
        grad[s * na + k] -= w * p[k] * (std::log(p[k]) - std::log(q[k]) - kl);
      }
    }
  }
  return grad;
}

/// One plain gradient-ascent step on the surrogate objective.
inline PolicySnapshot policy_gradient_step(const PolicySnapshot& current, const PolicySnapshot& reference,
                                           std::span<const TrajectoryGroup> groups, const GrpoConfig& cfg) {
  PolicySnapshot next = current;
  const auto grad = surrogate_gradient(current, reference, groups, cfg);
  auto z = next.logits();
  for (std::size_t i = 0; i < z.size(); ++i) z[i] += cfg.learning_rate * grad[i];
  return next;
}

}  // namespace toolrl
