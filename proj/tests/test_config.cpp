#include <catch2/catch_amalgamated.hpp>

#include "toolrl/config.hpp"

using namespace toolrl;

namespace {

bool has_issue(const LoadedConfig& c, const std::string& field, ConfigIssue::Severity sev) {
  for (const auto& i : c.issues)
    if (i.field == field && i.severity == sev) return true;
  return false;
}

}  // namespace

TEST_CASE("empty config gives the reference defaults") {
  const auto c = load_config("");
  CHECK(c.ok());
  CHECK(c.issues.empty());
  CHECK(computed_normalizer(c.config.reward, c.config.structure) == kReferenceNormalizer);
  CHECK(reward_constants_are_reference(c.config));
  CHECK(c.config.iterations == 100);
  CHECK(c.config.batch == 64);
  CHECK(c.config.grpo.group_size == 8);
  CHECK(c.config.max_turns == 16);
  CHECK(c.config.grpo.eps_high == 0.4);
}

TEST_CASE("key = value and JSON documents") {
  const auto kv = load_config("# comment\nlambda3 = 4  # trailing\nseed: 18446744073709551615\n\ng=4\n");
  REQUIRE(kv.ok());
  CHECK(kv.config.reward.lambda3 == 4.0);
  CHECK(kv.config.seed == 18446744073709551615ull);
  CHECK(kv.config.grpo.group_size == 4);
  CHECK(kv.explicit_keys.count("lambda3"));

  const auto js = load_config(R"({"eta": 0.5, "iterations": 3, "s": "2.0"})");
  REQUIRE(js.ok());
  CHECK(js.config.reward.eta == 0.5);
  CHECK(js.config.iterations == 3);
  CHECK(js.config.reward.scale == 2.0);
  CHECK_FALSE(load_config("{not json").ok());
  CHECK_FALSE(load_config(R"({"eta": [1]})").ok());
}

TEST_CASE("validation errors and warnings") {
  using S = ConfigIssue::Severity;
  CHECK(has_issue(load_config("kappa = 0"), "kappa", S::Error));
  CHECK(has_issue(load_config("kappa = 1.5"), "kappa", S::Error));
  CHECK(has_issue(load_config("lambda1 = -1"), "lambda1", S::Error));
  CHECK(has_issue(load_config("gamma = 0"), "gamma", S::Error));
  CHECK(has_issue(load_config("alpha = 0"), "alpha", S::Error));
  CHECK(has_issue(load_config("g = 1"), "g", S::Error));
  CHECK(has_issue(load_config("eps_low = 0"), "eps_low", S::Error));
  CHECK(has_issue(load_config("delta = 0"), "delta", S::Error));
  CHECK(has_issue(load_config("n_norm = 0"), "n_norm", S::Error));
  CHECK(has_issue(load_config("bogus = 1"), "bogus", S::Error));
  CHECK(has_issue(load_config("eta = abc"), "eta", S::Error));
  CHECK(has_issue(load_config("seed = -1"), "seed", S::Error));
  CHECK(has_issue(load_config("lambda1=0\nlambda2=0\nlambda3=0\nlambda4=0"), "n_norm", S::Error));
  CHECK_FALSE(load_config("just words").ok());

  const auto eta = load_config("eta = 5.0");
  CHECK(eta.ok());
  CHECK(has_issue(eta, "eta", S::Warning));

  const auto pinned = load_config("n_norm = 20");
  CHECK(pinned.ok());
  CHECK(has_issue(pinned, "n_norm", S::Warning));
  CHECK_FALSE(has_issue(load_config("n_norm = 21.6"), "n_norm", S::Warning));
}

TEST_CASE("effective config lists every key") {
  const auto j = effective_config(RunConfig{});
  for (const auto& k : reward_config_keys()) CHECK(j.contains(k));
  for (const auto& k : run_config_keys()) CHECK(j.contains(k));
  CHECK(j["n_norm"].is_null());
  // every listed key is accepted by the loader
  for (const auto& k : reward_config_keys()) CHECK(load_config(k + " = 1").issues.size() <= 2);
}
