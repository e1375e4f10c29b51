#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include "toolrl/cli.hpp"

namespace {

template <class T>
std::optional<T> opt(const CLI::Option* o, const T& v) {
  if (o->count() == 0) return std::nullopt;
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace toolrl::cli;
  CLI::App app{"toolrl: rollout scoring, tool-use metrics and GRPO training on a simulated environment"};
  app.require_subcommand(1, 1);

  Streams io{std::cout, std::cerr};
  int code = kOk;

  std::string input, input_b, output, config, policy, policy_output, group_by = "dataset", format = "text";
  std::uint64_t seed = 0;
  long cutoff = 5;
  std::size_t count = 800;

  auto* score = app.add_subcommand("score", "append reward breakdowns to a rollout corpus");
  score->add_option("--input,-i", input, "corpus JSONL")->required();
  auto* score_out = score->add_option("--output,-o", output, "scored JSONL (default stdout)");
  auto* score_cfg = score->add_option("--config,-c", config, "config file");

  auto* tiu = app.add_subcommand("metrics-tiu", "per-group TER / TTAC / TSS / TIU report");
  tiu->add_option("--input,-i", input, "scored corpus or component rows")->required();
  auto* tiu_out = tiu->add_option("--output,-o", output, "report file (default stdout)");
  auto* tiu_cfg = tiu->add_option("--config,-c", config, "config file");
  tiu->add_option("--group-by", group_by, "record field used for grouping")->capture_default_str();
  tiu->add_option("--format", format, "text or json")->check(CLI::IsMember({"text", "json"}))->capture_default_str();

  auto* tr = app.add_subcommand("metrics-transitions", "state-transition count diff between two corpora");
  tr->add_option("--input,-i", input, "first corpus (a)")->required();
  tr->add_option("--input-b,-b", input_b, "second corpus (b)")->required();
  auto* tr_out = tr->add_option("--output,-o", output, "CSV (default stdout)");
  auto* tr_cfg = tr->add_option("--config,-c", config, "config file");
  tr->add_option("--cutoff", cutoff, "minimum |delta|")->check(CLI::NonNegativeNumber)->capture_default_str();

  auto* trn = app.add_subcommand("train", "run GRPO on the simulated environment");
  auto* trn_cfg = trn->add_option("--config,-c", config, "config file");
  auto* trn_out = trn->add_option("--output,-o", output, "per-iteration JSONL log (default stdout)");
  auto* trn_pol = trn->add_option("--policy-output", policy_output, "final policy JSON (default <output>.policy.json)");
  auto* trn_seed = trn->add_option("--seed", seed, "seed override");

  auto* gen = app.add_subcommand("gen-corpus", "sample a rollout corpus from a policy");
  auto* gen_cfg = gen->add_option("--config,-c", config, "config file");
  auto* gen_out = gen->add_option("--output,-o", output, "corpus JSONL (default stdout)");
  auto* gen_pol = gen->add_option("--policy", policy, "policy JSON written by train (default: initial policy)");
  auto* gen_seed = gen->add_option("--seed", seed, "seed override");
  gen->add_option("--count,-n", count, "number of records")->capture_default_str();

  auto* val = app.add_subcommand("validate-config", "print the effective configuration and check it");
  auto* val_cfg = val->add_option("--config,-c", config, "config file");

  CLI11_PARSE(app, argc, argv);

  if (score->parsed()) {
    code = cmd_score({input, opt(score_out, output), opt(score_cfg, config)}, io);
  } else if (tiu->parsed()) {
    code = cmd_metrics_tiu({input, opt(tiu_out, output), opt(tiu_cfg, config), group_by, format}, io);
  } else if (tr->parsed()) {
    code = cmd_metrics_transitions({input, input_b, opt(tr_out, output), opt(tr_cfg, config), cutoff}, io);
  } else if (trn->parsed()) {
    code = cmd_train({opt(trn_cfg, config), opt(trn_out, output), opt(trn_pol, policy_output), opt(trn_seed, seed)}, io);
  } else if (gen->parsed()) {
    code = cmd_gen_corpus({opt(gen_cfg, config), opt(gen_out, output), opt(gen_pol, policy), opt(gen_seed, seed), count},
                          io);
  } else if (val->parsed()) {
    code = cmd_validate_config(opt(val_cfg, config), io);
  }
  return code;
}
