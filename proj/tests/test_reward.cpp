#include <catch2/catch_amalgamated.hpp>

#include <string>

#include "generators.hpp"
#include "naive_reward.hpp"
#include "toolrl/reward.hpp"

using namespace toolrl;
using Catch::Approx;

namespace {

const ToolRegistry kRegistry = default_tool_registry();

std::string call(const std::string& tool) {
  return R"(<tool_call>{"name": ")" + tool + R"(", "arguments": {"image_url": "x"}}</tool_call>)";
}
std::string ok_response() { return R"(<tool_response>{"success": true, "message": "ok"}</tool_response>)"; }
std::string bad_response() { return R"(<tool_response>{"success": false, "message": "no"}</tool_response>)"; }

Transcript parse(const std::string& raw, const std::string& truth = "A") {
  Transcript t = parse_transcript(raw, kRegistry);
  t.ground_truth = truth;
  return t;
}

}  // namespace

TEST_CASE("correctness reward") {
  const RewardWeights w;
  CHECK(corr_reward(parse("<answer>\\boxed{(A) x}</answer>", "A"), w) == 8.0);
  CHECK(corr_reward(parse("<answer>\\boxed{(B) x}</answer>", "A"), w) == 0.0);
  CHECK(corr_reward(parse("<think_reasoning>r</think_reasoning>", "A"), w) == 0.0);
  CHECK(corr_reward(parse("<answer>\\boxed{a}</answer>", "A"), w) == 8.0);
}

TEST_CASE("tool reward examples") {
  const RewardWeights w;
  SECTION("two distinct tools, both successful") {
    const auto r = tool_reward(parse(call("ocr_tool") + ok_response() + call("captioning_tool") + ok_response()), w);
    CHECK(r.syntax_indicator == 1.0);
    CHECK(r.success_indicator == 1.0);
    CHECK(r.value() == Approx(2.2).margin(1e-12));
  }
  SECTION("saturation at kappa") {
    std::string raw;
    for (int i = 0; i < 3; ++i) raw += call("captioning_tool") + bad_response();
    raw += call("ocr_tool") + ok_response();
    const auto r = tool_reward(parse(raw), w);
    CHECK(r.r_div == Approx(0.3).margin(1e-12));
    CHECK(r.value() == Approx(2.3).margin(1e-12));
  }
  SECTION("global cap") {
    std::string raw;
    for (const auto& tool : kRegistry)
      for (int i = 0; i < 2; ++i) raw += call(tool) + ok_response();
    const auto r = tool_reward(parse(raw), w);
    CHECK(r.r_div == 0.8);
    CHECK(r.value() == Approx(2.8).margin(1e-12));
  }
  SECTION("unregistered tool voids syntax") {
    const auto r = tool_reward(parse(call("None")), w);
    CHECK(r.syntax_indicator == 0.0);
    CHECK(r.r_div == 0.0);
  }
  SECTION("one bad call among good ones voids syntax but keeps diversity of the good ones") {
    const auto r = tool_reward(parse(call("ocr_tool") + ok_response() + "<tool_call>{bad</tool_call>"), w);
    CHECK(r.syntax_indicator == 0.0);
    CHECK(r.success_indicator == 1.0);
    CHECK(r.r_div == Approx(0.1));
  }
  SECTION("no calls scores zero even with a successful response") {
    const auto r = tool_reward(parse(ok_response()), w);
    CHECK(r.value() == 0.0);
  }
}

TEST_CASE("terminal reward") {
  const RewardWeights w;
  CHECK(term_reward(parse("<answer>(A)</answer>"), w) == 2.0);
  CHECK(term_reward(parse("<think_reasoning>cut off mid"), w) == 0.0);
  CHECK(term_reward(parse("<answer>no letter</answer>"), w) == 2.0);
  CHECK(corr_reward(parse("<answer>no letter</answer>"), w) == 0.0);
}

TEST_CASE("normalizer and total") {
  const RewardWeights w;
  const StructParams sp;
  CHECK(computed_normalizer(w, sp) == 21.6);

  const std::string z1 = "<think_reasoning>r</think_reasoning>" + call("ocr_tool") + ok_response() +
                         call("captioning_tool") + ok_response() +
                         "<think_perception>p</think_perception><think_reasoning>r</think_reasoning>"
                         "<answer>\\boxed{(A) x}</answer>";
  const auto b = total_reward(parse(z1), w, sp);
  CHECK(b.structure.templ == RolloutTemplate::Z1_Optimal);
  CHECK(b.total_raw == Approx(20.4).margin(1e-12));
  CHECK(b.total_scaled == Approx(2.5 * 20.4 / 21.6).margin(1e-12));
  CHECK(b.total_scaled == Approx(2.3611).margin(5e-5));

  const auto empty = total_reward(parse(""), w, sp);
  CHECK(empty.total_raw == 0.0);
  CHECK(empty.total_scaled == 0.0);

  RewardWeights zero;
  zero.lambda1 = zero.lambda2 = zero.lambda3 = zero.lambda4 = 0.0;
  CHECK_THROWS_AS(total_reward(parse(z1), zero, sp), std::invalid_argument);

  RewardWeights pinned;
  pinned.n_norm = 10.0;
  CHECK(total_reward(parse(z1), pinned, sp).total_scaled == Approx(2.5 * 20.4 / 10.0));
}

TEST_CASE("breakdown json carries every field") {
  const auto j = to_json(total_reward(parse("<think_reasoning>r</think_reasoning><answer>A</answer>"), {}, {}));
  for (const char* k : {"r_corr", "r_struct", "r_tool", "r_term", "total_raw", "total_scaled", "n_norm", "template"})
    CHECK(j.contains(k));
  for (const char* k : {"syntax_indicator", "success_indicator", "r_div", "value"}) CHECK(j["r_tool"].contains(k));
  CHECK(j["template"] == "Z3");
}

TEST_CASE("property: bounded, noise-insensitive, diversity never rewards saturated repeats", "[property]") {
  gen::Generator g(99);
  const RewardWeights w;
  const StructParams sp;
  for (int i = 0; i < 1000; ++i) {
    const std::string raw = g.transcript();
    const auto t = parse(raw, g.ground_truth());
    const auto b = total_reward(t, w, sp);
    CHECK(b.total_scaled >= 0.0);
    CHECK(b.total_scaled <= w.scale + 1e-12);
    CHECK(b.total_raw <= b.n_norm + 1e-12);

    // replacing every noise segment's text leaves all components unchanged
    Transcript edited = t;
    for (auto& s : edited.segments)
      if (s.kind == SegmentKind::Noise) s.content = "something else entirely";
    const auto e = total_reward(edited, w, sp);
    CHECK(e.total_raw == b.total_raw);
  }

  std::string raw;
  double prev = -1.0;
  for (int n = 1; n <= 6; ++n) {
    raw += call("ocr_tool") + ok_response();
    const double div = tool_reward(parse(raw), w).r_div;
    CHECK(div >= prev);
    if (n > w.kappa) CHECK(div == prev);
    prev = div;
  }
}

TEST_CASE("naive oracle agrees on hand-built cases") {
  const auto n = naive::score(call("ocr_tool") + ok_response(), "A", {kRegistry.begin(), kRegistry.end()});
  CHECK(n.r_tool == Approx(2.1));
  CHECK(n.templ == "Deviant");
}
