#include "doctest.h"
#include "esp/session.hpp"
#include "support/workspace.hpp"

using namespace esp;
using esp::testing::fixture;
using esp::testing::TempDir;

namespace {

AnalyzeInput demo_input() {
  AnalyzeInput in;
  in.kb_path = fixture("demo/kb.json");
  in.src_root = fixture("demo/src");
  return in;
}

std::map<std::string, std::string> contents(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& name : session_artifacts(dir)) out[name] = read_text_file(dir / name);
  return out;
}

}  // namespace

TEST_SUITE("session") {

TEST_CASE("pipeline writes every stage artifact") {
  TempDir dir("session");
  run_pipeline(dir.path(), demo_input(), {});
  for (const char* a : {"kb.json", "app.json", "manifest.json", "attacks.json", "risk_report.json", "risk_report.md",
                        "solutions.json", "hidden_solution.json", "hiding_model.lp"})
    CHECK_MESSAGE(fs::exists(dir / a), a);
  CHECK_FALSE(fs::exists(dir / "FAILED"));
  auto manifest = SessionStore(dir.path()).manifest();
  for (const char* stage : {"framing", "assessment", "mitigation", "hiding"}) CHECK(manifest.at("stages").contains(stage));
  auto sols = SessionStore(dir.path()).read_json("solutions.json").at("solutions");
  REQUIRE(!sols.empty());
  CHECK(sols[0].at("id") == "sol-1");
  CHECK(sols[0].at("game_value").get<double>() >= 0.0);
}

TEST_CASE("rerunning is byte identical, in place and elsewhere") {
  TempDir a("session"), b("session");
  run_pipeline(a.path(), demo_input(), {});
  auto first = contents(a.path());
  run_pipeline(a.path(), demo_input(), {});
  CHECK(contents(a.path()) == first);
  PipelineOptions serial;
  serial.mitigate.parallel = false;
  run_pipeline(b.path(), demo_input(), serial);
  CHECK(contents(b.path()) == first);
}

TEST_CASE("missing knowledge base fails at framing") {
  TempDir dir("session");
  auto in = demo_input();
  in.kb_path = fixture("demo/absent.json");
  try {
    run_pipeline(dir.path(), in, {});
    FAIL("pipeline succeeded");
  } catch (const StageError& e) {
    CHECK(e.stage() == "framing");
    CHECK(e.kind() == Error::Kind::io);
  }
  CHECK(SessionStore(dir.path()).read_json("FAILED").at("stage") == "framing");
}

TEST_CASE("what-if evaluation") {
  TempDir dir("session");
  run_pipeline(dir.path(), demo_input(), {});
  const auto before = contents(dir.path());
  json top = find_solution(dir.path(), "sol-1");

  SUBCASE("the engine's top solution reproduces its numbers") {
    auto r = evaluate_what_if(dir.path(), top);
    CHECK(r.at("valid") == true);
    CHECK(r.at("protection_index") == top.at("protection_index"));
    CHECK(r.at("game_value") == top.at("game_value"));
    CHECK(r.at("signature") == solution_from_json(top).signature());
  }
  SUBCASE("dropping the last PI never raises P") {
    json edited = top;
    edited["applied"].erase(edited["applied"].size() - 1);
    auto r = evaluate_what_if(dir.path(), edited);
    CHECK(r.at("protection_index").get<double>() <= top.at("protection_index").get<double>());
  }
  SUBCASE("a forbidden pair is named") {
    json edited = json::parse(R"({"applied":[{"pi":"mob-1","part":"verify","layer":1},{"pi":"cff-1","part":"verify","layer":2}]})");
    auto r = evaluate_what_if(dir.path(), edited);
    CHECK(r.at("valid") == false);
    bool named = false;
    for (const auto& d : r.at("diagnostics")) named = named || d.at("entity") == "mob-1,cff-1";
    CHECK(named);
  }
  SUBCASE("exceeding the client_time budget is diagnosed") {
    json edited{{"applied", json::array()}};
    for (const char* part : {"mix", "verify", "main", "verify_core"})
      for (int layer = 1; layer <= 3; ++layer) edited["applied"].push_back({{"pi", "cff-1"}, {"part", part}, {"layer", layer}});
    auto r = evaluate_what_if(dir.path(), edited);
    CHECK(r.at("valid") == false);
    bool over = false;
    for (const auto& d : r.at("diagnostics")) over = over || d.at("entity") == "client_time";
    CHECK(over);
  }
  CHECK(contents(dir.path()) == before);
}

TEST_CASE("deployment plans") {
  TempDir dir("session");
  run_pipeline(dir.path(), demo_input(), {});
  auto top = find_solution(dir.path(), "sol-1");
  auto plan = export_plan(dir.path(), "sol-1");
  const auto& directives = plan.at("directives");
  REQUIRE(directives.size() == top.at("applied").size());
  for (std::size_t i = 0; i < directives.size(); ++i) {
    CHECK(directives[i].at("pi") == top.at("applied")[i].at("pi"));
    CHECK(directives[i].at("layer") == top.at("applied")[i].at("layer"));
  }
  CHECK(export_plan(dir.path(), "sol-1").at("hash") == plan.at("hash"));
  CHECK(SessionStore(dir.path()).manifest().at("plans").at("sol-1") == plan.at("hash"));
  CHECK(fs::exists(dir / "plan_sol-1.json"));
  CHECK(export_plan(dir.path(), "hidden").at("directives").size() >= directives.size());
  CHECK_THROWS_AS(export_plan(dir.path(), "sol-999"), Error);

  MitigateOptions zero;
  zero.budgets = OverheadVector{};
  auto sols = mitigate(dir.path(), zero).at("solutions");
  REQUIRE(sols.size() == 1);
  CHECK(sols[0].at("applied").empty());
  auto empty = export_plan(dir.path(), "sol-1");
  CHECK(empty.at("directives").empty());
  CHECK(empty.at("hash").get<std::string>().size() == 64);
}

TEST_CASE("assessment artifacts are untouched by mitigation and hiding") {
  TempDir dir("session");
  analyze(dir.path(), demo_input());
  assess(dir.path());
  const auto attacks = read_text_file(dir / "attacks.json");
  const auto report = read_text_file(dir / "risk_report.json");
  mitigate(dir.path(), {});
  hide_solution(dir.path(), {});
  CHECK(read_text_file(dir / "attacks.json") == attacks);
  CHECK(read_text_file(dir / "risk_report.json") == report);
}

TEST_CASE("framing edits drop downstream stages and re-gate attacks") {
  TempDir dir("session");
  run_pipeline(dir.path(), demo_input(), {});
  update_framing(dir.path(), json::parse(R"({"attacker":{"expertise":"amateur"}})"));
  CHECK_FALSE(fs::exists(dir / "attacks.json"));
  CHECK_FALSE(fs::exists(dir / "solutions.json"));
  assess(dir.path());
  const auto amateur = SessionStore(dir.path()).read_json("attacks.json");
  CHECK(amateur.at("gated_out").get<int>() > 0);

  update_framing(dir.path(), json::parse(R"({"attacker":{"expertise":"guru"}})"));
  assess(dir.path());
  const auto guru = SessionStore(dir.path()).read_json("attacks.json");
  CHECK(guru.at("gated_out") == 0);
  CHECK(guru.at("paths").size() > amateur.at("paths").size());
  CHECK(read_framing(dir.path()).at("attacker").at("expertise") == "guru");

  json framing = read_framing(dir.path());
  framing["assets"].push_back(json::parse(R"({"part": "mix", "requirements": ["integrity"], "weight": 1.0})"));
  update_framing(dir.path(), framing);
  bool added = false;
  const json updated = read_framing(dir.path());
  for (const auto& a : updated.at("assets")) added = added || a.at("part") == "mix";
  CHECK(added);

  json bad = read_framing(dir.path());
  bad["assets"][0]["weight"] = -1;
  CHECK_THROWS_AS(update_framing(dir.path(), bad), Error);
}

TEST_CASE("budget lists") {
  auto b = parse_budget_list("client_time=20,server_memory=5");
  CHECK(b == std::map<std::string, double>{{"client_time", 20}, {"server_memory", 5}});
  CHECK_THROWS_AS(parse_budget_list("latency=3"), Error);
  CHECK_THROWS_AS(parse_budget_list("client_time"), Error);
}

}  // TEST_SUITE
