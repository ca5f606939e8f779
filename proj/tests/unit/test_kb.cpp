#include <functional>

#include "doctest.h"
#include "esp/kb_io.hpp"
#include "support/workspace.hpp"

using namespace esp;
using esp::testing::fixture;

namespace {

json minimal() { return json::parse(read_text_file(fixture("kb/minimal.json"))); }

Error::Kind parse_error_kind(const json& doc, std::string& message) {
  try {
    parse_kb(doc.dump());
  } catch (const Error& e) {
    message = e.what();
    return e.kind();
  }
  FAIL("document was accepted");
  return Error::Kind::internal;
}

bool has_error(const std::vector<Diagnostic>& diags) {
  for (const auto& d : diags)
    if (d.severity == Severity::error) return true;
  return false;
}

int error_count(const std::vector<Diagnostic>& diags) {
  int n = 0;
  for (const auto& d : diags) n += d.severity == Severity::error;
  return n;
}

}  // namespace

TEST_SUITE("kb") {

TEST_CASE("minimal knowledge base loads with defaults") {
  auto kb = load_kb(fixture("kb/minimal.json"));
  CHECK(kb.rules.size() == 1);
  CHECK(kb.protections.size() == 1);
  CHECK(kb.instances.size() == 1);
  CHECK(kb.attacker.expertise == Expertise::professional);
  CHECK_FALSE(kb.attacker.effort_budget.has_value());
  CHECK(error_count(validate_kb(kb)) == 0);
}

TEST_CASE("attribute outside 1..5 is a range error") {
  auto doc = minimal();
  doc["attack_steps"][0]["attributes"]["complexity"] = 6;
  std::string msg;
  CHECK(parse_error_kind(doc, msg) == Error::Kind::range);
  CHECK(msg.find("complexity must be in 1..5") != std::string::npos);
}

TEST_CASE("premise over an undeclared predicate is a dangling reference") {
  auto doc = minimal();
  doc["attack_steps"][0]["premises"] = {"foo(V)"};
  std::string msg;
  CHECK(parse_error_kind(doc, msg) == Error::Kind::reference);
  CHECK(msg.find("'foo'") != std::string::npos);
}

TEST_CASE("malformed JSON reports a parse error with position") {
  std::string msg;
  try {
    parse_kb("{\"attack_steps\": [");
  } catch (const Error& e) {
    CHECK(e.kind() == Error::Kind::parse);
    msg = e.what();
  }
  CHECK(msg.find("line") != std::string::npos);
}

TEST_CASE("missing file is an io error") {
  CHECK_THROWS_AS(load_kb(fixture("kb/absent.json")), Error);
}

TEST_CASE("forbidden pair also discouraged gives exactly one error") {
  auto kb = load_kb(fixture("kb/chain.json"));
  kb.precedence.forbidden.insert({"adb", "obf"});
  kb.precedence.discouraged[{"adb", "obf"}] = 0.5;
  auto diags = validate_kb(kb);
  CHECK(error_count(diags) == 1);
}

TEST_CASE("resilience zero gives exactly one error") {
  auto kb = load_kb(fixture("kb/minimal.json"));
  kb.protections[0].resilience = 0.0;
  CHECK(error_count(validate_kb(kb)) == 1);
}

TEST_CASE("each invariant has a failing document") {
  auto base = load_kb(fixture("kb/chain.json"));
  std::vector<std::pair<const char*, std::function<void(KnowledgeBase&)>>> breakers{
      {"duplicate rule", [](KnowledgeBase& k) { k.rules.push_back(k.rules[1]); }},
      {"fingerprint", [](KnowledgeBase& k) { k.protections[0].fingerprint = 1.5; }},
      {"unknown protection", [](KnowledgeBase& k) { k.instances[0].protection = "nope"; }},
      {"unknown step delta", [](KnowledgeBase& k) { k.instances[0].step_deltas["nope"] = {}; }},
      {"negative overhead", [](KnowledgeBase& k) { k.instances[0].overhead[0][0] = -1.0; }},
      {"forbidden unknown PI", [](KnowledgeBase& k) { k.precedence.forbidden.insert({"adb", "zzz"}); }},
      {"discouraged range", [](KnowledgeBase& k) { k.precedence.discouraged[{"adb", "obf"}] = 1.0; }},
      {"self synergy", [](KnowledgeBase& k) { k.precedence.synergies[{"adb", "adb"}] = {}; }},
      {"correlation overlap", [](KnowledgeBase& k) { k.precedence.correlation_sets = {{"a", "b"}, {"b", "c"}}; }},
      {"effort", [](KnowledgeBase& k) { k.attacker.effort_budget = 0; }},
      {"gamma", [](KnowledgeBase& k) { k.hiding.gamma = 0; }},
      {"lmax", [](KnowledgeBase& k) { k.thresholds.lmax = 0; }},
      {"budget", [](KnowledgeBase& k) { k.thresholds.budgets.values[2] = -1.0; }},
      {"derived without premises", [](KnowledgeBase& k) { k.rules[0].premises.clear(); }},
      {"arity", [](KnowledgeBase& k) { k.rules[1].premises[1].args = {"V"}; }},
  };
  for (const auto& [name, breaker] : breakers) {
    auto kb = base;
    breaker(kb);
    kb.reindex();
    INFO(name);
    CHECK(has_error(validate_kb(kb)));
  }
}

TEST_CASE("canonical save round-trips byte for byte") {
  for (const char* f : {"kb/minimal.json", "kb/chain.json", "demo/kb.json"}) {
    INFO(f);
    auto once = save_kb(load_kb(fixture(f)));
    auto twice = save_kb(parse_kb(once));
    CHECK(once == twice);
    CHECK(once.back() == '\n');
  }
}

TEST_CASE("session hash is deterministic and input sensitive") {
  auto kb = load_kb(fixture("kb/minimal.json"));
  auto app = parse_app(R"({"parts":[{"id":"f","kind":"function","metrics":{"cyclomatic":1}}],"assets":[{"part":"f","requirements":["integrity"],"weight":1}]})");
  Session a(kb, app), b(kb, app);
  CHECK(a.hash() == b.hash());
  CHECK(a.hash().size() == 64);

  auto heavier = app;
  heavier.assets[0].weight = 2.0;
  CHECK(Session(kb, heavier).hash() != a.hash());

  Session empty(kb, ApplicationModel{});
  CHECK(empty.app().assets.empty());
  CHECK(empty.hash().size() == 64);
  CHECK(empty.hash() != a.hash());
}

TEST_CASE("sha256 known answer") {
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

}  // TEST_SUITE
