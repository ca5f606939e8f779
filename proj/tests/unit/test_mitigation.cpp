#include <set>

#include "doctest.h"
#include "esp/candidates.hpp"
#include "support/generators.hpp"
#include "support/oracles.hpp"

using namespace esp;

namespace {

ProtectionInstance pi_of(const std::string& id, const std::string& protection) {
  ProtectionInstance pi;
  pi.id = id;
  pi.protection = protection;
  pi.class_deltas["static"][Attribute::complexity] = 1;
  return pi;
}

/// One integrity asset f (sloc 50) attacked by a single static step, and two
/// PIs p, q each raising its complexity.
struct TwoPis {
  KnowledgeBase kb;
  ApplicationModel app;

  explicit TwoPis(bool p_singleton = false, bool q_singleton = false) {
    AttackStepRule r;
    r.id = "patch";
    r.head = Term::parse("breached(integrity,V)");
    r.classes = {"static"};
    kb.rules.push_back(r);
    kb.protections.push_back({"prot_p", {Requirement::integrity}, p_singleton, 0.5, 0.5});
    kb.protections.push_back({"prot_q", {Requirement::integrity}, q_singleton, 0.5, 0.5});
    kb.instances = {pi_of("p", "prot_p"), pi_of("q", "prot_q")};
    kb.thresholds.metric_bands.clear();
    kb.reindex();

    ApplicationPart f{"f", PartKind::function, "f", {}, {"f.c", 1, 50}, {}};
    f.metrics[Metric::sloc] = 50;
    f.metrics[Metric::cyclomatic] = 4;
    app.parts.push_back(f);
    app.assets.push_back({"f", {Requirement::integrity}, 1.0});
  }
};

std::set<std::string> candidate_signatures(const KnowledgeBase& kb, const ApplicationModel& app, int lmax,
                                           const OverheadVector& budgets) {
  Session s(kb, app);
  MitigationContext ctx(s, infer_paths(s, {4, 64}), lmax);
  CandidateSpace space(ctx, suitable_pis(s, ctx.paths()));
  std::set<std::string> out;
  for (const auto& c : space.enumerate_all(budgets)) out.insert(signature_of(c));
  return out;
}

OverheadVector unlimited() {
  OverheadVector b;
  b.values.fill(1e9);
  return b;
}

}  // namespace

TEST_SUITE("mitigation") {

TEST_CASE("suitability filters") {
  TwoPis t;
  SUBCASE("a static class delta on a static step is suitable") {
    Session s(t.kb, t.app);
    auto suit = suitable_pis(s, infer_paths(s, {4, 64}));
    CHECK(suit == SuitableMap{{"f", {"p", "q"}}});
  }
  SUBCASE("a PI without deltas is never suitable") {
    t.kb.instances[1].class_deltas.clear();
    Session s(t.kb, t.app);
    CHECK(suitable_pis(s, infer_paths(s, {4, 64})) == SuitableMap{{"f", {"p"}}});
  }
  SUBCASE("a confidentiality-only PI on an integrity asset is excluded") {
    t.kb.protections[1].requirements = {Requirement::confidentiality};
    Session s(t.kb, t.app);
    CHECK(suitable_pis(s, infer_paths(s, {4, 64})) == SuitableMap{{"f", {"p"}}});
  }
}

TEST_CASE("metric prediction composes transforms left to right") {
  ProtectionInstance id = pi_of("id", "x");
  MetricVector m;
  m[Metric::sloc] = 10;
  m[Metric::cyclomatic] = 3;
  const ProtectionInstance* one[] = {&id};
  CHECK(predict_metrics(m, one, 3) == m);

  ProtectionInstance add40 = pi_of("add40", "x");
  add40.transform.offset[std::size_t(Metric::sloc)] = 40;
  const ProtectionInstance* twice[] = {&add40, &add40};
  CHECK(predict_metrics(m, twice, 3)[Metric::sloc] == 90);

  ProtectionInstance scale = pi_of("scale", "x");
  for (std::size_t i = 0; i < kMetricCount; ++i) scale.transform.matrix[i][i] = 2;
  ProtectionInstance add10 = pi_of("add10", "x");
  add10.transform.offset[std::size_t(Metric::sloc)] = 10;
  const ProtectionInstance* scale_then_add[] = {&scale, &add10};
  const ProtectionInstance* add_then_scale[] = {&add10, &scale};
  CHECK(predict_metrics(m, scale_then_add, 3)[Metric::sloc] == 30);
  CHECK(predict_metrics(m, add_then_scale, 3)[Metric::sloc] == 40);

  ProtectionInstance shrink = pi_of("shrink", "x");
  shrink.transform.offset[std::size_t(Metric::sloc)] = -100;
  const ProtectionInstance* clamp[] = {&shrink};
  CHECK(predict_metrics(m, clamp, 3)[Metric::sloc] == 0);

  const ProtectionInstance* too_long[] = {&id, &id, &id, &id};
  CHECK_THROWS_AS(predict_metrics(m, too_long, 3), Error);
}

TEST_CASE("overhead estimation") {
  TwoPis t;
  CHECK(estimate_overhead({}, t.app, t.kb) == OverheadVector{});
  CHECK(estimate_overhead({{"f", {"p"}}}, t.app, t.kb) == OverheadVector{});
  t.kb.instances[0].overhead[std::size_t(OverheadKind::client_time)][std::size_t(Metric::sloc)] = 0.1;
  t.kb.reindex();
  auto o = estimate_overhead({{"f", {"p"}}}, t.app, t.kb);
  CHECK(o[OverheadKind::client_time] == doctest::Approx(5.0).epsilon(1e-15));
  CHECK(o.total() == o[OverheadKind::client_time]);
  CHECK_THROWS_AS(estimate_overhead({{"nope", {"p"}}}, t.app, t.kb), Error);
}

TEST_CASE("candidate enumeration on one part with two PIs") {
  SUBCASE("no singleton") {
    TwoPis t;
    CHECK(candidate_signatures(t.kb, t.app, 2, unlimited()) ==
          std::set<std::string>{"", "f=[p]", "f=[q]", "f=[p,p]", "f=[p,q]", "f=[q,p]", "f=[q,q]"});
  }
  SUBCASE("both singleton") {
    TwoPis t(true, true);
    CHECK(candidate_signatures(t.kb, t.app, 2, unlimited()) ==
          std::set<std::string>{"", "f=[p]", "f=[q]", "f=[p,q]", "f=[q,p]"});
  }
  SUBCASE("forbidden pair removes one order") {
    TwoPis t(true, true);
    t.kb.precedence.forbidden.insert({"p", "q"});
    CHECK(candidate_signatures(t.kb, t.app, 2, unlimited()) ==
          std::set<std::string>{"", "f=[p]", "f=[q]", "f=[q,p]"});
  }
  SUBCASE("zero budgets leave only the empty solution") {
    TwoPis t;
    for (auto& pi : t.kb.instances) pi.overhead[0][0] = 0.01;
    t.kb.reindex();
    CHECK(candidate_signatures(t.kb, t.app, 2, OverheadVector{}) == std::set<std::string>{""});
  }
}

TEST_CASE("discouraged penalty and empty solution") {
  TwoPis t;
  t.kb.precedence.discouraged[{"p", "q"}] = 0.5;
  t.kb.reindex();
  Session s(t.kb, t.app);
  MitigationContext ctx(s, infer_paths(s, {4, 64}), 2);
  CHECK(ctx.protection_index({}) == 0.0);
  CHECK(ctx.discouraged_penalty({{"f", {"p", "q"}}}) == 0.5);
  CHECK(ctx.discouraged_penalty({{"f", {"q", "p"}}}) == 1.0);
  const double plain = ctx.protection_index({{"f", {"q", "p"}}});
  CHECK(plain > 0.0);
  CHECK(ctx.protection_index({{"f", {"p", "q"}}}) == doctest::Approx(plain * 0.5).epsilon(1e-15));
  CHECK(ctx.path_resilience(0, {}) == 0.0);
  CHECK(ctx.path_resilience(0, {{"f", {"p"}}}) == 0.5);
}

TEST_CASE("solution checks name the offending entity") {
  TwoPis t(true, false);
  t.kb.precedence.forbidden.insert({"q", "p"});
  t.kb.instances[0].overhead[0][0] = 1.0;
  t.kb.reindex();
  Session s(t.kb, t.app);
  MitigationContext ctx(s, infer_paths(s, {4, 64}), 2);
  OverheadVector budgets = unlimited();
  budgets[OverheadKind::client_time] = 10;
  CHECK(ctx.check({{"f", {"p"}}}, unlimited()).empty());

  auto forbidden = ctx.check({{"f", {"q", "p"}}}, unlimited());
  REQUIRE(forbidden.size() == 1);
  CHECK(forbidden[0].entity == "q,p");

  auto over = ctx.check({{"f", {"p"}}}, budgets);
  REQUIRE(over.size() == 1);
  CHECK(over[0].entity == "client_time");

  CHECK(ctx.check({{"f", {"p", "p"}}}, unlimited()).size() == 1);
  CHECK(ctx.check({{"f", {"q", "q", "q"}}}, unlimited()).size() == 1);
  CHECK(ctx.check({{"g", {"q"}}}, unlimited()).size() == 1);
}

TEST_CASE("risk kernel, serial and parallel scoring agree with the context") {
  esp::testing::Rng rng(11);
  for (int i = 0; i < 40; ++i) {
    auto c = esp::testing::random_mitigation_case(rng);
    Session s(c.kb, c.app);
    MitigationContext ctx(s, gate_by_attacker(infer_paths(s, {4, 64}), s.kb(), s.kb().attacker), c.lmax);
    CandidateSpace space(ctx, suitable_pis(s, ctx.paths()));
    RiskKernel kernel(ctx, space);
    std::vector<Choice> all;
    space.enumerate(c.kb.thresholds.budgets, 1 << 20, [&](const std::vector<Choice>& chunk) {
      all.insert(all.end(), chunk.begin(), chunk.end());
    });
    std::vector<double> serial, parallel;
    kernel.score_serial(all, serial);
    kernel.score_parallel(all, parallel);
    CHECK(serial == parallel);
    for (std::size_t k = 0; k < all.size(); ++k) CHECK(serial[k] == ctx.protection_index(space.materialize(all[k])));
  }
}

TEST_CASE("correlated parts always carry the same sequence") {
  esp::testing::Rng rng(5);
  int seen = 0;
  for (int i = 0; i < 200 && seen < 20; ++i) {
    auto c = esp::testing::random_mitigation_case(rng);
    if (c.kb.precedence.correlation_sets.empty()) continue;
    ++seen;
    Session s(c.kb, c.app);
    MitigationContext ctx(s, infer_paths(s, {4, 64}), c.lmax);
    CandidateSpace space(ctx, suitable_pis(s, ctx.paths()));
    for (const auto& cand : space.enumerate_all(c.kb.thresholds.budgets)) {
      auto f0 = cand.find("f0"), f1 = cand.find("f1");
      CHECK((f0 == cand.end()) == (f1 == cand.end()));
      if (f0 != cand.end() && f1 != cand.end()) CHECK(f0->second == f1->second);
    }
  }
  CHECK(seen > 0);
}

TEST_CASE("solution JSON round trip and signature") {
  auto sol = Solution::from_sequences({{"b", {"q"}}, {"a", {"p", "q"}}});
  CHECK(sol.signature() == "a=[p,q];b=[q]");
  CHECK(sol.applied.size() == 3);
  CHECK(sol.applied[1] == AppliedPI{"q", "a", 2});
  sol.enlargements.push_back({"q", "b", "c"});
  auto back = solution_from_json(solution_to_json(sol));
  CHECK(back.applied == sol.applied);
  CHECK(back.enlargements == sol.enlargements);
  CHECK(Solution{}.signature().empty());
}

}  // TEST_SUITE
