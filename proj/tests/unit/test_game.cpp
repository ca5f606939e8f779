#include "doctest.h"
#include "esp/candidates.hpp"
#include "esp/game.hpp"
#include "support/generators.hpp"

using namespace esp;

namespace {

/// One asset of weight 1 over every path.
IndexLayout single_asset(const std::vector<double>& vanilla) {
  IndexLayout layout;
  IndexLayout::AssetTerm a;
  a.weight = 1.0;
  a.vanilla_risk = noisy_or(vanilla);
  for (std::size_t i = 0; i < vanilla.size(); ++i) a.paths.push_back(i);
  layout.assets.push_back(a);
  return layout;
}

}  // namespace

TEST_SUITE("game") {

TEST_CASE("zero effort leaves the protected risk") {
  auto layout = single_asset({0.5});
  GameInstance g{{0.5}, {0.2}, {0.5}, &layout, 1.0};
  CHECK(g.eroded_risk(0, 0) == 0.2);
  CHECK(game_value(g, 0) == doctest::Approx(0.3).epsilon(1e-15));
}

TEST_CASE("attacker invests in the path with the larger delta") {
  // Deltas 0.3 and 0.1, resilience 0.5: one unit restores 0.15 or 0.05.
  auto layout = single_asset({0.5, 0.5});
  GameInstance g{{0.5, 0.5}, {0.2, 0.4}, {0.5, 0.5}, &layout, 1.0};
  CHECK(g.eroded_risk(0, 1) == doctest::Approx(0.35).epsilon(1e-15));
  CHECK(g.eroded_risk(1, 1) == doctest::Approx(0.45).epsilon(1e-15));
  // Hand evaluation of both allocations: 0.75 - (1 - 0.65 * 0.6) and 0.75 - (1 - 0.8 * 0.55).
  const int first[] = {1, 0}, second[] = {0, 1};
  CHECK(g.value_at(first) == doctest::Approx(0.14).epsilon(1e-12));
  CHECK(g.value_at(second) == doctest::Approx(0.19).epsilon(1e-12));
  CHECK(game_value(g, 1) == g.value_at(first));
  for (bool ab : {false, true})
    for (bool tt : {false, true}) CHECK(game_value(g, 1, {ab, tt}) == g.value_at(first));
}

TEST_CASE("minimax value, not the static index, decides the rank") {
  auto layout = single_asset({0.8});
  GameInstance s1{{0.8}, {0.2}, {2.0 / 3.0}, &layout, 1.0};
  GameInstance s2{{0.8}, {0.3}, {0.9}, &layout, 1.0};
  CHECK(game_value(s1, 0) == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(game_value(s2, 0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(game_value(s1, 1) == doctest::Approx(0.40).epsilon(1e-12));
  CHECK(game_value(s2, 1) == doctest::Approx(0.45).epsilon(1e-12));

  std::vector<RankedSolution> ranked(2);
  ranked[0].solution = Solution::from_sequences({{"f", {"s1"}}});
  ranked[0].game_value = game_value(s1, 1);
  ranked[1].solution = Solution::from_sequences({{"f", {"s2"}}});
  ranked[1].game_value = game_value(s2, 1);
  rank_solutions(ranked);
  CHECK(ranked[0].solution.signature() == "f=[s2]");
}

TEST_CASE("ties break on overhead then signature") {
  std::vector<RankedSolution> ranked(3);
  ranked[0].solution = Solution::from_sequences({{"f", {"b"}}});
  ranked[0].solution.overhead[OverheadKind::client_time] = 2;
  ranked[1].solution = Solution::from_sequences({{"f", {"c"}}});
  ranked[1].solution.overhead[OverheadKind::client_time] = 1;
  ranked[2].solution = Solution::from_sequences({{"f", {"a"}}});
  ranked[2].solution.overhead[OverheadKind::client_time] = 2;
  for (auto& r : ranked) r.game_value = 0.25;
  rank_solutions(ranked);
  CHECK(ranked[0].solution.signature() == "f=[c]");
  CHECK(ranked[1].solution.signature() == "f=[a]");
  CHECK(ranked[2].solution.signature() == "f=[b]");
}

TEST_CASE("play_game: zero effort equals P, pruning and threads are value preserving") {
  esp::testing::Rng rng(23);
  for (int i = 0; i < 30; ++i) {
    esp::testing::MitigationShape shape;
    shape.max_effort = 4;
    auto c = esp::testing::random_mitigation_case(rng, shape);
    Session s(c.kb, c.app);
    MitigationContext ctx(s, infer_paths(s, {4, 64}), c.lmax);
    CandidateSpace space(ctx, suitable_pis(s, ctx.paths()));
    std::vector<Solution> cands;
    for (const auto& seq : space.enumerate_all(c.kb.thresholds.budgets)) cands.push_back(ctx.make_solution(seq));

    auto at_zero = play_game(ctx, cands, 0);
    for (const auto& r : at_zero) CHECK(r.game_value == r.solution.protection_index);

    auto full = play_game(ctx, cands, c.effort, {true, true}, true);
    auto bare = play_game(ctx, cands, c.effort, {false, false}, false);
    auto half = play_game(ctx, cands, c.effort, {true, false}, false);
    REQUIRE(full.size() == bare.size());
    for (std::size_t k = 0; k < full.size(); ++k) {
      CHECK(full[k].solution.signature() == bare[k].solution.signature());
      CHECK(full[k].game_value == bare[k].game_value);
      CHECK(half[k].game_value == bare[k].game_value);
    }
    // The empty solution is always a candidate and scores exactly zero.
    bool empty_seen = false;
    for (const auto& r : full)
      if (r.solution.applied.empty()) {
        empty_seen = true;
        CHECK(r.game_value == 0.0);
      }
    CHECK(empty_seen);
    CHECK(full.front().game_value >= 0.0);
  }
}

}  // TEST_SUITE
