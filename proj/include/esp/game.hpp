#pragma once

#include <span>
#include <vector>

#include "esp/mitigation.hpp"

namespace esp {

/// Attacker-side view of one candidate: per-path risks before and after
/// protection and the resilience that slows their erosion.
struct GameInstance {
  std::vector<double> vanilla;
  std::vector<double> protected_risk;
  std::vector<double> resilience;
  const IndexLayout* layout = nullptr;
  double penalty = 1.0;

  std::size_t path_count() const { return vanilla.size(); }
  /// r_van - (r_van - r_sol) * rho^e; exactly r_sol when e = 0.
  double eroded_risk(std::size_t path, int effort) const;
  /// Protection index once `effort[p]` units were invested in each path p.
  double value_at(std::span<const int> effort) const;
};

struct SearchOptions {
  bool alpha_beta = true;
  bool transposition = true;
};

struct SearchStats {
  long nodes = 0;
  long leaves = 0;
  long cutoffs = 0;
  long table_hits = 0;
};

/// Minimum protection index the attacker can reach by investing `effort`
/// units one at a time across the paths. Identical for every option setting.
double game_value(const GameInstance& g, int effort, SearchOptions options = {}, SearchStats* stats = nullptr);

struct RankedSolution {
  Solution solution;
  double game_value = 0.0;
};

/// Orders by game value (desc), total overhead (asc), then signature.
void rank_solutions(std::vector<RankedSolution>& ranked);

/// Plays the game for every candidate. With `parallel` the candidates are
/// distributed over threads, each with its own transposition table.
std::vector<RankedSolution> play_game(const MitigationContext& ctx, const std::vector<Solution>& candidates, int effort,
                                      SearchOptions options = {}, bool parallel = true,
                                      SearchStats* stats = nullptr);

}  // namespace esp
