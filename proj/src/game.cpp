#include "esp/game.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <unordered_map>

namespace esp {

double GameInstance::eroded_risk(std::size_t path, int effort) const {
  if (effort == 0) return protected_risk[path];
  const double v = vanilla[path];
  return v - (v - protected_risk[path]) * std::pow(resilience[path], effort);
}

double GameInstance::value_at(std::span<const int> effort) const {
  std::vector<double> risks(path_count());
  for (std::size_t p = 0; p < risks.size(); ++p) risks[p] = eroded_risk(p, effort[p]);
  return protection_index_from(risks, *layout, penalty);
}

namespace {

struct EffortHash {
  std::size_t operator()(const std::vector<int>& v) const noexcept {
    std::size_t h = 1469598103934665603ull;
    for (int x : v) h = (h ^ std::size_t(x)) * 1099511628211ull;
    return h;
  }
};

class Searcher {
 public:
  Searcher(const GameInstance& g, SearchOptions options, SearchStats& stats)
      : g_(g), options_(options), stats_(stats), effort_(g.path_count(), 0) {}

  double run(int remaining) { return search(remaining, std::numeric_limits<double>::infinity()); }

 private:
  struct Entry {
    double value;
    bool exact;
  };

  // Lower bound over every completion: each path at its riskiest reachable effort.
  double bound(int remaining) const {
    std::vector<double> risks(g_.path_count());
    for (std::size_t p = 0; p < risks.size(); ++p)
      risks[p] = std::max(g_.eroded_risk(p, effort_[p]), g_.eroded_risk(p, effort_[p] + remaining));
    return protection_index_from(risks, *g_.layout, g_.penalty);
  }

  double search(int remaining, double beta) {
    ++stats_.nodes;
    if (remaining == 0 || g_.path_count() == 0) {
      ++stats_.leaves;
      return g_.value_at(effort_);
    }
    if (options_.transposition) {
      auto it = table_.find(effort_);
      if (it != table_.end() && (it->second.exact || it->second.value >= beta)) {
        ++stats_.table_hits;
        return it->second.value;
      }
    }
    if (options_.alpha_beta) {
      double b = bound(remaining);
      if (b >= beta) {
        ++stats_.cutoffs;
        return b;
      }
    }
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t p = 0; p < effort_.size(); ++p) {
      ++effort_[p];
      double v = search(remaining - 1, options_.alpha_beta ? std::min(beta, best) : beta);
      --effort_[p];
      best = std::min(best, v);
    }
    if (options_.transposition) {
      // A fail-high result only proves the true value is at least beta.
      bool exact = !options_.alpha_beta || best < beta;
      table_[effort_] = Entry{exact ? best : beta, exact};
    }
    return best;
  }

  const GameInstance& g_;
  SearchOptions options_;
  SearchStats& stats_;
  std::vector<int> effort_;
  std::unordered_map<std::vector<int>, Entry, EffortHash> table_;
};

}  // namespace

double game_value(const GameInstance& g, int effort, SearchOptions options, SearchStats* stats) {
  SearchStats local;
  Searcher s(g, options, stats ? *stats : local);
  return s.run(std::max(0, effort));
}

void rank_solutions(std::vector<RankedSolution>& ranked) {
  std::stable_sort(ranked.begin(), ranked.end(), [](const RankedSolution& a, const RankedSolution& b) {
    if (a.game_value != b.game_value) return a.game_value > b.game_value;
    double oa = a.solution.overhead.total(), ob = b.solution.overhead.total();
    if (oa != ob) return oa < ob;
    return a.solution.signature() < b.solution.signature();
  });
}

std::vector<RankedSolution> play_game(const MitigationContext& ctx, const std::vector<Solution>& candidates, int effort,
                                      SearchOptions options, bool parallel, SearchStats* stats) {
  const long n = long(candidates.size());
  std::vector<RankedSolution> ranked(candidates.size());
  std::vector<SearchStats> per(candidates.size());
  std::vector<std::exception_ptr> errors(candidates.size());
#pragma omp parallel for schedule(dynamic) if (parallel)
  for (long i = 0; i < n; ++i) {
    try {
      const auto& c = candidates[std::size_t(i)];
      auto g = ctx.game_instance(c.sequences());
      ranked[std::size_t(i)] = RankedSolution{c, game_value(g, effort, options, &per[std::size_t(i)])};
    } catch (...) {
      errors[std::size_t(i)] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  if (stats)
    for (const auto& s : per) {
      stats->nodes += s.nodes;
      stats->leaves += s.leaves;
      stats->cutoffs += s.cutoffs;
      stats->table_hits += s.table_hits;
    }
  rank_solutions(ranked);
  return ranked;
}

}  // namespace esp
