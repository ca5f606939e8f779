#include "esp/candidates.hpp"

#include <algorithm>
#include <exception>
#include <queue>
#include <set>

namespace esp {

namespace {

void extend(std::vector<std::string>& prefix, const std::vector<std::string>& suitable, const KnowledgeBase& kb,
            int lmax, std::vector<std::vector<std::string>>& out) {
  out.push_back(prefix);
  if (int(prefix.size()) >= lmax) return;
  for (const auto& id : suitable) {
    const auto* pi = kb.find_instance(id);
    if (!pi) throw Error(Error::Kind::reference, "suitable list names unknown PI '" + id + "'");
    const auto& prot = kb.protection_of(*pi);
    bool ok = true;
    for (const auto& earlier : prefix) {
      if (kb.precedence.is_forbidden(earlier, id)) ok = false;
      if (prot.singleton && kb.find_instance(earlier)->protection == prot.id) ok = false;
      if (!ok) break;
    }
    if (!ok) continue;
    prefix.push_back(id);
    extend(prefix, suitable, kb, lmax, out);
    prefix.pop_back();
  }
}

bool exceeds(const OverheadVector& v, const OverheadVector& budgets) {
  for (std::size_t k = 0; k < kOverheadCount; ++k)
    if (v.values[k] > budgets.values[k] + 1e-9 * std::max(1.0, std::abs(budgets.values[k]))) return true;
  return false;
}

}  // namespace

std::vector<std::vector<std::string>> admissible_sequences(const std::vector<std::string>& suitable,
                                                           const KnowledgeBase& kb, int lmax) {
  std::vector<std::string> sorted = suitable;
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  std::vector<std::vector<std::string>> out;
  std::vector<std::string> prefix;
  extend(prefix, sorted, kb, lmax, out);
  return out;
}

CandidateSpace::CandidateSpace(const MitigationContext& ctx, const SuitableMap& suitable) : ctx_(ctx) {
  std::set<std::string> grouped;
  std::vector<CandidateUnit> units;
  for (const auto& set : ctx.kb().precedence.correlation_sets) {
    CandidateUnit u;
    std::set<std::string> pis;
    for (const auto& part : set) {
      if (!ctx.app().find_part(part)) continue;
      u.parts.push_back(part);
      grouped.insert(part);
      if (auto it = suitable.find(part); it != suitable.end()) pis.insert(it->second.begin(), it->second.end());
    }
    if (u.parts.empty() || pis.empty()) continue;
    std::sort(u.parts.begin(), u.parts.end());
    u.suitable.assign(pis.begin(), pis.end());
    units.push_back(std::move(u));
  }
  for (const auto& [part, pis] : suitable) {
    if (grouped.contains(part) || pis.empty() || !ctx.app().find_part(part)) continue;
    CandidateUnit u;
    u.parts = {part};
    u.suitable = pis;
    std::sort(u.suitable.begin(), u.suitable.end());
    units.push_back(std::move(u));
  }
  std::sort(units.begin(), units.end(),
            [](const CandidateUnit& a, const CandidateUnit& b) { return a.parts.front() < b.parts.front(); });

  for (auto& u : units) {
    u.sequences = admissible_sequences(u.suitable, ctx.kb(), ctx.lmax());
    for (const auto& seq : u.sequences) {
      OverheadVector o;
      for (const auto& part : u.parts)
        for (const auto& id : seq) o += pi_overhead(*ctx.kb().find_instance(id), ctx.app().find_part(part)->metrics);
      u.overhead.push_back(o);
    }
  }
  units_ = std::move(units);
}

PartSequences CandidateSpace::materialize(std::span<const std::uint32_t> choice) const {
  PartSequences out;
  for (std::size_t u = 0; u < units_.size(); ++u) {
    const auto& seq = units_[u].sequences[choice[u]];
    if (seq.empty()) continue;
    for (const auto& part : units_[u].parts) out[part] = seq;
  }
  return out;
}

std::size_t CandidateSpace::enumerate(const OverheadVector& budgets, std::size_t chunk,
                                      const std::function<void(const std::vector<Choice>&)>& sink) const {
  chunk = std::max<std::size_t>(chunk, 1);
  // Sequences are in preorder and overhead only grows along an extension, so
  // an over-budget sequence lets the walk skip its whole subtree.
  std::vector<std::vector<std::uint32_t>> subtree_end(units_.size());
  for (std::size_t u = 0; u < units_.size(); ++u) {
    const auto& seqs = units_[u].sequences;
    auto& end = subtree_end[u];
    end.assign(seqs.size(), std::uint32_t(seqs.size()));
    for (std::size_t s = 0; s < seqs.size(); ++s)
      for (std::size_t t = s + 1; t < seqs.size(); ++t) {
        const auto& a = seqs[s];
        const auto& b = seqs[t];
        if (b.size() <= a.size() || !std::equal(a.begin(), a.end(), b.begin())) {
          end[s] = std::uint32_t(t);
          break;
        }
      }
  }

  std::vector<Choice> buffer;
  std::size_t produced = 0;
  Choice choice(units_.size(), 0);
  std::vector<OverheadVector> partial(units_.size() + 1);

  auto emit = [&] {
    if (estimate_overhead(materialize(choice), ctx_.app(), ctx_.kb()).within(budgets)) {
      buffer.push_back(choice);
      ++produced;
      if (buffer.size() >= chunk) {
        sink(buffer);
        buffer.clear();
      }
    }
  };

  std::function<void(std::size_t)> walk = [&](std::size_t u) {
    if (u == units_.size()) {
      emit();
      return;
    }
    const auto& unit = units_[u];
    std::uint32_t s = 0;
    while (s < unit.sequences.size()) {
      OverheadVector next = partial[u] + unit.overhead[s];
      if (exceeds(next, budgets)) {
        s = subtree_end[u][s];
        continue;
      }
      partial[u + 1] = next;
      choice[u] = s;
      walk(u + 1);
      ++s;
    }
    choice[u] = 0;
  };
  walk(0);
  if (!buffer.empty()) sink(buffer);
  return produced;
}

std::vector<PartSequences> CandidateSpace::enumerate_all(const OverheadVector& budgets) const {
  std::vector<PartSequences> out;
  enumerate(budgets, 4096, [&](const std::vector<Choice>& chunk) {
    for (const auto& c : chunk) out.push_back(materialize(c));
  });
  return out;
}

// -----------------------------------------------------------------------------

RiskKernel::RiskKernel(const MitigationContext& ctx, const CandidateSpace& space) : ctx_(ctx) {
  const auto& units = space.units();
  std::map<std::string, int> unit_of;
  for (std::size_t u = 0; u < units.size(); ++u)
    for (const auto& part : units[u].parts) unit_of[part] = int(u);
  for (const auto& [part, u] : unit_of) part_units_.push_back(u);

  columns_.assign(units.size(), 0);
  std::vector<std::vector<const StepInstance*>> affected(units.size());
  for (const auto& path : ctx.paths()) {
    auto& slots = slots_.emplace_back();
    auto& vanilla = vanilla_steps_.emplace_back();
    for (const auto& step : path.steps) {
      Slot slot;
      if (auto it = unit_of.find(step.target); it != unit_of.end()) {
        slot.unit = it->second;
        slot.column = columns_[std::size_t(slot.unit)]++;
        affected[std::size_t(slot.unit)].push_back(&step);
      }
      slots.push_back(slot);
      vanilla.push_back(ctx.step_risk(step, {}));
    }
  }

  table_.resize(units.size());
  penalty_.resize(units.size());
  for (std::size_t u = 0; u < units.size(); ++u) {
    const auto& seqs = units[u].sequences;
    table_[u].resize(seqs.size() * columns_[u]);
    for (std::size_t s = 0; s < seqs.size(); ++s) {
      for (std::size_t c = 0; c < columns_[u]; ++c) table_[u][s * columns_[u] + c] = ctx.step_risk(*affected[u][c], seqs[s]);
      penalty_[u].push_back(sequence_penalty(seqs[s], ctx.kb().precedence));
    }
  }
}

double RiskKernel::score(std::span<const std::uint32_t> choice) const {
  const auto& paths = ctx_.paths();
  std::vector<double> risks(paths.size());
  std::vector<double> steps;
  for (std::size_t p = 0; p < paths.size(); ++p) {
    steps.clear();
    for (std::size_t s = 0; s < slots_[p].size(); ++s) {
      const auto& slot = slots_[p][s];
      if (slot.unit < 0) {
        steps.push_back(vanilla_steps_[p][s]);
      } else {
        const auto u = std::size_t(slot.unit);
        steps.push_back(table_[u][choice[u] * columns_[u] + slot.column]);
      }
    }
    risks[p] = path_index(steps, ctx_.aggregator());
  }
  double penalty = 1.0;
  for (int u : part_units_) penalty *= penalty_[std::size_t(u)][choice[std::size_t(u)]];
  return protection_index_from(risks, ctx_.layout(), penalty);
}

void RiskKernel::score_serial(const std::vector<Choice>& candidates, std::vector<double>& out) const {
  out.resize(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) out[i] = score(candidates[i]);
}

void RiskKernel::score_parallel(const std::vector<Choice>& candidates, std::vector<double>& out) const {
  out.resize(candidates.size());
  const long n = long(candidates.size());
#pragma omp parallel for schedule(static)
  for (long i = 0; i < n; ++i) out[std::size_t(i)] = score(candidates[std::size_t(i)]);
}

// -----------------------------------------------------------------------------

CandidateSearchResult search_candidates(const MitigationContext& ctx, const SuitableMap& suitable,
                                        const CandidateSearchOptions& options) {
  CandidateSpace space(ctx, suitable);
  RiskKernel kernel(ctx, space);

  struct Entry {
    double score;
    std::size_t order;
    Choice choice;
  };
  // Heap top is the weakest entry: lowest score, then latest in enumeration order.
  auto weaker = [](const Entry& a, const Entry& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.order < b.order;
  };
  std::priority_queue<Entry, std::vector<Entry>, decltype(weaker)> heap(weaker);
  const std::size_t keep = std::size_t(std::max(options.beam_width, 1)) - 1;

  std::size_t order = 0;
  std::vector<double> scores;
  CandidateSearchResult result;
  result.enumerated = space.enumerate(options.budgets, options.chunk, [&](const std::vector<Choice>& chunk) {
    if (options.parallel)
      kernel.score_parallel(chunk, scores);
    else
      kernel.score_serial(chunk, scores);
    for (std::size_t i = 0; i < chunk.size(); ++i, ++order) {
      bool empty = std::all_of(chunk[i].begin(), chunk[i].end(), [](std::uint32_t c) { return c == 0; });
      if (empty || keep == 0) continue;
      Entry e{scores[i], order, chunk[i]};
      if (heap.size() < keep) {
        heap.push(std::move(e));
      } else if (e.score > heap.top().score) {
        heap.pop();
        heap.push(std::move(e));
      }
    }
  });

  std::vector<Entry> kept;
  kept.push_back(Entry{0.0, 0, Choice(space.units().size(), 0)});
  while (!heap.empty()) {
    kept.push_back(heap.top());
    heap.pop();
  }
  std::vector<std::pair<Entry*, Solution>> sols;
  for (auto& e : kept) {
    Solution s = ctx.make_solution(space.materialize(e.choice));
    e.score = s.protection_index;
    sols.emplace_back(&e, std::move(s));
  }
  std::stable_sort(sols.begin(), sols.end(), [](const auto& a, const auto& b) {
    if (a.first->score != b.first->score) return a.first->score > b.first->score;
    return a.first->order < b.first->order;
  });
  for (auto& [e, s] : sols) result.beam.push_back(std::move(s));
  return result;
}

}  // namespace esp
