#include "support/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

namespace esp::testing {

namespace {

using Binding = std::map<std::string, std::string>;

struct Tree {
  const AttackStepRule* rule = nullptr;
  Binding binding;
  std::vector<Tree> kids;
  int size = 0;  // non-derived nodes
};

bool is_var(const std::string& a) { return !a.empty() && (std::isupper(static_cast<unsigned char>(a[0])) || a[0] == '_'); }

std::vector<Tree> trees(const KnowledgeBase& kb, const std::vector<std::string>& domain, const Term& goal,
                        std::set<std::string>& ancestors, int cap) {
  std::vector<Tree> out;
  for (const auto& rule : kb.rules) {
    if (ancestors.contains(rule.id)) continue;
    if (rule.head.predicate != goal.predicate || rule.head.args.size() != goal.args.size()) continue;
    Binding b;
    bool ok = true;
    for (std::size_t i = 0; i < goal.args.size() && ok; ++i) {
      const auto& h = rule.head.args[i];
      if (!is_var(h)) ok = h == goal.args[i];
      else if (auto it = b.find(h); it != b.end()) ok = it->second == goal.args[i];
      else b[h] = goal.args[i];
    }
    if (!ok) continue;

    std::vector<std::string> free;
    for (const auto& p : rule.premises)
      for (const auto& a : p.args)
        if (is_var(a) && !b.contains(a) && std::find(free.begin(), free.end(), a) == free.end()) free.push_back(a);

    // Every assignment of the free variables, as a mixed-radix counter.
    std::size_t combos = 1;
    for (std::size_t i = 0; i < free.size(); ++i) combos *= domain.size();
    ancestors.insert(rule.id);
    for (std::size_t c = 0; c < combos; ++c) {
      Binding full = b;
      std::size_t rest = c;
      for (const auto& v : free) {
        full[v] = domain[rest % domain.size()];
        rest /= domain.size();
      }
      std::vector<std::vector<Tree>> options;
      for (const auto& p : rule.premises) {
        Term sub{p.predicate, {}};
        for (const auto& a : p.args) sub.args.push_back(is_var(a) ? full.at(a) : a);
        options.push_back(trees(kb, domain, sub, ancestors, cap));
      }
      const int self = rule.derived ? 0 : 1;
      std::vector<Tree> partial{Tree{&rule, full, {}, self}};
      for (const auto& opts : options) {
        std::vector<Tree> next;
        for (const auto& t : partial)
          for (const auto& o : opts)
            if (t.size + o.size <= cap) {
              Tree grown = t;
              grown.kids.push_back(o);
              grown.size += o.size;
              next.push_back(std::move(grown));
            }
        partial = std::move(next);
      }
      for (auto& t : partial)
        if (t.size <= cap) out.push_back(std::move(t));
    }
    ancestors.erase(rule.id);
  }
  return out;
}

void linearize(const Tree& t, std::vector<std::pair<std::string, Binding>>& out) {
  for (const auto& k : t.kids) linearize(k, out);
  if (!t.rule->derived) out.emplace_back(t.rule->id, t.binding);
}

}  // namespace

std::set<OraclePath> exhaustive_paths(const KnowledgeBase& kb, const ApplicationModel& app, int max_depth) {
  std::vector<std::string> domain;
  for (const auto& a : app.assets) domain.push_back(a.part);
  std::set<OraclePath> out;
  for (const auto& a : app.assets)
    for (auto r : a.requirements.list()) {
      const std::string req(to_string(r));
      for (const Term& goal : {Term{"breached", {req, a.part}}, Term{"breach_" + req, {a.part}}}) {
        std::set<std::string> ancestors;
        for (const auto& t : trees(kb, domain, goal, ancestors, max_depth)) {
          OraclePath p{a.part, r, {}};
          linearize(t, p.steps);
          if (!p.steps.empty()) out.insert(std::move(p));
        }
      }
    }
  return out;
}

std::set<OraclePath> as_oracle_paths(const std::vector<AttackPath>& paths) {
  std::set<OraclePath> out;
  for (const auto& p : paths) {
    OraclePath o{p.asset, p.requirement, {}};
    for (const auto& s : p.steps) o.steps.emplace_back(s.rule, s.binding);
    out.insert(std::move(o));
  }
  return out;
}

// -----------------------------------------------------------------------------

std::map<std::string, std::vector<std::string>> oracle_suitable(const Session& session,
                                                                const std::vector<AttackPath>& paths) {
  const auto& kb = session.kb();
  const auto& app = session.app();
  std::map<std::string, std::set<std::string>> sets;
  for (const auto& path : paths)
    for (const auto& step : path.steps) {
      const Asset* asset = nullptr;
      for (const auto& a : app.assets)
        if (a.part == step.target) asset = &a;
      if (!asset)
        for (const auto& a : app.assets)
          if (a.part == path.asset) asset = &a;
      const AttackStepRule* rule = nullptr;
      for (const auto& r : kb.rules)
        if (r.id == step.rule) rule = &r;
      for (const auto& pi : kb.instances) {
        AttributeDelta d;
        if (auto it = pi.step_deltas.find(rule->id); it != pi.step_deltas.end()) d += it->second;
        for (const auto& c : rule->classes)
          if (auto it = pi.class_deltas.find(c); it != pi.class_deltas.end()) d += it->second;
        bool nonzero = std::any_of(d.values.begin(), d.values.end(), [](int v) { return v != 0; });
        const Protection* prot = nullptr;
        for (const auto& p : kb.protections)
          if (p.id == pi.protection) prot = &p;
        bool addresses = false;
        for (auto r : asset->requirements.list()) addresses = addresses || prot->requirements.contains(r);
        if (nonzero && addresses) sets[step.target].insert(pi.id);
      }
    }
  std::map<std::string, std::vector<std::string>> out;
  for (const auto& [part, s] : sets) out[part] = {s.begin(), s.end()};
  return out;
}

namespace {

bool admissible_word(const std::vector<std::string>& w, const KnowledgeBase& kb) {
  std::map<std::string, int> per_protection;
  for (const auto& id : w) {
    const auto* pi = kb.find_instance(id);
    if (kb.find_protection(pi->protection)->singleton && ++per_protection[pi->protection] > 1) return false;
  }
  for (std::size_t i = 0; i < w.size(); ++i)
    for (std::size_t j = i + 1; j < w.size(); ++j)
      if (kb.precedence.forbidden.contains({w[i], w[j]})) return false;
  return true;
}

std::vector<std::vector<std::string>> all_words(const std::vector<std::string>& alphabet, int lmax) {
  std::vector<std::vector<std::string>> out{{}};
  std::vector<std::vector<std::string>> layer{{}};
  for (int len = 1; len <= lmax; ++len) {
    std::vector<std::vector<std::string>> next;
    for (const auto& w : layer)
      for (const auto& a : alphabet) {
        auto x = w;
        x.push_back(a);
        next.push_back(x);
      }
    out.insert(out.end(), next.begin(), next.end());
    layer = std::move(next);
  }
  return out;
}

}  // namespace

OverheadVector oracle_overhead(const PartSequences& seqs, const ApplicationModel& app, const KnowledgeBase& kb) {
  OverheadVector total;
  for (const auto& [part, seq] : seqs) {
    const auto* p = app.find_part(part);
    for (const auto& id : seq) {
      const auto* pi = kb.find_instance(id);
      OverheadVector one;
      for (std::size_t k = 0; k < kOverheadCount; ++k) {
        double v = 0.0;
        for (std::size_t m = 0; m < kMetricCount; ++m) v += pi->overhead[k][m] * p->metrics.values[m];
        one.values[k] = v;
      }
      for (std::size_t k = 0; k < kOverheadCount; ++k) total.values[k] += one.values[k];
    }
  }
  return total;
}

std::vector<PartSequences> exhaustive_candidates(const MitigationContext& ctx, const OverheadVector& budgets) {
  const auto& kb = ctx.kb();
  auto suitable = oracle_suitable(ctx.session(), ctx.paths());

  // Groups of parts sharing one sequence.
  std::vector<std::pair<std::vector<std::string>, std::vector<std::string>>> groups;
  std::set<std::string> grouped;
  for (const auto& set : kb.precedence.correlation_sets) {
    std::set<std::string> alphabet;
    for (const auto& part : set)
      if (auto it = suitable.find(part); it != suitable.end()) alphabet.insert(it->second.begin(), it->second.end());
    if (alphabet.empty()) continue;
    groups.push_back({set, {alphabet.begin(), alphabet.end()}});
    grouped.insert(set.begin(), set.end());
  }
  for (const auto& [part, ids] : suitable)
    if (!grouped.contains(part)) groups.push_back({{part}, ids});

  std::vector<std::vector<std::vector<std::string>>> words;
  for (const auto& g : groups) {
    std::vector<std::vector<std::string>> ok;
    for (auto& w : all_words(g.second, ctx.lmax()))
      if (admissible_word(w, kb)) ok.push_back(std::move(w));
    words.push_back(std::move(ok));
  }

  std::vector<PartSequences> out;
  std::vector<std::size_t> pick(groups.size(), 0);
  while (true) {
    PartSequences s;
    for (std::size_t g = 0; g < groups.size(); ++g)
      if (!words[g][pick[g]].empty())
        for (const auto& part : groups[g].first) s[part] = words[g][pick[g]];
    if (oracle_overhead(s, ctx.app(), kb).within(budgets)) out.push_back(std::move(s));
    std::size_t g = 0;
    for (; g < groups.size(); ++g) {
      if (++pick[g] < words[g].size()) break;
      pick[g] = 0;
    }
    if (g == groups.size()) break;
  }
  return out;
}

double oracle_penalty(const PartSequences& seqs, const KnowledgeBase& kb) {
  double penalty = 1.0;
  for (const auto& [part, seq] : seqs) {
    double own = 1.0;
    for (std::size_t i = 0; i + 1 < seq.size(); ++i)
      if (auto it = kb.precedence.discouraged.find({seq[i], seq[i + 1]}); it != kb.precedence.discouraged.end())
        own *= it->second;
    penalty *= own;
  }
  return penalty;
}

double oracle_resilience(const AttackPath& path, const PartSequences& seqs, const KnowledgeBase& kb) {
  std::set<std::string> protections;
  for (const auto& step : path.steps)
    if (auto it = seqs.find(step.target); it != seqs.end())
      for (const auto& id : it->second) protections.insert(kb.find_instance(id)->protection);
  if (protections.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& p : protections) sum += kb.find_protection(p)->resilience;
  return sum / double(protections.size());
}

double oracle_value_at(const MitigationContext& ctx, const PartSequences& seqs, std::span<const int> effort) {
  const auto& paths = ctx.paths();
  const auto& vanilla = ctx.vanilla_path_risks();
  std::vector<double> risk(paths.size());
  for (std::size_t p = 0; p < paths.size(); ++p) {
    const double rs = ctx.evaluate_path(p, seqs).index;
    if (effort[p] == 0) {
      risk[p] = rs;
    } else {
      const double rho = oracle_resilience(paths[p], seqs, ctx.kb());
      risk[p] = vanilla[p] - (vanilla[p] - rs) * std::pow(rho, effort[p]);
    }
  }
  double sum = 0.0;
  for (const auto& a : ctx.app().assets) {
    double survive0 = 1.0, survive = 1.0;
    for (std::size_t p = 0; p < paths.size(); ++p)
      if (paths[p].asset == a.part) {
        survive0 *= 1.0 - vanilla[p];
        survive *= 1.0 - risk[p];
      }
    sum += a.weight * ((1.0 - survive0) - (1.0 - survive));
  }
  return oracle_penalty(seqs, ctx.kb()) * sum;
}

double exhaustive_game_value(const MitigationContext& ctx, const PartSequences& seqs, int effort) {
  const std::size_t n = ctx.paths().size();
  std::vector<int> e(n, 0);
  if (n == 0 || effort == 0) return oracle_value_at(ctx, seqs, e);
  double best = std::numeric_limits<double>::infinity();
  // Every composition of `effort` into n parts.
  std::function<void(std::size_t, int)> place = [&](std::size_t p, int left) {
    if (p + 1 == n) {
      e[p] = left;
      best = std::min(best, oracle_value_at(ctx, seqs, e));
      return;
    }
    for (int k = 0; k <= left; ++k) {
      e[p] = k;
      place(p + 1, left - k);
    }
  };
  place(0, effort);
  return best;
}

std::vector<OracleRanked> exhaustive_ranking(const MitigationContext& ctx, const OverheadVector& budgets, int effort) {
  std::vector<OracleRanked> out;
  for (auto& s : exhaustive_candidates(ctx, budgets)) {
    OracleRanked r;
    r.signature = signature_of(s);
    r.value = exhaustive_game_value(ctx, s, effort);
    r.overhead_total = oracle_overhead(s, ctx.app(), ctx.kb()).total();
    r.seqs = std::move(s);
    out.push_back(std::move(r));
  }
  std::sort(out.begin(), out.end(), [](const OracleRanked& a, const OracleRanked& b) {
    if (a.value != b.value) return a.value > b.value;
    if (a.overhead_total != b.overhead_total) return a.overhead_total < b.overhead_total;
    return a.signature < b.signature;
  });
  return out;
}

// -----------------------------------------------------------------------------

bool oracle_feasible(const BinaryProgram& p, std::span<const std::uint8_t> x) {
  for (const auto& row : p.rows) {
    double lhs = 0.0;
    for (const auto& [v, a] : row.terms)
      if (x[v]) lhs += a;
    if (lhs > row.bound + 1e-9 * std::max(1.0, std::abs(row.bound))) return false;
  }
  return true;
}

ExhaustiveBinary exhaustive_binary(const BinaryProgram& p, std::span<const std::uint8_t> prefix) {
  const std::size_t n = p.variables();
  const std::size_t free = n - prefix.size();
  ExhaustiveBinary best;
  std::vector<std::uint8_t> x(n, 0);
  std::copy(prefix.begin(), prefix.end(), x.begin());
  for (std::uint64_t mask = 0; mask < (std::uint64_t(1) << free); ++mask) {
    for (std::size_t i = 0; i < free; ++i) x[prefix.size() + i] = std::uint8_t((mask >> i) & 1u);
    if (!oracle_feasible(p, x)) continue;
    double v = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      if (x[i]) v += p.objective[i];
    if (!best.feasible || v > best.value) {
      best.feasible = true;
      best.value = v;
      best.x = x;
    }
  }
  return best;
}

}  // namespace esp::testing
