#include "esp/attack.hpp"

#include <algorithm>
#include <exception>
#include <set>

namespace esp {

namespace {

using Proof = std::vector<StepInstance>;
using Binding = std::map<std::string, std::string>;

bool unify_head(const Term& head, const Term& goal, Binding& binding) {
  if (head.predicate != goal.predicate || head.args.size() != goal.args.size()) return false;
  for (std::size_t i = 0; i < head.args.size(); ++i) {
    const auto& h = head.args[i];
    if (Term::is_variable(h)) {
      auto [it, fresh] = binding.emplace(h, goal.args[i]);
      if (!fresh && it->second != goal.args[i]) return false;
    } else if (h != goal.args[i]) {
      return false;
    }
  }
  return true;
}

Term substitute(const Term& t, const Binding& b) {
  Term out{t.predicate, {}};
  for (const auto& a : t.args) {
    auto it = b.find(a);
    out.args.push_back(it == b.end() ? a : it->second);
  }
  return out;
}

class Prover {
 public:
  Prover(const KnowledgeBase& kb, std::vector<std::string> domain) : kb_(kb), domain_(std::move(domain)) {}

  std::vector<Proof> prove(const Term& goal, int budget, std::vector<std::string>& ancestors) const {
    std::vector<Proof> results;
    if (budget <= 0) return results;
    for (const auto& rule : kb_.rules) {
      if (std::find(ancestors.begin(), ancestors.end(), rule.id) != ancestors.end()) continue;
      Binding head_binding;
      if (!unify_head(rule.head, goal, head_binding)) continue;
      const int self = rule.derived ? 0 : 1;
      if (self > budget) continue;

      std::vector<std::string> free_vars;
      for (const auto& p : rule.premises)
        for (const auto& a : p.args)
          if (Term::is_variable(a) && !head_binding.contains(a) &&
              std::find(free_vars.begin(), free_vars.end(), a) == free_vars.end())
            free_vars.push_back(a);
      if (!free_vars.empty() && domain_.empty()) continue;

      ancestors.push_back(rule.id);
      std::vector<std::size_t> choice(free_vars.size(), 0);
      while (true) {
        Binding binding = head_binding;
        for (std::size_t v = 0; v < free_vars.size(); ++v) binding[free_vars[v]] = domain_[choice[v]];
        expand(rule, binding, budget - self, ancestors, results);

        std::size_t v = 0;
        for (; v < choice.size(); ++v) {
          if (++choice[v] < domain_.size()) break;
          choice[v] = 0;
        }
        if (v == choice.size()) break;
      }
      ancestors.pop_back();
    }
    return results;
  }

 private:
  void expand(const AttackStepRule& rule, const Binding& binding, int remaining,
              std::vector<std::string>& ancestors, std::vector<Proof>& results) const {
    const std::size_t n = rule.premises.size();
    std::vector<Proof> combos{Proof{}};
    for (std::size_t i = 0; i < n && !combos.empty(); ++i) {
      // Each later premise needs at least one step.
      const int later = int(n - i - 1);
      std::size_t shortest = combos.front().size();
      for (const auto& c : combos) shortest = std::min(shortest, c.size());
      auto sub = prove(substitute(rule.premises[i], binding), remaining - later - int(shortest), ancestors);
      std::vector<Proof> next;
      for (const auto& c : combos)
        for (const auto& s : sub)
          if (int(c.size() + s.size()) + later <= remaining) {
            Proof joined = c;
            joined.insert(joined.end(), s.begin(), s.end());
            next.push_back(std::move(joined));
          }
      combos = std::move(next);
    }
    for (auto& c : combos) {
      if (!rule.derived) {
        StepInstance step{rule.id, {}, {}};
        for (const auto& [var, value] : binding)
          if (rule_mentions(rule, var)) step.binding.emplace(var, value);
        Term head = substitute(rule.head, binding);
        if (!head.args.empty()) step.target = head.args.front();
        c.push_back(std::move(step));
      }
      if (!c.empty()) results.push_back(std::move(c));
    }
  }

  static bool rule_mentions(const AttackStepRule& rule, const std::string& var) {
    auto in = [&](const Term& t) { return std::find(t.args.begin(), t.args.end(), var) != t.args.end(); };
    return in(rule.head) || std::any_of(rule.premises.begin(), rule.premises.end(), in);
  }

  const KnowledgeBase& kb_;
  std::vector<std::string> domain_;
};

}  // namespace

std::string StepInstance::signature() const {
  std::string s = rule + "(";
  bool first = true;
  for (const auto& [k, v] : binding) {
    if (!first) s += ",";
    first = false;
    s += k + "=" + v;
  }
  return s + ")";
}

std::string AttackPath::signature() const {
  std::string s;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    if (i) s += " > ";
    s += steps[i].signature();
  }
  return s;
}

std::vector<std::string> AttackPath::rule_sequence() const {
  std::vector<std::string> out;
  for (const auto& s : steps) out.push_back(s.rule);
  return out;
}

std::vector<Term> breach_goals(Requirement r, const std::string& asset) {
  return {Term{"breached", {std::string(to_string(r)), asset}},
          Term{"breach_" + std::string(to_string(r)), {asset}}};
}

std::vector<AttackPath> infer_paths(const Session& session, InferenceLimits limits) {
  const auto& kb = session.kb();
  const auto& app = session.app();

  std::vector<std::string> domain;
  for (const auto& p : app.parts)
    if (app.find_asset(p.id)) domain.push_back(p.id);

  struct Goal {
    const Asset* asset;
    Requirement requirement;
  };
  std::vector<Goal> goals;
  for (const auto& a : app.assets)
    for (auto r : a.requirements.list()) goals.push_back({&a, r});

  std::vector<std::vector<AttackPath>> per_goal(goals.size());
  std::vector<std::exception_ptr> errors(goals.size());
  Prover prover(kb, domain);
  const long n = long(goals.size());
#pragma omp parallel for schedule(dynamic)
  for (long gi = 0; gi < n; ++gi) {
    try {
      const auto& g = goals[std::size_t(gi)];
      std::set<Proof> unique;
      for (const auto& goal : breach_goals(g.requirement, g.asset->part)) {
        std::vector<std::string> ancestors;
        for (auto& proof : prover.prove(goal, limits.max_depth, ancestors)) unique.insert(std::move(proof));
      }
      auto& out = per_goal[std::size_t(gi)];
      for (const auto& proof : unique) {
        AttackPath path{g.asset->part, g.requirement, proof, int(proof.size())};
        for (auto& step : path.steps)
          if (step.target.empty() || !app.find_part(step.target)) step.target = g.asset->part;
        out.push_back(std::move(path));
      }
    } catch (...) {
      errors[std::size_t(gi)] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  std::vector<AttackPath> all;
  for (auto& v : per_goal)
    for (auto& p : v) all.push_back(std::move(p));
  std::sort(all.begin(), all.end(), [](const AttackPath& a, const AttackPath& b) {
    if (a.asset != b.asset) return a.asset < b.asset;
    if (a.requirement != b.requirement) return a.requirement < b.requirement;
    auto ra = a.rule_sequence(), rb = b.rule_sequence();
    if (ra != rb) return ra < rb;
    return a.steps < b.steps;
  });

  std::vector<AttackPath> out;
  std::string current;
  int count = 0;
  for (auto& p : all) {
    if (p.asset != current) {
      current = p.asset;
      count = 0;
    }
    if (count++ < limits.max_paths_per_asset) out.push_back(std::move(p));
  }
  return out;
}

std::vector<AttackPath> gate_by_attacker(const std::vector<AttackPath>& paths, const KnowledgeBase& kb,
                                         const AttackerModel& attacker) {
  const int limit = capability_rank(attacker.expertise) + 1;
  std::vector<AttackPath> out;
  for (const auto& p : paths) {
    bool ok = std::all_of(p.steps.begin(), p.steps.end(), [&](const StepInstance& s) {
      const auto* rule = kb.find_rule(s.rule);
      return rule && rule->attributes[Attribute::required_skill] <= limit;
    });
    if (ok) out.push_back(p);
  }
  return out;
}

json paths_to_json(const std::vector<AttackPath>& paths) {
  json out = json::array();
  for (const auto& p : paths) {
    json steps = json::array();
    for (const auto& s : p.steps)
      steps.push_back(json{{"rule", s.rule}, {"binding", s.binding}, {"target", s.target}});
    out.push_back(json{{"asset", p.asset},
                       {"requirement", std::string(to_string(p.requirement))},
                       {"depth", p.depth},
                       {"signature", p.signature()},
                       {"steps", steps}});
  }
  return out;
}

std::vector<AttackPath> paths_from_json(const json& j) {
  std::vector<AttackPath> out;
  for (const auto& jp : j) {
    AttackPath p;
    p.asset = jp.at("asset").get<std::string>();
    auto r = parse_requirement(jp.at("requirement").get<std::string>());
    if (!r) throw Error(Error::Kind::parse, "attack path with unknown requirement");
    p.requirement = *r;
    p.depth = jp.at("depth").get<int>();
    for (const auto& js : jp.at("steps"))
      p.steps.push_back(StepInstance{js.at("rule").get<std::string>(),
                                     js.at("binding").get<std::map<std::string, std::string>>(),
                                     js.at("target").get<std::string>()});
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace esp
