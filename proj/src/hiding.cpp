#include "esp/hiding.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

namespace esp {

std::string_view to_string(HidingKind k) {
  switch (k) {
    case HidingKind::replication: return "replication";
    case HidingKind::enlargement: return "enlargement";
    case HidingKind::shadowing: return "shadowing";
  }
  return "replication";
}

namespace {

bool is_region(const ApplicationPart& p) { return p.kind == PartKind::function || p.kind == PartKind::code_region; }

int count_of(const std::vector<std::string>& seq, const std::string& pi) {
  return int(std::count(seq.begin(), seq.end(), pi));
}

bool protection_on(const KnowledgeBase& kb, const std::vector<std::string>& seq, const std::string& protection) {
  return std::any_of(seq.begin(), seq.end(),
                     [&](const std::string& id) { return kb.find_instance(id)->protection == protection; });
}

bool forbidden_after(const KnowledgeBase& kb, const std::vector<std::string>& seq, const std::string& pi) {
  return std::any_of(seq.begin(), seq.end(),
                     [&](const std::string& earlier) { return kb.precedence.is_forbidden(earlier, pi); });
}

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

double region_similarity(const ApplicationModel& app, const std::vector<std::string>& protected_assets,
                         const std::string& region) {
  MetricVector max;
  for (const auto& p : app.parts)
    for (std::size_t m = 0; m < kMetricCount; ++m) max.values[m] = std::max(max.values[m], p.metrics.values[m]);
  auto normalized = [&](const MetricVector& v) {
    MetricVector out;
    for (std::size_t m = 0; m < kMetricCount; ++m) out.values[m] = max.values[m] > 0.0 ? v.values[m] / max.values[m] : 0.0;
    return out;
  };
  if (protected_assets.empty()) return 0.0;
  MetricVector mean;
  for (const auto& id : protected_assets) {
    auto n = normalized(app.find_part(id)->metrics);
    for (std::size_t m = 0; m < kMetricCount; ++m) mean.values[m] += n.values[m];
  }
  for (double& v : mean.values) v /= double(protected_assets.size());
  auto r = normalized(app.find_part(region)->metrics);
  double dist = 0.0;
  for (std::size_t m = 0; m < kMetricCount; ++m) dist += std::abs(r.values[m] - mean.values[m]);
  return 1.0 / (1.0 + dist);
}

HidingModel build_hiding_model(const MitigationContext& ctx, const Solution& base, const OverheadVector& budgets,
                               int gamma) {
  if (gamma < 1) throw Error(Error::Kind::range, "gamma must be >= 1");
  const auto& kb = ctx.kb();
  const auto& app = ctx.app();
  const auto& hp = kb.hiding;

  HidingModel model;
  model.base = base;
  model.gamma = gamma;
  for (std::size_t k = 0; k < kOverheadCount; ++k) {
    double r = budgets.values[k] - base.overhead.values[k];
    if (r < -1e-9 * std::max(1.0, std::abs(budgets.values[k])))
      throw Error(Error::Kind::constraint, "base solution exceeds the " + std::string(to_string(OverheadKind(k))) +
                                               " budget; hiding is infeasible before it starts");
    model.residual.values[k] = std::max(0.0, r);
  }

  const PartSequences seqs = base.sequences();
  std::vector<std::string> protected_regions;  // asset regions carrying PIs
  std::vector<std::string> protected_assets;
  for (const auto& [part, seq] : seqs) {
    if (seq.empty() || !app.find_asset(part)) continue;
    protected_assets.push_back(part);
    if (is_region(*app.find_part(part))) protected_regions.push_back(part);
  }
  std::set<std::string> base_pis;
  for (const auto& a : base.applied) base_pis.insert(a.pi);

  auto& prog = model.program;
  auto add = [&](HidingVar v, double value, const std::string& label) {
    std::size_t j = prog.add_variable(label, value);
    model.vars.push_back(std::move(v));
    return j;
  };
  auto seq_on = [&](const std::string& part) -> const std::vector<std::string>& {
    static const std::vector<std::string> empty;
    auto it = seqs.find(part);
    return it == seqs.end() ? empty : it->second;
  };

  // (pi, region) -> variable indices that deploy pi on region, for Gamma rows.
  std::map<std::pair<std::string, std::string>, std::vector<std::size_t>> deployments;
  std::map<std::pair<std::string, std::string>, std::size_t> first_replica;

  // Replication on non-asset regions.
  for (const auto& part : app.parts) {
    if (!is_region(part) || app.find_asset(part.id) || protected_assets.empty()) continue;
    const auto& existing = seq_on(part.id);
    const double sim = region_similarity(app, protected_assets, part.id);
    for (const auto& pi_id : base_pis) {
      const auto* pi = kb.find_instance(pi_id);
      const auto& prot = kb.protection_of(*pi);
      if (forbidden_after(kb, existing, pi_id)) continue;
      int room = gamma - count_of(existing, pi_id);
      if (prot.singleton) room = protection_on(kb, existing, prot.id) ? 0 : std::min(room, 1);
      if (kb.precedence.is_forbidden(pi_id, pi_id)) room = std::min(room, 1);
      const auto overhead = pi_overhead(*pi, part.metrics);
      std::size_t previous = 0;
      for (int k = 1; k <= room; ++k) {
        HidingVar v{HidingKind::replication, pi_id, part.id, "", k, overhead};
        std::size_t j = add(v, hp.beta_replication * prot.fingerprint * sim,
                            "x_" + pi_id + "_" + part.id + "_" + std::to_string(k));
        deployments[{pi_id, part.id}].push_back(j);
        if (k == 1) first_replica[{pi_id, part.id}] = j;
        else prog.add_row("sym_" + pi_id + "_" + part.id + "_" + std::to_string(k), {{j, 1.0}, {previous, -1.0}}, 0.0);
        previous = j;
      }
    }
  }

  // Enlargement from protected asset regions to adjacent non-asset regions.
  for (const auto& r : protected_regions) {
    const auto& seq = seq_on(r);
    const auto* top = kb.find_instance(seq.back());
    const double fp = kb.protection_of(*top).fingerprint;
    std::set<std::string> neighbours;
    for (const auto& [a, b] : app.adjacency) {
      if (a == r) neighbours.insert(b);
      if (b == r) neighbours.insert(a);
    }
    for (const auto& n : neighbours) {
      const auto* part = app.find_part(n);
      if (!part || !is_region(*part) || app.find_asset(n)) continue;
      HidingVar v{HidingKind::enlargement, top->id, r, n, 0, pi_overhead(*top, part->metrics)};
      std::size_t j = add(v, hp.beta_enlargement * fp * part->metrics[Metric::sloc], "y_" + r + "_" + n);
      deployments[{top->id, n}].push_back(j);
    }
  }

  // Shadowing: extra PIs layered on protected asset regions.
  std::map<std::string, std::vector<std::size_t>> shadows_on;
  for (const auto& r : protected_regions) {
    const auto& seq = seq_on(r);
    const int room = ctx.lmax() - int(seq.size());
    if (room <= 0) continue;
    const double fp_base = kb.protection_of(*kb.find_instance(seq.front())).fingerprint;
    const auto* part = app.find_part(r);
    for (const auto& pi : kb.instances) {
      const auto& prot = kb.protection_of(pi);
      if (count_of(seq, pi.id) + 1 > gamma) continue;
      if (forbidden_after(kb, seq, pi.id)) continue;
      if (prot.singleton && protection_on(kb, seq, prot.id)) continue;
      HidingVar v{HidingKind::shadowing, pi.id, r, "", 0, pi_overhead(pi, part->metrics)};
      std::size_t j = add(v, hp.beta_shadowing * fp_base * (1.0 - prot.fingerprint), "z_" + pi.id + "_" + r);
      shadows_on[r].push_back(j);
    }
    if (int(shadows_on[r].size()) > room) {
      std::vector<std::pair<std::size_t, double>> terms;
      for (auto j : shadows_on[r]) terms.emplace_back(j, 1.0);
      prog.add_row("layers_" + r, std::move(terms), double(room));
    }
  }

  // Budget rows.
  for (std::size_t k = 0; k < kOverheadCount; ++k) {
    std::vector<std::pair<std::size_t, double>> terms;
    for (std::size_t j = 0; j < model.vars.size(); ++j)
      if (model.vars[j].overhead.values[k] != 0.0) terms.emplace_back(j, model.vars[j].overhead.values[k]);
    prog.add_row("budget_" + std::string(to_string(OverheadKind(k))), std::move(terms), model.residual.values[k]);
  }

  // Gamma rows where replication and enlargement meet on the same region.
  for (const auto& [key, js] : deployments) {
    int existing = count_of(seq_on(key.second), key.first);
    bool has_enlargement = std::any_of(js.begin(), js.end(), [&](std::size_t j) {
      return model.vars[j].kind == HidingKind::enlargement;
    });
    if (!has_enlargement || int(js.size()) + existing <= gamma) continue;
    std::vector<std::pair<std::size_t, double>> terms;
    for (auto j : js) terms.emplace_back(j, 1.0);
    prog.add_row("gamma_" + key.first + "_" + key.second, std::move(terms), double(gamma - existing));
  }

  // Exclusions among PIs added to the same region: forbidden order (by PI id)
  // and a singleton protection used twice.
  auto exclusions = [&](const std::string& region, const std::vector<std::size_t>& js) {
    for (std::size_t a = 0; a < js.size(); ++a)
      for (std::size_t b = a + 1; b < js.size(); ++b) {
        const auto& p = model.vars[js[a]].pi;
        const auto& q = model.vars[js[b]].pi;
        if (p == q) continue;
        const auto& first = std::min(p, q);
        const auto& second = std::max(p, q);
        bool clash = kb.precedence.is_forbidden(first, second);
        const auto& pp = kb.protection_of(*kb.find_instance(p));
        if (pp.singleton && pp.id == kb.find_instance(q)->protection) clash = true;
        if (clash) prog.add_row("excl_" + first + "_" + second + "_" + region, {{js[a], 1.0}, {js[b], 1.0}}, 1.0);
      }
  };
  std::map<std::string, std::vector<std::size_t>> first_replicas_on;
  for (const auto& [key, j] : first_replica) first_replicas_on[key.second].push_back(j);
  for (const auto& [region, js] : first_replicas_on) exclusions(region, js);
  for (const auto& [region, js] : shadows_on) exclusions(region, js);
  return model;
}

Solution translate_hiding(const HidingModel& model, const std::vector<std::uint8_t>& assignment) {
  if (assignment.size() != model.vars.size())
    throw Error(Error::Kind::internal, "assignment does not match the hiding model");
  Solution out = model.base;
  std::vector<const HidingVar*> reps, enls, shas;
  for (std::size_t j = 0; j < model.vars.size(); ++j) {
    if (!assignment[j]) continue;
    const auto& v = model.vars[j];
    out.overhead += v.overhead;
    (v.kind == HidingKind::replication ? reps : v.kind == HidingKind::enlargement ? enls : shas).push_back(&v);
  }
  std::sort(reps.begin(), reps.end(), [](const HidingVar* a, const HidingVar* b) {
    return std::tie(a->region, a->pi, a->replica) < std::tie(b->region, b->pi, b->replica);
  });
  std::sort(enls.begin(), enls.end(), [](const HidingVar* a, const HidingVar* b) {
    return std::tie(a->region, a->target) < std::tie(b->region, b->target);
  });
  std::sort(shas.begin(), shas.end(),
            [](const HidingVar* a, const HidingVar* b) { return std::tie(a->region, a->pi) < std::tie(b->region, b->pi); });

  std::map<std::string, int> layers;
  for (const auto& a : out.applied) layers[a.part] = std::max(layers[a.part], a.layer);
  for (const auto* v : reps) out.applied.push_back(AppliedPI{v->pi, v->region, ++layers[v->region]});
  for (const auto* v : enls) out.enlargements.push_back(Enlargement{v->pi, v->region, v->target});
  for (const auto* v : shas) out.applied.push_back(AppliedPI{v->pi, v->region, ++layers[v->region]});
  return out;
}

bool gamma_respected(const Solution& base, const Solution& hidden, int gamma) {
  std::map<std::pair<std::string, std::string>, int> before, after;
  for (const auto& a : base.applied) ++before[{a.pi, a.part}];
  for (const auto& e : base.enlargements) ++before[{e.pi, e.to}];
  for (const auto& a : hidden.applied) ++after[{a.pi, a.part}];
  for (const auto& e : hidden.enlargements) ++after[{e.pi, e.to}];
  for (const auto& [key, n] : after)
    if (n != before[key] && n > gamma) return false;
  return true;
}

namespace {

void check_precedence(const Solution& s, const KnowledgeBase& kb) {
  for (const auto& [part, seq] : s.sequences())
    for (std::size_t i = 0; i < seq.size(); ++i)
      for (std::size_t j = i + 1; j < seq.size(); ++j)
        if (kb.precedence.is_forbidden(seq[i], seq[j]))
          throw Error(Error::Kind::internal,
                      "hiding introduced forbidden pair " + seq[i] + " before " + seq[j] + " on " + part);
}

}  // namespace

HidingResult hide(const MitigationContext& ctx, const Solution& base, const OverheadVector& budgets, int gamma,
                  long node_limit) {
  return solve_hiding(ctx, build_hiding_model(ctx, base, budgets, gamma), node_limit);
}

HidingResult solve_hiding(const MitigationContext& ctx, const HidingModel& model, long node_limit) {
  HidingResult r;
  auto sol = solve_binary(model.program, node_limit);
  r.assignment = sol.x;
  r.confusion = sol.value;
  r.suboptimal = sol.suboptimal;
  r.nodes = sol.nodes;
  r.hidden = translate_hiding(model, sol.x);
  check_precedence(r.hidden, ctx.kb());
  const auto seqs = r.hidden.sequences();
  r.hidden.predicted.clear();
  for (const auto& [part, seq] : seqs) {
    std::vector<const ProtectionInstance*> pis;
    for (const auto& id : seq) pis.push_back(ctx.kb().find_instance(id));
    // Replicas on non-asset regions may stack beyond the predictor's range.
    if (int(pis.size()) <= ctx.lmax())
      r.hidden.predicted[part] = predict_metrics(ctx.app().find_part(part)->metrics, pis, ctx.lmax());
  }
  r.hidden.discouraged_penalty = ctx.discouraged_penalty(seqs);
  r.hidden.protection_index = ctx.protection_index(seqs);
  return r;
}

std::string hiding_model_lp(const HidingModel& model) {
  const auto& prog = model.program;
  auto sanitize = [](std::string s) {
    for (char& c : s)
      if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_') c = '_';
    return s;
  };
  auto var = [&](std::size_t j) { return sanitize(prog.names[j]); };
  std::ostringstream lp;
  lp << "\\ asset hiding model, gamma " << model.gamma << "\n";
  lp << "Maximize\n obj:";
  bool any = false;
  for (std::size_t j = 0; j < prog.variables(); ++j) {
    if (prog.objective[j] == 0.0) continue;
    lp << " + " << format_number(prog.objective[j]) << " " << var(j);
    any = true;
  }
  if (!any) lp << " 0";
  lp << "\nSubject To\n";
  for (const auto& row : prog.rows) {
    lp << " " << sanitize(row.name) << ":";
    if (row.terms.empty()) lp << " 0";
    for (const auto& [j, a] : row.terms) lp << (a < 0 ? " - " : " + ") << format_number(std::abs(a)) << " " << var(j);
    lp << " <= " << format_number(row.bound) << "\n";
  }
  lp << "Binary\n";
  for (std::size_t j = 0; j < prog.variables(); ++j) lp << " " << var(j) << "\n";
  lp << "End\n";
  return lp.str();
}

json hiding_result_to_json(const HidingModel& model, const HidingResult& result) {
  json vars = json::array();
  for (std::size_t j = 0; j < model.vars.size(); ++j) {
    const auto& v = model.vars[j];
    json jv{{"name", model.program.names[j]},
            {"kind", std::string(to_string(v.kind))},
            {"pi", v.pi},
            {"region", v.region},
            {"coefficient", model.program.objective[j]},
            {"selected", bool(result.assignment[j])}};
    if (v.kind == HidingKind::enlargement) jv["target"] = v.target;
    if (v.kind == HidingKind::replication) jv["replica"] = v.replica;
    vars.push_back(std::move(jv));
  }
  return json{{"gamma", model.gamma},
              {"confusion_index", result.confusion},
              {"suboptimal", result.suboptimal},
              {"nodes", result.nodes},
              {"residual_budgets", overhead_to_json(model.residual)},
              {"variables", vars},
              {"base", solution_to_json(model.base)},
              {"solution", solution_to_json(result.hidden)}};
}

}  // namespace esp
