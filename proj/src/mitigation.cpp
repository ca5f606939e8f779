#include "esp/mitigation.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "esp/game.hpp"

namespace esp {

PartSequences Solution::sequences() const {
  PartSequences out;
  for (const auto& a : applied) out[a.part].push_back(a.pi);
  return out;
}

std::string Solution::signature() const { return signature_of(sequences()); }

Solution Solution::from_sequences(const PartSequences& seqs) {
  Solution s;
  for (const auto& [part, seq] : seqs)
    for (std::size_t i = 0; i < seq.size(); ++i) s.applied.push_back(AppliedPI{seq[i], part, int(i + 1)});
  return s;
}

std::string signature_of(const PartSequences& seqs) {
  std::string out;
  for (const auto& [part, seq] : seqs) {
    if (seq.empty()) continue;
    if (!out.empty()) out += ';';
    out += part + "=[";
    for (std::size_t i = 0; i < seq.size(); ++i) {
      if (i) out += ',';
      out += seq[i];
    }
    out += ']';
  }
  return out;
}

SuitableMap suitable_pis(const Session& session, const std::vector<AttackPath>& paths) {
  const auto& kb = session.kb();
  const auto& app = session.app();
  std::map<std::string, std::set<std::string>> found;
  for (const auto& path : paths) {
    for (const auto& step : path.steps) {
      const auto* rule = kb.find_rule(step.rule);
      if (!rule) continue;
      const Asset* asset = app.find_asset(step.target);
      if (!asset) asset = app.find_asset(path.asset);
      if (!asset) continue;
      for (const auto& pi : kb.instances) {
        if (pi.delta_for(*rule).is_zero()) continue;
        if (!kb.protection_of(pi).requirements.intersects(asset->requirements)) continue;
        found[step.target].insert(pi.id);
      }
    }
  }
  SuitableMap out;
  for (auto& [part, ids] : found) out[part].assign(ids.begin(), ids.end());
  return out;
}

MetricVector predict_metrics(const MetricVector& part_metrics, std::span<const ProtectionInstance* const> sequence,
                             int lmax) {
  if (int(sequence.size()) > lmax)
    throw Error(Error::Kind::constraint, "sequence of " + std::to_string(sequence.size()) +
                                             " PIs exceeds the predictor limit of " + std::to_string(lmax));
  MetricVector m = part_metrics;
  for (const auto* pi : sequence) {
    m = pi->transform.apply(m);
    for (double& v : m.values) v = std::max(0.0, v);
  }
  return m;
}

OverheadVector pi_overhead(const ProtectionInstance& pi, const MetricVector& vanilla) {
  OverheadVector out;
  for (std::size_t k = 0; k < kOverheadCount; ++k) {
    double s = 0.0;
    for (std::size_t m = 0; m < kMetricCount; ++m) s += pi.overhead[k][m] * vanilla.values[m];
    out.values[k] = s;
  }
  return out;
}

OverheadVector estimate_overhead(const PartSequences& seqs, const ApplicationModel& app, const KnowledgeBase& kb) {
  OverheadVector total;
  for (const auto& [part_id, seq] : seqs) {
    const auto* part = app.find_part(part_id);
    if (!part) throw Error(Error::Kind::reference, "solution names unknown part '" + part_id + "'");
    for (const auto& id : seq) {
      const auto* pi = kb.find_instance(id);
      if (!pi) throw Error(Error::Kind::reference, "solution names unknown PI '" + id + "'");
      total += pi_overhead(*pi, part->metrics);
    }
  }
  return total;
}

double sequence_penalty(std::span<const std::string> seq, const PrecedenceRules& precedence) {
  double penalty = 1.0;
  for (std::size_t i = 1; i < seq.size(); ++i) {
    auto it = precedence.discouraged.find({seq[i - 1], seq[i]});
    if (it != precedence.discouraged.end()) penalty *= it->second;
  }
  return penalty;
}

double protection_index_from(std::span<const double> path_risks, const IndexLayout& layout, double penalty) {
  double sum = 0.0;
  std::vector<double> risks;
  for (const auto& a : layout.assets) {
    risks.clear();
    for (auto p : a.paths) risks.push_back(path_risks[p]);
    sum += a.weight * (a.vanilla_risk - noisy_or(risks));
  }
  return penalty * sum;
}

// -----------------------------------------------------------------------------

MitigationContext::MitigationContext(const Session& session, std::vector<AttackPath> paths, int lmax,
                                     PathAggregator aggregator)
    : session_(session), paths_(std::move(paths)), lmax_(lmax), aggregator_(aggregator) {
  const PartSequences none;
  for (std::size_t i = 0; i < paths_.size(); ++i) vanilla_path_risk_.push_back(evaluate_path(i, none).index);
  for (const auto& a : app().assets) {
    IndexLayout::AssetTerm term;
    term.weight = a.weight;
    std::vector<double> risks;
    for (std::size_t i = 0; i < paths_.size(); ++i)
      if (paths_[i].asset == a.part) {
        term.paths.push_back(i);
        risks.push_back(vanilla_path_risk_[i]);
      }
    term.vanilla_risk = noisy_or(risks);
    layout_.assets.push_back(std::move(term));
  }
}

std::vector<const ProtectionInstance*> MitigationContext::resolve(std::span<const std::string> seq) const {
  std::vector<const ProtectionInstance*> out;
  for (const auto& id : seq) {
    const auto* pi = kb().find_instance(id);
    if (!pi) throw Error(Error::Kind::reference, "solution names unknown PI '" + id + "'");
    out.push_back(pi);
  }
  return out;
}

const std::vector<std::string>* MitigationContext::sequence_on(const PartSequences& seqs,
                                                               const std::string& part) const {
  auto it = seqs.find(part);
  return it == seqs.end() ? nullptr : &it->second;
}

AttributeVector MitigationContext::step_attributes(const StepInstance& step, std::span<const std::string> seq) const {
  const auto* rule = kb().find_rule(step.rule);
  if (!rule) throw Error(Error::Kind::reference, "attack path names unknown rule '" + step.rule + "'");
  const auto* part = app().find_part(step.target);
  if (!part) throw Error(Error::Kind::reference, "attack step targets unknown part '" + step.target + "'");
  auto applied = resolve(seq);
  auto metrics = predict_metrics(part->metrics, applied, lmax_);
  return modify_attributes(*rule, metrics, kb().thresholds.metric_bands, applied, kb().precedence);
}

double MitigationContext::step_risk(const StepInstance& step, std::span<const std::string> seq) const {
  return step_index(step_attributes(step, seq));
}

PathRisk MitigationContext::evaluate_path(std::size_t path, const PartSequences& seqs) const {
  const auto& p = paths_.at(path);
  PathRisk out;
  for (const auto& step : p.steps) {
    const auto* seq = sequence_on(seqs, step.target);
    auto attrs = seq ? step_attributes(step, *seq) : step_attributes(step, {});
    out.modified.push_back(attrs);
    out.step_indices.push_back(step_index(attrs));
  }
  out.index = path_index(out.step_indices, aggregator_);
  return out;
}

RiskReport MitigationContext::assess(const PartSequences& seqs) const {
  std::vector<PathRisk> per_path;
  for (std::size_t i = 0; i < paths_.size(); ++i) per_path.push_back(evaluate_path(i, seqs));
  return aggregate(app(), paths_, std::move(per_path));
}

double MitigationContext::discouraged_penalty(const PartSequences& seqs) const {
  double penalty = 1.0;
  for (const auto& [part, seq] : seqs) penalty *= sequence_penalty(seq, kb().precedence);
  return penalty;
}

double MitigationContext::protection_index(const PartSequences& seqs) const {
  std::vector<double> risks;
  for (std::size_t i = 0; i < paths_.size(); ++i) risks.push_back(evaluate_path(i, seqs).index);
  return protection_index_from(risks, layout_, discouraged_penalty(seqs));
}

double MitigationContext::path_resilience(std::size_t path, const PartSequences& seqs) const {
  std::set<std::string> protections;
  for (const auto& step : paths_.at(path).steps)
    if (const auto* seq = sequence_on(seqs, step.target))
      for (const auto* pi : resolve(*seq)) protections.insert(pi->protection);
  if (protections.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& id : protections) sum += kb().find_protection(id)->resilience;
  return sum / double(protections.size());
}

Solution MitigationContext::make_solution(const PartSequences& seqs) const {
  Solution s = Solution::from_sequences(seqs);
  for (const auto& [part_id, seq] : seqs) {
    if (seq.empty()) continue;
    const auto* part = app().find_part(part_id);
    if (!part) throw Error(Error::Kind::reference, "solution names unknown part '" + part_id + "'");
    s.predicted[part_id] = predict_metrics(part->metrics, resolve(seq), lmax_);
  }
  s.overhead = estimate_overhead(seqs, app(), kb());
  s.discouraged_penalty = discouraged_penalty(seqs);
  s.protection_index = protection_index(seqs);
  return s;
}

GameInstance MitigationContext::game_instance(const PartSequences& seqs) const {
  GameInstance g;
  g.layout = &layout_;
  g.penalty = discouraged_penalty(seqs);
  g.vanilla = vanilla_path_risk_;
  for (std::size_t i = 0; i < paths_.size(); ++i) {
    g.protected_risk.push_back(evaluate_path(i, seqs).index);
    g.resilience.push_back(path_resilience(i, seqs));
  }
  return g;
}

std::vector<Diagnostic> MitigationContext::check(const PartSequences& seqs, const OverheadVector& budgets) const {
  std::vector<Diagnostic> out;
  auto error = [&](Error::Kind kind, std::string entity, std::string message) {
    out.push_back(Diagnostic{Severity::error, kind, std::move(entity), std::move(message)});
  };
  bool resolvable = true;
  for (const auto& [part, seq] : seqs) {
    if (!app().find_part(part)) {
      error(Error::Kind::reference, part, "unknown part '" + part + "'");
      resolvable = false;
    }
    if (int(seq.size()) > lmax_)
      error(Error::Kind::constraint, part,
            "sequence of " + std::to_string(seq.size()) + " PIs exceeds lmax " + std::to_string(lmax_));
    std::map<std::string, int> singleton_uses;
    for (std::size_t i = 0; i < seq.size(); ++i) {
      const auto* pi = kb().find_instance(seq[i]);
      if (!pi) {
        error(Error::Kind::reference, seq[i], "unknown protection instance '" + seq[i] + "'");
        resolvable = false;
        continue;
      }
      const auto& prot = kb().protection_of(*pi);
      if (prot.singleton && ++singleton_uses[prot.id] == 2)
        error(Error::Kind::constraint, part, "singleton protection '" + prot.id + "' applied more than once");
      for (std::size_t j = i + 1; j < seq.size(); ++j)
        if (kb().precedence.is_forbidden(seq[i], seq[j]))
          error(Error::Kind::constraint, seq[i] + "," + seq[j],
                "forbidden precedence " + seq[i] + " before " + seq[j] + " on " + part);
    }
  }
  static const std::vector<std::string> empty;
  for (const auto& set : kb().precedence.correlation_sets) {
    if (set.empty()) continue;
    const auto* first = sequence_on(seqs, set.front());
    for (std::size_t i = 1; i < set.size(); ++i) {
      const auto* other = sequence_on(seqs, set[i]);
      if ((first ? *first : empty) != (other ? *other : empty))
        error(Error::Kind::constraint, set.front() + "," + set[i],
              "correlated parts " + set.front() + " and " + set[i] + " carry different sequences");
    }
  }
  if (resolvable) {
    auto overhead = estimate_overhead(seqs, app(), kb());
    for (std::size_t k = 0; k < kOverheadCount; ++k)
      if (overhead.values[k] > budgets.values[k]) {
        std::ostringstream msg;
        msg << "overhead " << to_string(OverheadKind(k)) << " " << overhead.values[k] << " exceeds budget "
            << budgets.values[k];
        error(Error::Kind::constraint, std::string(to_string(OverheadKind(k))), msg.str());
      }
  }
  return out;
}

// -----------------------------------------------------------------------------

json solution_to_json(const Solution& s) {
  json applied = json::array();
  for (const auto& a : s.applied) applied.push_back(json{{"pi", a.pi}, {"part", a.part}, {"layer", a.layer}});
  json enl = json::array();
  for (const auto& e : s.enlargements) enl.push_back(json{{"pi", e.pi}, {"from", e.from}, {"to", e.to}});
  json predicted = json::object();
  for (const auto& [part, m] : s.predicted) predicted[part] = metrics_to_json(m);
  json seqs = json::object();
  for (const auto& [part, seq] : s.sequences()) seqs[part] = seq;
  return json{{"signature", s.signature()},
              {"applied", applied},
              {"sequences", seqs},
              {"enlargements", enl},
              {"predicted_metrics", predicted},
              {"overhead", overhead_to_json(s.overhead)},
              {"protection_index", s.protection_index},
              {"discouraged_penalty", s.discouraged_penalty}};
}

Solution solution_from_json(const json& j) {
  if (!j.is_object()) throw Error(Error::Kind::parse, "solution must be a JSON object");
  Solution s;
  if (j.contains("applied")) {
    std::map<std::string, int> layers;
    for (const auto& a : j.at("applied")) {
      if (!a.is_object() || !a.contains("pi") || !a.contains("part"))
        throw Error(Error::Kind::parse, "applied PI needs 'pi' and 'part'");
      AppliedPI ap{a.at("pi").get<std::string>(), a.at("part").get<std::string>(), 0};
      ap.layer = ++layers[ap.part];
      s.applied.push_back(std::move(ap));
    }
  } else if (j.contains("sequences")) {
    s = Solution::from_sequences(j.at("sequences").get<PartSequences>());
  }
  if (j.contains("enlargements"))
    for (const auto& e : j.at("enlargements"))
      s.enlargements.push_back(
          Enlargement{e.at("pi").get<std::string>(), e.at("from").get<std::string>(), e.at("to").get<std::string>()});
  if (j.contains("overhead")) s.overhead = overhead_from_json(j.at("overhead"));
  if (j.contains("protection_index")) s.protection_index = j.at("protection_index").get<double>();
  if (j.contains("discouraged_penalty")) s.discouraged_penalty = j.at("discouraged_penalty").get<double>();
  return s;
}

}  // namespace esp
