#include "esp/risk.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <set>
#include <sstream>

namespace esp {

std::string_view to_string(PathAggregator a) {
  switch (a) {
    case PathAggregator::product: return "product";
    case PathAggregator::sum: return "sum";
    case PathAggregator::max: return "max";
  }
  return "product";
}

std::optional<PathAggregator> parse_path_aggregator(std::string_view s) {
  if (s == "product") return PathAggregator::product;
  if (s == "sum") return PathAggregator::sum;
  if (s == "max") return PathAggregator::max;
  return std::nullopt;
}

AttributeVector modify_attributes(const AttackStepRule& rule, const MetricVector& target_metrics,
                                  std::span<const MetricBand> bands,
                                  std::span<const ProtectionInstance* const> applied,
                                  const PrecedenceRules& precedence) {
  AttributeDelta total;
  auto add_band = [&](const MetricBand& b) { total[b.attribute] += b.delta_for(target_metrics[b.metric]); };
  for (const auto& b : bands) add_band(b);
  for (const auto& b : rule.metric_modifiers) add_band(b);

  for (const auto* pi : applied) total += pi->delta_for(rule);

  if (!precedence.synergies.empty()) {
    std::set<PiPair> fired;
    for (std::size_t i = 0; i < applied.size(); ++i)
      for (std::size_t j = i + 1; j < applied.size(); ++j) {
        const auto& a = applied[i]->id;
        const auto& b = applied[j]->id;
        if (a == b) continue;
        const auto* extra = precedence.synergy(a, b);
        if (!extra) continue;
        if (applied[i]->delta_for(rule).is_zero() && applied[j]->delta_for(rule).is_zero()) continue;
        if (fired.insert(a < b ? PiPair{a, b} : PiPair{b, a}).second) total += *extra;
      }
  }

  AttributeVector out = rule.attributes;
  for (std::size_t i = 0; i < kAttributeCount; ++i) out.values[i] = std::clamp(out.values[i] + total.values[i], 1, 5);
  return out;
}

double step_index(const AttributeVector& a) {
  const double complexity = (6.0 - a[Attribute::complexity]) / 5.0;
  const double skill = (6.0 - a[Attribute::required_skill]) / 5.0;
  const double availability = a[Attribute::tool_availability] / 5.0;
  const double usability = a[Attribute::tool_usability] / 5.0;
  return std::pow(complexity * skill * availability * usability, 0.25);
}

double path_index(std::span<const double> step_indices, PathAggregator agg) {
  switch (agg) {
    case PathAggregator::product: {
      double p = 1.0;
      for (double x : step_indices) p *= x;
      return p;
    }
    case PathAggregator::sum: {
      double s = 0.0;
      for (double x : step_indices) s += x;
      return std::min(1.0, s);
    }
    case PathAggregator::max: {
      double m = 0.0;
      for (double x : step_indices) m = std::max(m, x);
      return m;
    }
  }
  return 0.0;
}

double noisy_or(std::span<const double> probabilities) {
  double survive = 1.0;
  for (double p : probabilities) survive *= 1.0 - p;
  return 1.0 - survive;
}

RiskReport aggregate(const ApplicationModel& app, const std::vector<AttackPath>& paths,
                     std::vector<PathRisk> per_path) {
  RiskReport report;
  report.paths = std::move(per_path);
  for (const auto& a : app.assets) {
    AssetRisk ar{a.part, a.weight, 0.0, {}};
    std::vector<double> indices;
    for (std::size_t i = 0; i < paths.size(); ++i)
      if (paths[i].asset == a.part) {
        ar.paths.push_back(i);
        indices.push_back(report.paths[i].index);
      }
    ar.risk = noisy_or(indices);
    report.application_risk += a.weight * ar.risk;
    report.assets.push_back(std::move(ar));
  }
  report.ranking.resize(paths.size());
  for (std::size_t i = 0; i < paths.size(); ++i) report.ranking[i] = i;
  std::stable_sort(report.ranking.begin(), report.ranking.end(), [&](std::size_t x, std::size_t y) {
    if (report.paths[x].index != report.paths[y].index) return report.paths[x].index > report.paths[y].index;
    if (paths[x].asset != paths[y].asset) return paths[x].asset < paths[y].asset;
    return paths[x].signature() < paths[y].signature();
  });
  return report;
}

namespace {

json attributes_json(const AttributeVector& a) {
  json out = json::object();
  for (std::size_t i = 0; i < kAttributeCount; ++i) out[std::string(to_string(Attribute(i)))] = a.values[i];
  return out;
}

}  // namespace

json risk_report_to_json(const RiskReport& report, const std::vector<AttackPath>& paths, const KnowledgeBase& kb,
                         const AttackerModel& attacker) {
  json jpaths = json::array();
  for (std::size_t rank = 0; rank < report.ranking.size(); ++rank) {
    std::size_t i = report.ranking[rank];
    const auto& p = paths[i];
    const auto& pr = report.paths[i];
    json steps = json::array();
    for (std::size_t s = 0; s < p.steps.size(); ++s) {
      const auto* rule = kb.find_rule(p.steps[s].rule);
      steps.push_back(json{{"rule", p.steps[s].rule},
                           {"target", p.steps[s].target},
                           {"base", rule ? attributes_json(rule->attributes) : json()},
                           {"modified", attributes_json(pr.modified[s])},
                           {"index", pr.step_indices[s]}});
    }
    jpaths.push_back(json{{"rank", rank + 1},
                          {"path", i},
                          {"asset", p.asset},
                          {"requirement", std::string(to_string(p.requirement))},
                          {"signature", p.signature()},
                          {"index", pr.index},
                          {"steps", steps}});
  }
  json assets = json::array();
  for (const auto& a : report.assets)
    assets.push_back(json{{"asset", a.asset}, {"weight", a.weight}, {"risk", a.risk}, {"paths", a.paths}});
  json jattacker{{"expertise", std::string(to_string(attacker.expertise))},
                 {"rank", capability_rank(attacker.expertise)}};
  if (attacker.effort_budget) jattacker["effort_budget"] = *attacker.effort_budget;
  return json{{"paths", jpaths}, {"assets", assets}, {"application_risk", report.application_risk},
              {"attacker", jattacker}};
}

std::string risk_report_markdown(const RiskReport& report, const std::vector<AttackPath>& paths,
                                 const AttackerModel& attacker) {
  std::ostringstream md;
  md << std::fixed << std::setprecision(4);
  md << "# Risk report\n\n";
  md << "Attacker: " << to_string(attacker.expertise) << " (rank " << capability_rank(attacker.expertise) << ")";
  if (attacker.effort_budget) md << ", effort budget " << *attacker.effort_budget;
  md << "\n\nApplication risk: " << report.application_risk << "\n\n";
  md << "## Assets\n\n| asset | weight | risk | paths |\n|---|---|---|---|\n";
  for (const auto& a : report.assets)
    md << "| " << a.asset << " | " << a.weight << " | " << a.risk << " | " << a.paths.size() << " |\n";
  md << "\n## Attack paths\n\n";
  if (report.ranking.empty()) md << "No attack paths.\n";
  for (std::size_t rank = 0; rank < report.ranking.size(); ++rank) {
    std::size_t i = report.ranking[rank];
    md << rank + 1 << ". `" << paths[i].asset << "` " << to_string(paths[i].requirement) << " index "
       << report.paths[i].index << "\n";
    for (const auto& s : paths[i].steps) md << "   - " << s.signature() << " on " << s.target << "\n";
  }
  return md.str();
}

}  // namespace esp
