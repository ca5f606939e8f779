#pragma once

#include <span>
#include <string>
#include <vector>

#include "esp/attack.hpp"
#include "esp/model.hpp"

namespace esp {

enum class PathAggregator { product, sum, max };

std::string_view to_string(PathAggregator a);
std::optional<PathAggregator> parse_path_aggregator(std::string_view s);

/// clamp_{1..5}(base + metric-band deltas + PI deltas + activated synergy deltas).
///
/// `target_metrics` are the (predicted) metrics of the part the step acts on,
/// `applied` the PIs layered on that part. `bands` apply to every rule in
/// addition to the rule's own metric modifiers. A synergy fires when both PIs
/// of a synergy pair are applied and at least one of them affects the rule.
AttributeVector modify_attributes(const AttackStepRule& rule, const MetricVector& target_metrics,
                                  std::span<const MetricBand> bands,
                                  std::span<const ProtectionInstance* const> applied,
                                  const PrecedenceRules& precedence);

/// Geometric mean of the four normalized eases; lies in (0,1].
double step_index(const AttributeVector& attrs);

double path_index(std::span<const double> step_indices, PathAggregator agg = PathAggregator::product);

/// 1 - prod(1 - p_i).
double noisy_or(std::span<const double> probabilities);

struct PathRisk {
  std::vector<AttributeVector> modified;
  std::vector<double> step_indices;
  double index = 0.0;
};

struct AssetRisk {
  std::string asset;
  double weight = 0.0;
  double risk = 0.0;
  std::vector<std::size_t> paths;
};

struct RiskReport {
  std::vector<PathRisk> paths;     // parallel to the input paths
  std::vector<AssetRisk> assets;   // in application asset order
  double application_risk = 0.0;   // sum of weight * asset risk
  std::vector<std::size_t> ranking;  // path indices, riskiest first
};

RiskReport aggregate(const ApplicationModel& app, const std::vector<AttackPath>& paths,
                     std::vector<PathRisk> per_path);

json risk_report_to_json(const RiskReport& report, const std::vector<AttackPath>& paths,
                         const KnowledgeBase& kb, const AttackerModel& attacker);
std::string risk_report_markdown(const RiskReport& report, const std::vector<AttackPath>& paths,
                                 const AttackerModel& attacker);

}  // namespace esp
