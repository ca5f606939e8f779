#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "esp/attack.hpp"
#include "esp/kb_io.hpp"
#include "esp/risk.hpp"

namespace esp {

/// PI ids layered on each part, first layer first.
using PartSequences = std::map<std::string, std::vector<std::string>>;

struct AppliedPI {
  std::string pi;
  std::string part;
  int layer = 1;

  friend bool operator==(const AppliedPI&, const AppliedPI&) = default;
};

/// Coverage of the top PI on `from` extended to the adjacent part `to`.
struct Enlargement {
  std::string pi;
  std::string from;
  std::string to;

  friend bool operator==(const Enlargement&, const Enlargement&) = default;
};

struct Solution {
  std::vector<AppliedPI> applied;  // global deployment order
  std::vector<Enlargement> enlargements;
  std::map<std::string, MetricVector> predicted;
  OverheadVector overhead;
  double protection_index = 0.0;
  double discouraged_penalty = 1.0;

  PartSequences sequences() const;
  /// `part=[pi,pi];part=[pi]` over parts in id order; empty for no protection.
  std::string signature() const;

  /// Applied PIs in part-id order, layers numbered from 1.
  static Solution from_sequences(const PartSequences& seqs);
};

std::string signature_of(const PartSequences& seqs);

using SuitableMap = std::map<std::string, std::vector<std::string>>;

/// PIs with a nonzero delta on some step acting on the part, whose protection
/// addresses a requirement of the asset on that part.
SuitableMap suitable_pis(const Session& session, const std::vector<AttackPath>& paths);

/// Left-to-right composition of the PIs' affine transforms, negatives clamped
/// to zero after each layer. Throws when the sequence is longer than lmax.
MetricVector predict_metrics(const MetricVector& part_metrics,
                             std::span<const ProtectionInstance* const> sequence, int lmax);

/// Overhead of one PI on a part: coefficients x vanilla metrics.
OverheadVector pi_overhead(const ProtectionInstance& pi, const MetricVector& vanilla);
OverheadVector estimate_overhead(const PartSequences& seqs, const ApplicationModel& app,
                                 const KnowledgeBase& kb);

/// Product of the penalty factor over discouraged adjacent pairs of one part.
double sequence_penalty(std::span<const std::string> seq, const PrecedenceRules& precedence);

/// Per-asset bookkeeping needed to turn path risks into a protection index.
struct IndexLayout {
  struct AssetTerm {
    double weight = 0.0;
    double vanilla_risk = 0.0;
    std::vector<std::size_t> paths;
  };
  std::vector<AssetTerm> assets;
};

/// penalty * sum_a w_a * (R0_a - noisy_or(path risks of a)).
double protection_index_from(std::span<const double> path_risks, const IndexLayout& layout, double penalty);

struct GameInstance;

/// Everything the mitigation stage needs about one session and its (gated)
/// attack paths: vanilla risks, predictor limit and evaluation helpers.
class MitigationContext {
 public:
  MitigationContext(const Session& session, std::vector<AttackPath> paths, int lmax,
                    PathAggregator aggregator = PathAggregator::product);

  const Session& session() const { return session_; }
  const KnowledgeBase& kb() const { return session_.kb(); }
  const ApplicationModel& app() const { return session_.app(); }
  const std::vector<AttackPath>& paths() const { return paths_; }
  const IndexLayout& layout() const { return layout_; }
  const std::vector<double>& vanilla_path_risks() const { return vanilla_path_risk_; }
  int lmax() const { return lmax_; }
  PathAggregator aggregator() const { return aggregator_; }

  /// Index of one step when `seq` is layered on the step's target part.
  double step_risk(const StepInstance& step, std::span<const std::string> seq) const;
  PathRisk evaluate_path(std::size_t path, const PartSequences& seqs) const;
  RiskReport assess(const PartSequences& seqs) const;

  double discouraged_penalty(const PartSequences& seqs) const;
  double protection_index(const PartSequences& seqs) const;
  /// Mean resilience of the distinct protections applied on the parts a path touches; 0 if none.
  double path_resilience(std::size_t path, const PartSequences& seqs) const;

  Solution make_solution(const PartSequences& seqs) const;
  GameInstance game_instance(const PartSequences& seqs) const;

  /// Structural and budget diagnostics for an arbitrary solution.
  std::vector<Diagnostic> check(const PartSequences& seqs, const OverheadVector& budgets) const;

 private:
  AttributeVector step_attributes(const StepInstance& step, std::span<const std::string> seq) const;
  std::vector<const ProtectionInstance*> resolve(std::span<const std::string> seq) const;
  const std::vector<std::string>* sequence_on(const PartSequences& seqs, const std::string& part) const;

  const Session& session_;
  std::vector<AttackPath> paths_;
  int lmax_;
  PathAggregator aggregator_;
  std::vector<double> vanilla_path_risk_;
  IndexLayout layout_;
};

json solution_to_json(const Solution& s);
Solution solution_from_json(const json& j);

}  // namespace esp
