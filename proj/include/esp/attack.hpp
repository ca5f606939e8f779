#pragma once

#include <map>
#include <string>
#include <vector>

#include "esp/kb_io.hpp"
#include "esp/model.hpp"

namespace esp {

/// One application of an attack-step rule.
struct StepInstance {
  std::string rule;
  std::map<std::string, std::string> binding;  // variable -> part id
  std::string target;                          // part the step acts on

  std::string signature() const;

  friend bool operator==(const StepInstance&, const StepInstance&) = default;
  friend auto operator<=>(const StepInstance&, const StepInstance&) = default;
};

/// Steps in execution order (leaves first) breaching one requirement of one asset.
struct AttackPath {
  std::string asset;
  Requirement requirement = Requirement::integrity;
  std::vector<StepInstance> steps;
  int depth = 0;

  std::string signature() const;
  std::vector<std::string> rule_sequence() const;

  friend bool operator==(const AttackPath&, const AttackPath&) = default;
};

struct InferenceLimits {
  int max_depth = 8;
  int max_paths_per_asset = 64;
};

/// Root goals tried for an asset requirement: `breached(<req>, <asset>)` and
/// `breach_<req>(<asset>)`.
std::vector<Term> breach_goals(Requirement r, const std::string& asset);

/// Every proof of every breach goal, linearized post-order (premises left to
/// right), with at most `max_depth` steps per path. Ordered by asset id,
/// requirement, then rule-id sequence; truncated per asset.
std::vector<AttackPath> infer_paths(const Session& session, InferenceLimits limits);

/// Drops paths containing a step whose required skill exceeds rank + 1.
std::vector<AttackPath> gate_by_attacker(const std::vector<AttackPath>& paths, const KnowledgeBase& kb,
                                         const AttackerModel& attacker);

json paths_to_json(const std::vector<AttackPath>& paths);
std::vector<AttackPath> paths_from_json(const json& j);

}  // namespace esp
