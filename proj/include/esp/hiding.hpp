#pragma once

#include <string>
#include <vector>

#include "esp/knapsack.hpp"
#include "esp/mitigation.hpp"

namespace esp {

enum class HidingKind : std::uint8_t { replication, enlargement, shadowing };

std::string_view to_string(HidingKind k);

/// One decision variable of the hiding model.
struct HidingVar {
  HidingKind kind = HidingKind::replication;
  std::string pi;
  std::string region;  // replicated region, or protected asset region
  std::string target;  // enlargement only: adjacent region gaining coverage
  int replica = 0;     // replication only: k = 1..gamma
  OverheadVector overhead;
};

struct HidingModel {
  Solution base;
  int gamma = 2;
  OverheadVector residual;
  std::vector<HidingVar> vars;  // parallel to program variables
  BinaryProgram program;
};

/// Normalized-metric similarity 1 / (1 + L1 distance) of a part to the mean
/// of the protected asset parts; metrics are scaled by their maximum over
/// all parts.
double region_similarity(const ApplicationModel& app, const std::vector<std::string>& protected_assets,
                         const std::string& region);

HidingModel build_hiding_model(const MitigationContext& ctx, const Solution& base, const OverheadVector& budgets,
                               int gamma);

struct HidingResult {
  Solution hidden;
  std::vector<std::uint8_t> assignment;
  double confusion = 0.0;
  bool suboptimal = false;
  long nodes = 0;
};

/// Appends the selected replications, enlargements and shadows to the base
/// solution (base PIs are never moved) and re-validates precedence.
Solution translate_hiding(const HidingModel& model, const std::vector<std::uint8_t>& assignment);

HidingResult solve_hiding(const MitigationContext& ctx, const HidingModel& model, long node_limit);
HidingResult hide(const MitigationContext& ctx, const Solution& base, const OverheadVector& budgets, int gamma,
                  long node_limit);

/// Every (PI, part) pair the hidden solution adds to is deployed at most gamma times.
bool gamma_respected(const Solution& base, const Solution& hidden, int gamma);

/// CPLEX-LP text of the model.
std::string hiding_model_lp(const HidingModel& model);
json hiding_result_to_json(const HidingModel& model, const HidingResult& result);

}  // namespace esp
