#pragma once

// Seeded random instances for property and oracle tests.

#include <random>

#include "esp/kb_io.hpp"
#include "esp/knapsack.hpp"

namespace esp::testing {

using Rng = std::mt19937_64;

int uniform(Rng& rng, int lo, int hi);
bool coin(Rng& rng, double p = 0.5);
/// k / 2^shift with k uniform in [lo, hi]; exactly representable.
double dyadic(Rng& rng, int lo, int hi, int shift = 2);

struct AttackCase {
  KnowledgeBase kb;
  ApplicationModel app;
  int max_depth = 4;
};

/// At most 12 rules over a few unary and nullary predicates (recursion
/// allowed), at most 3 assets.
AttackCase random_attack_case(Rng& rng);

struct MitigationCase {
  KnowledgeBase kb;
  ApplicationModel app;
  int lmax = 2;
  int effort = 1;
};

struct MitigationShape {
  int max_assets = 3;
  int max_pis = 4;
  int max_lmax = 2;
  int max_effort = 2;
  bool correlation_sets = true;
};

/// Fixed locate/extract/tamper rule set with random attributes, random
/// protections, PIs, precedence rules, metrics and budgets. The app has one
/// extra non-asset function so hiding has room to replicate.
MitigationCase random_mitigation_case(Rng& rng, const MitigationShape& shape = {});

/// Rows shaped like hiding models: nonnegative budget rows, symmetry rows
/// and pairwise exclusions; dyadic data.
BinaryProgram random_binary_program(Rng& rng, int max_variables = 20);

}  // namespace esp::testing
