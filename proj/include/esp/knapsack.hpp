#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace esp {

/// max c.x  subject to  A x <= b,  x in {0,1}^n.
struct BinaryProgram {
  struct Row {
    std::string name;
    std::vector<std::pair<std::size_t, double>> terms;  // (variable, coefficient)
    double bound = 0.0;
  };

  std::vector<double> objective;
  std::vector<std::string> names;
  std::vector<Row> rows;

  std::size_t variables() const { return objective.size(); }
  std::size_t add_variable(std::string name, double value);
  void add_row(std::string name, std::vector<std::pair<std::size_t, double>> terms, double bound);

  bool feasible(std::span<const std::uint8_t> x) const;
  double value(std::span<const std::uint8_t> x) const;
};

/// Fractional-knapsack bound on the surrogate of every row with nonnegative
/// coefficients and a finite positive bound (each normalized by its bound),
/// given the first `prefix.size()` variables fixed. Returns -inf when the
/// prefix already violates a nonnegative row.
double surrogate_bound(const BinaryProgram& program, std::span<const std::uint8_t> prefix);

struct BinarySolution {
  std::vector<std::uint8_t> x;
  double value = 0.0;
  bool suboptimal = false;
  long nodes = 0;
};

/// Best-first branch and bound, branching on variables in index order. When
/// `node_limit` expansions are exhausted the incumbent is returned flagged
/// suboptimal. The all-zero point must be feasible.
BinarySolution solve_binary(const BinaryProgram& program, long node_limit = 1'000'000);

}  // namespace esp
