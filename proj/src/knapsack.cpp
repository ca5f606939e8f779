#include "esp/knapsack.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>

#include "esp/model.hpp"

namespace esp {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double slack_eps(double b) { return 1e-9 * std::max(1.0, std::abs(b)); }

/// Column view of the program plus the static ordering used by the bound.
struct Prepared {
  explicit Prepared(const BinaryProgram& p) : program(p), columns(p.variables()), weight(p.variables(), 0.0) {
    for (std::size_t i = 0; i < p.rows.size(); ++i) {
      const auto& row = p.rows[i];
      bool nonneg = std::all_of(row.terms.begin(), row.terms.end(), [](const auto& t) { return t.second >= 0.0; });
      nonnegative.push_back(nonneg);
      bool surrogate = nonneg && row.bound > 0.0 && std::isfinite(row.bound);
      if (surrogate) ++surrogate_rows;
      surrogate_row.push_back(surrogate);
      for (const auto& [j, a] : row.terms) {
        columns[j].emplace_back(i, a);
        if (surrogate) weight[j] += a / row.bound;
      }
    }
    for (std::size_t j = 0; j < p.variables(); ++j) order.push_back(j);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      // c_a / w_a > c_b / w_b without dividing; zero weight ranks first.
      double lhs = p.objective[a] * weight[b], rhs = p.objective[b] * weight[a];
      if (weight[a] == 0.0 || weight[b] == 0.0) {
        if ((weight[a] == 0.0) != (weight[b] == 0.0)) return weight[a] == 0.0;
        return p.objective[a] > p.objective[b];
      }
      return lhs > rhs;
    });
  }

  const BinaryProgram& program;
  std::vector<std::vector<std::pair<std::size_t, double>>> columns;
  std::vector<double> weight;
  std::vector<bool> nonnegative;
  std::vector<bool> surrogate_row;
  std::size_t surrogate_rows = 0;
  std::vector<std::size_t> order;
};

struct NodeState {
  std::vector<double> lhs;
  double value = 0.0;
};

/// Row activities of the fixed ones; false when a row is already violated
/// for every completion.
bool fixed_state(const Prepared& pp, std::span<const std::uint8_t> prefix, NodeState& st) {
  const auto& p = pp.program;
  st.lhs.assign(p.rows.size(), 0.0);
  st.value = 0.0;
  for (std::size_t j = 0; j < prefix.size(); ++j)
    if (prefix[j]) {
      st.value += p.objective[j];
      for (const auto& [i, a] : pp.columns[j]) st.lhs[i] += a;
    }
  for (std::size_t i = 0; i < p.rows.size(); ++i) {
    double least = st.lhs[i];
    if (!pp.nonnegative[i])
      for (const auto& [j, a] : p.rows[i].terms)
        if (j >= prefix.size() && a < 0.0) least += a;
    if (least > p.rows[i].bound + slack_eps(p.rows[i].bound)) return false;
  }
  return true;
}

bool blocked(const Prepared& pp, const NodeState& st, std::size_t j) {
  for (const auto& [i, a] : pp.columns[j])
    if (pp.nonnegative[i] && a > 0.0 && st.lhs[i] + a > pp.program.rows[i].bound + slack_eps(pp.program.rows[i].bound))
      return true;
  return false;
}

double bound_of(const Prepared& pp, std::span<const std::uint8_t> prefix) {
  NodeState st;
  if (!fixed_state(pp, prefix, st)) return kNegInf;
  const auto& p = pp.program;
  double capacity = 0.0;
  for (std::size_t i = 0; i < p.rows.size(); ++i)
    if (pp.surrogate_row[i]) capacity += (p.rows[i].bound - st.lhs[i]) / p.rows[i].bound;
  double bound = st.value;
  for (std::size_t j : pp.order) {
    if (j < prefix.size() || p.objective[j] <= 0.0 || blocked(pp, st, j)) continue;
    const double w = pp.weight[j];
    if (w <= capacity) {
      bound += p.objective[j];
      capacity -= w;
    } else {
      if (capacity > 0.0) bound += p.objective[j] * (capacity / w);
      break;
    }
  }
  return bound;
}

/// Greedy integral completion of a prefix in bound order.
bool greedy_complete(const Prepared& pp, std::span<const std::uint8_t> prefix, std::vector<std::uint8_t>& x) {
  NodeState st;
  if (!fixed_state(pp, prefix, st)) return false;
  const auto& p = pp.program;
  x.assign(p.variables(), 0);
  std::copy(prefix.begin(), prefix.end(), x.begin());
  for (std::size_t j : pp.order) {
    if (j < prefix.size() || p.objective[j] <= 0.0 || blocked(pp, st, j)) continue;
    x[j] = 1;
    for (const auto& [i, a] : pp.columns[j]) st.lhs[i] += a;
  }
  return p.feasible(x);
}

}  // namespace

std::size_t BinaryProgram::add_variable(std::string name, double value) {
  names.push_back(std::move(name));
  objective.push_back(value);
  return objective.size() - 1;
}

void BinaryProgram::add_row(std::string name, std::vector<std::pair<std::size_t, double>> terms, double bound) {
  rows.push_back(Row{std::move(name), std::move(terms), bound});
}

bool BinaryProgram::feasible(std::span<const std::uint8_t> x) const {
  for (const auto& row : rows) {
    double lhs = 0.0;
    for (const auto& [j, a] : row.terms)
      if (x[j]) lhs += a;
    if (lhs > row.bound + slack_eps(row.bound)) return false;
  }
  return true;
}

double BinaryProgram::value(std::span<const std::uint8_t> x) const {
  double v = 0.0;
  for (std::size_t j = 0; j < objective.size(); ++j)
    if (x[j]) v += objective[j];
  return v;
}

double surrogate_bound(const BinaryProgram& program, std::span<const std::uint8_t> prefix) {
  Prepared pp(program);
  return bound_of(pp, prefix);
}

BinarySolution solve_binary(const BinaryProgram& program, long node_limit) {
  const std::size_t n = program.variables();
  for (double c : program.objective)
    if (!std::isfinite(c)) throw Error(Error::Kind::range, "objective coefficients must be finite");
  BinarySolution best;
  best.x.assign(n, 0);
  if (!program.feasible(best.x)) throw Error(Error::Kind::constraint, "binary program excludes the all-zero point");
  best.value = 0.0;

  Prepared pp(program);
  auto improves = [&](double v) { return v > best.value; };
  auto promising = [&](double b) { return b > best.value + 1e-9 * std::max(1.0, std::abs(best.value)); };
  auto try_greedy = [&](std::span<const std::uint8_t> prefix) {
    std::vector<std::uint8_t> x;
    if (greedy_complete(pp, prefix, x)) {
      double v = program.value(x);
      if (improves(v)) {
        best.value = v;
        best.x = std::move(x);
      }
    }
  };

  struct Node {
    double bound;
    long seq;
    std::vector<std::uint8_t> prefix;
  };
  auto lower = [](const Node& a, const Node& b) {
    if (a.bound != b.bound) return a.bound < b.bound;
    return a.seq > b.seq;
  };
  std::priority_queue<Node, std::vector<Node>, decltype(lower)> open(lower);
  long seq = 0;

  try_greedy({});
  double root = bound_of(pp, {});
  if (promising(root)) open.push(Node{root, seq++, {}});

  while (!open.empty()) {
    if (!promising(open.top().bound)) break;
    if (best.nodes >= node_limit) {
      best.suboptimal = true;
      break;
    }
    Node node = open.top();
    open.pop();
    ++best.nodes;
    if (node.prefix.size() == n) {
      if (program.feasible(node.prefix)) {
        double v = program.value(node.prefix);
        if (improves(v)) {
          best.value = v;
          best.x = node.prefix;
        }
      }
      continue;
    }
    try_greedy(node.prefix);
    for (std::uint8_t v : {std::uint8_t(1), std::uint8_t(0)}) {
      std::vector<std::uint8_t> child = node.prefix;
      child.push_back(v);
      double b = bound_of(pp, child);
      if (b != kNegInf && promising(b)) open.push(Node{b, seq++, std::move(child)});
    }
  }
  return best;
}

}  // namespace esp
