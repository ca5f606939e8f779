#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "esp/mitigation.hpp"

namespace esp {

/// Group of parts that always receive the same PI sequence: one correlation
/// set, or a single part with suitable PIs.
struct CandidateUnit {
  std::vector<std::string> parts;
  std::vector<std::string> suitable;
  /// Every admissible sequence in lexicographic order; the empty one first.
  std::vector<std::vector<std::string>> sequences;
  /// Summed overhead of each sequence over all parts of the unit.
  std::vector<OverheadVector> overhead;
};

/// Admissible per-part sequences over `suitable`: length <= lmax, at most one
/// PI of a singleton protection, no forbidden pair in either position order
/// (earlier, later).
std::vector<std::vector<std::string>> admissible_sequences(const std::vector<std::string>& suitable,
                                                           const KnowledgeBase& kb, int lmax);

using Choice = std::vector<std::uint32_t>;

class CandidateSpace {
 public:
  CandidateSpace(const MitigationContext& ctx, const SuitableMap& suitable);

  const std::vector<CandidateUnit>& units() const { return units_; }
  PartSequences materialize(std::span<const std::uint32_t> choice) const;

  /// Streams every within-budget choice vector in lexicographic order, in
  /// chunks of at most `chunk`. Returns the number of candidates produced.
  std::size_t enumerate(const OverheadVector& budgets, std::size_t chunk,
                        const std::function<void(const std::vector<Choice>&)>& sink) const;
  std::vector<PartSequences> enumerate_all(const OverheadVector& budgets) const;

 private:
  const MitigationContext& ctx_;
  std::vector<CandidateUnit> units_;
};

/// Table-driven protection index: step risks are precomputed per unit
/// sequence so scoring a candidate is lookups plus the path/asset algebra.
/// Results equal MitigationContext::protection_index bit for bit.
class RiskKernel {
 public:
  RiskKernel(const MitigationContext& ctx, const CandidateSpace& space);

  double score(std::span<const std::uint32_t> choice) const;
  void score_serial(const std::vector<Choice>& candidates, std::vector<double>& out) const;
  void score_parallel(const std::vector<Choice>& candidates, std::vector<double>& out) const;

 private:
  struct Slot {
    int unit = -1;
    std::size_t column = 0;
  };
  const MitigationContext& ctx_;
  std::vector<std::vector<Slot>> slots_;           // [path][step]
  std::vector<std::vector<double>> vanilla_steps_;  // [path][step]
  std::vector<std::size_t> columns_;               // affected steps per unit
  std::vector<std::vector<double>> table_;         // [unit][sequence * columns + column]
  std::vector<int> part_units_;                    // unit of each part, in part-id order
  std::vector<std::vector<double>> penalty_;       // [unit][sequence]
};

struct CandidateSearchOptions {
  OverheadVector budgets = Thresholds::default_budgets();
  int beam_width = 256;
  bool parallel = true;
  std::size_t chunk = 4096;
};

struct CandidateSearchResult {
  /// Top candidates by protection index, the empty solution always included.
  std::vector<Solution> beam;
  std::size_t enumerated = 0;
};

CandidateSearchResult search_candidates(const MitigationContext& ctx, const SuitableMap& suitable,
                                        const CandidateSearchOptions& options);

}  // namespace esp
