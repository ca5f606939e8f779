#pragma once

// Source ingestion: finds functions, `#pragma esp` annotations, the call
// graph and per-part complexity metrics in C sources.
//
// Annotation grammar:
//   #pragma esp asset begin(<req>[,<req>][, weight=<float>][, id=<name>])
//   #pragma esp asset end
//   #pragma esp var(<identifier>, <req>[,<req>][, weight=<float>])

#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "esp/lexer.hpp"
#include "esp/model.hpp"

namespace esp {

struct SourceFile {
  std::string path;  // relative to the scanned root, '/'-separated
  std::string text;
};

/// Every `.c`/`.h` file under root, ordered by relative path.
std::vector<SourceFile> read_sources(const std::filesystem::path& root);

struct CallGraph {
  std::vector<std::string> nodes;
  std::vector<std::pair<std::string, std::string>> edges;  // sorted, no duplicates

  std::size_t out_degree(std::string_view node) const;
};

/// Parts, primary assets, call edges, adjacency and metrics for a source set.
ApplicationModel scan_files(std::span<const SourceFile> files);
ApplicationModel scan_sources(const std::filesystem::path& root);

CallGraph build_call_graph(const ApplicationModel& app, std::span<const SourceFile> files);

/// Non-asset functions within `max_distance` calls of a primary-asset
/// function become secondary assets weighted `factor` x the asset weight.
std::vector<Asset> derive_secondary_assets(const ApplicationModel& app, const CallGraph& cg,
                                           int max_distance = 1, double factor = 0.25);

/// Replaces the model's secondary assets with a fresh derivation.
void attach_secondary_assets(ApplicationModel& app, const CallGraph& cg, int max_distance,
                             double factor);

MetricVector compute_metrics(const ApplicationPart& part, std::span<const SourceFile> files,
                             const CallGraph& cg);

// Token-level metric kernels --------------------------------------------------

/// 1 + number of if/for/while/case/&&/||/? tokens.
int cyclomatic_complexity(std::span<const lex::Token> tokens);

struct HalsteadCounts {
  int distinct_operators = 0;  // eta1
  int distinct_operands = 0;   // eta2
  int total_operators = 0;     // N1
  int total_operands = 0;      // N2

  /// (N1 + N2) * log2(eta1 + eta2); 0 when the vocabulary has fewer than two words.
  double volume() const;
};

HalsteadCounts halstead_counts(std::span<const lex::Token> tokens);

}  // namespace esp
