#pragma once

// On-disk risk-analysis sessions. A session directory holds the framing
// inputs and one JSON artifact per stage:
//
//   manifest.json        hashes and per-stage KB provenance
//   kb.json, app.json    canonical framing inputs
//   attacks.json         attacker-gated attack paths
//   risk_report.json/md  vanilla risk assessment
//   solutions.json       ranked mitigation solutions (sol-1, sol-2, ...)
//   hidden_solution.json, hiding_model.lp
//   plan_<id>.json       deployment plans
//   FAILED               present when the last pipeline run aborted

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "esp/candidates.hpp"
#include "esp/game.hpp"
#include "esp/hiding.hpp"
#include "esp/ingest.hpp"
#include "esp/kb_io.hpp"

namespace esp {

namespace fs = std::filesystem;

/// Error raised by a pipeline stage; `stage` is framing, assessment,
/// mitigation, hiding or plan.
class StageError : public Error {
 public:
  StageError(std::string stage, const Error& cause)
      : Error(cause.kind(), cause.what()), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

struct AnalyzeInput {
  std::optional<fs::path> kb_path;
  std::optional<std::string> kb_text;
  std::optional<fs::path> model_path;   // application model JSON, used as-is
  std::optional<std::string> model_text;
  std::optional<fs::path> src_root;     // C sources to scan
  std::vector<SourceFile> src_files;
};

struct MitigateOptions {
  std::optional<OverheadVector> budgets;  // defaults to the KB thresholds
  std::map<std::string, double> budget_overrides;
  std::optional<int> lmax;
  std::optional<int> effort;
  std::optional<int> top_k;
  std::optional<int> beam_width;
  SearchOptions search;
  bool parallel = true;
};

struct HideOptions {
  std::string solution = "sol-1";
  std::optional<int> gamma;
};

struct PipelineOptions {
  MitigateOptions mitigate;
  HideOptions hide;
};

/// Loaded view of a session directory.
class SessionStore {
 public:
  explicit SessionStore(fs::path dir);

  const fs::path& dir() const { return dir_; }
  bool has(const std::string& artifact) const;
  json read_json(const std::string& artifact) const;
  std::string read_text(const std::string& artifact) const;
  void write_json(const std::string& artifact, const json& j) const;
  void write_text(const std::string& artifact, std::string_view text) const;
  void remove(const std::string& artifact) const;

  /// Parses kb.json and app.json.
  Session load_session() const;
  std::vector<AttackPath> load_paths() const;

  json manifest() const;
  void record_stage(const std::string& stage, const std::vector<std::string>& artifacts) const;

 private:
  fs::path dir_;
};

/// Framing: validates the KB, ingests the application and writes kb/app/manifest.
void analyze(const fs::path& dir, const AnalyzeInput& input);
/// Assessment: infers and gates attack paths and writes the risk reports.
void assess(const fs::path& dir);
/// Mitigation: candidate search, game and ranking into solutions.json.
json mitigate(const fs::path& dir, const MitigateOptions& options);
/// Asset hiding on a ranked solution.
json hide_solution(const fs::path& dir, const HideOptions& options);
/// Writes plan_<id>.json and records its hash in the manifest.
json export_plan(const fs::path& dir, const std::string& solution_id);
/// Evaluates an edited solution without writing anything.
json evaluate_what_if(const fs::path& dir, const json& edited);

/// Replaces assets, attacker and budgets from a framing document, and drops
/// every downstream artifact.
void update_framing(const fs::path& dir, const json& framing);
json read_framing(const fs::path& dir);

/// analyze -> assess -> mitigate -> hide. On failure writes FAILED and
/// rethrows as StageError.
void run_pipeline(const fs::path& dir, const AnalyzeInput& input, const PipelineOptions& options);

/// Solution JSON (as stored) by id: sol-N from solutions.json or "hidden".
json find_solution(const fs::path& dir, const std::string& id);

/// `client_time=20,server_memory=5` into per-kind overrides.
std::map<std::string, double> parse_budget_list(std::string_view text);

/// Every artifact that is a pure function of the inputs, for determinism checks.
std::vector<std::string> session_artifacts(const fs::path& dir);

}  // namespace esp
