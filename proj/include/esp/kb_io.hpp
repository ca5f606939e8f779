#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "esp/model.hpp"
#include "json.hpp"

namespace esp {

using json = nlohmann::json;

enum class Severity { error, warning };

struct Diagnostic {
  Severity severity = Severity::error;
  Error::Kind kind = Error::Kind::constraint;
  std::string entity;
  std::string message;
};

// Knowledge base --------------------------------------------------------------

KnowledgeBase parse_kb(std::string_view text);
KnowledgeBase load_kb(const std::filesystem::path& path);
json kb_to_json(const KnowledgeBase& kb);
/// Canonical text: sorted keys, 2-space indent, trailing LF.
std::string save_kb(const KnowledgeBase& kb);

std::vector<Diagnostic> validate_kb(const KnowledgeBase& kb);

// Application model -----------------------------------------------------------

ApplicationModel parse_app(std::string_view text);
ApplicationModel load_app(const std::filesystem::path& path);
json app_to_json(const ApplicationModel& app);
std::string save_app(const ApplicationModel& app);

std::vector<Diagnostic> validate_app(const ApplicationModel& app);
/// Cross-references between the KB and the application (correlation sets).
std::vector<Diagnostic> validate_pair(const KnowledgeBase& kb, const ApplicationModel& app);

// Sessions --------------------------------------------------------------------

/// Immutable pairing of a KB and an application model, identified by the
/// SHA-256 of `canonical(kb) || 0x00 || canonical(app)`.
class Session {
 public:
  Session(KnowledgeBase kb, ApplicationModel app);

  const KnowledgeBase& kb() const { return kb_; }
  const ApplicationModel& app() const { return app_; }
  const std::string& hash() const { return hash_; }
  const std::string& kb_hash() const { return kb_hash_; }

 private:
  KnowledgeBase kb_;
  ApplicationModel app_;
  std::string hash_;
  std::string kb_hash_;
};

std::shared_ptr<const Session> snapshot(KnowledgeBase kb, ApplicationModel app);

// Utilities -------------------------------------------------------------------

std::string sha256_hex(std::string_view data);
std::string canonical_dump(const json& j);
std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);
/// Throws the first error-severity diagnostic, if any.
void throw_on_error(const std::vector<Diagnostic>& diags);

json overhead_to_json(const OverheadVector& v);
OverheadVector overhead_from_json(const json& j, OverheadVector base = {});
json metrics_to_json(const MetricVector& m);

}  // namespace esp
