#pragma once

// Domain model shared by every stage: application parts and assets, the
// knowledge base (attack-step rules, protections, precedence tables), the
// attacker model and tunable thresholds.

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace esp {

class Error : public std::runtime_error {
 public:
  enum class Kind { parse, reference, range, grammar, constraint, io, usage, internal };

  Error(Kind kind, std::string message) : std::runtime_error(std::move(message)), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

std::string_view to_string(Error::Kind k);

// ---------------------------------------------------------------------------
// Security requirements

enum class Requirement : std::uint8_t { confidentiality = 0, integrity = 1 };

std::string_view to_string(Requirement r);
std::optional<Requirement> parse_requirement(std::string_view s);

class RequirementSet {
 public:
  constexpr RequirementSet() = default;
  constexpr RequirementSet(std::initializer_list<Requirement> rs) {
    for (auto r : rs) insert(r);
  }

  constexpr void insert(Requirement r) { bits_ |= bit(r); }
  constexpr bool contains(Requirement r) const { return (bits_ & bit(r)) != 0; }
  constexpr bool empty() const { return bits_ == 0; }
  constexpr bool intersects(RequirementSet o) const { return (bits_ & o.bits_) != 0; }
  constexpr RequirementSet& operator|=(RequirementSet o) {
    bits_ |= o.bits_;
    return *this;
  }
  std::vector<Requirement> list() const;

  friend constexpr bool operator==(RequirementSet, RequirementSet) = default;

 private:
  static constexpr std::uint8_t bit(Requirement r) { return std::uint8_t(1u << unsigned(r)); }
  std::uint8_t bits_ = 0;
};

// ---------------------------------------------------------------------------
// Metrics

enum class Metric : std::uint8_t { sloc, cyclomatic, call_fanout, halstead_volume, operand_count };
inline constexpr std::size_t kMetricCount = 5;

std::string_view to_string(Metric m);
std::optional<Metric> parse_metric(std::string_view s);

struct MetricVector {
  std::array<double, kMetricCount> values{};

  double& operator[](Metric m) { return values[std::size_t(m)]; }
  double operator[](Metric m) const { return values[std::size_t(m)]; }

  friend bool operator==(const MetricVector&, const MetricVector&) = default;
};

/// m' = A * m + b, applied by a protection instance to the metrics of the part it protects.
struct AffineTransform {
  std::array<std::array<double, kMetricCount>, kMetricCount> matrix{};
  std::array<double, kMetricCount> offset{};

  static AffineTransform identity();
  MetricVector apply(const MetricVector& m) const;

  friend bool operator==(const AffineTransform&, const AffineTransform&) = default;
};

// ---------------------------------------------------------------------------
// Attack-step attributes

enum class Attribute : std::uint8_t { complexity, required_skill, tool_availability, tool_usability };
inline constexpr std::size_t kAttributeCount = 4;

std::string_view to_string(Attribute a);
std::optional<Attribute> parse_attribute(std::string_view s);

/// Every component lives in 1..5.
struct AttributeVector {
  std::array<int, kAttributeCount> values{3, 3, 3, 3};

  int& operator[](Attribute a) { return values[std::size_t(a)]; }
  int operator[](Attribute a) const { return values[std::size_t(a)]; }

  friend bool operator==(const AttributeVector&, const AttributeVector&) = default;
};

/// Signed change to an AttributeVector.
struct AttributeDelta {
  std::array<int, kAttributeCount> values{};

  int& operator[](Attribute a) { return values[std::size_t(a)]; }
  int operator[](Attribute a) const { return values[std::size_t(a)]; }
  bool is_zero() const;
  AttributeDelta& operator+=(const AttributeDelta& o);

  friend bool operator==(const AttributeDelta&, const AttributeDelta&) = default;
};

// ---------------------------------------------------------------------------
// Overheads

enum class OverheadKind : std::uint8_t {
  client_time,
  server_time,
  client_memory,
  server_memory,
  network_traffic
};
inline constexpr std::size_t kOverheadCount = 5;

std::string_view to_string(OverheadKind k);
std::optional<OverheadKind> parse_overhead_kind(std::string_view s);

/// Percent of the vanilla baseline, per overhead criterion.
struct OverheadVector {
  std::array<double, kOverheadCount> values{};

  double& operator[](OverheadKind k) { return values[std::size_t(k)]; }
  double operator[](OverheadKind k) const { return values[std::size_t(k)]; }
  OverheadVector& operator+=(const OverheadVector& o);
  friend OverheadVector operator+(OverheadVector a, const OverheadVector& b) { return a += b; }
  /// Component-wise <=.
  bool within(const OverheadVector& budget) const;
  double total() const;

  friend bool operator==(const OverheadVector&, const OverheadVector&) = default;
};

/// Rows: overhead kinds. Columns: metrics of the vanilla part.
using OverheadCoefficients = std::array<std::array<double, kMetricCount>, kOverheadCount>;

// ---------------------------------------------------------------------------
// Application model

enum class PartKind : std::uint8_t { function, code_region, variable };

std::string_view to_string(PartKind k);
std::optional<PartKind> parse_part_kind(std::string_view s);

struct SourceSpan {
  std::string file;
  int line_begin = 0;
  int line_end = 0;

  friend bool operator==(const SourceSpan&, const SourceSpan&) = default;
};

struct ApplicationPart {
  std::string id;
  PartKind kind = PartKind::function;
  std::string name;
  std::optional<std::string> parent;
  SourceSpan span;
  MetricVector metrics;

  friend bool operator==(const ApplicationPart&, const ApplicationPart&) = default;
};

enum class AssetRole : std::uint8_t { primary, secondary };

struct Asset {
  std::string part;
  RequirementSet requirements;
  double weight = 1.0;
  AssetRole role = AssetRole::primary;

  friend bool operator==(const Asset&, const Asset&) = default;
};

struct ApplicationModel {
  std::vector<ApplicationPart> parts;
  std::vector<Asset> assets;
  std::vector<std::pair<std::string, std::string>> call_edges;
  std::vector<std::pair<std::string, std::string>> adjacency;

  const ApplicationPart* find_part(std::string_view id) const;
  const Asset* find_asset(std::string_view part) const;

  friend bool operator==(const ApplicationModel&, const ApplicationModel&) = default;
};

// ---------------------------------------------------------------------------
// Knowledge base

/// A Datalog-style atom. Arguments starting with an upper-case letter or '_'
/// are variables; everything else is a constant naming an application part.
struct Term {
  std::string predicate;
  std::vector<std::string> args;

  static Term parse(std::string_view text);
  std::string str() const;
  static bool is_variable(std::string_view arg);

  friend bool operator==(const Term&, const Term&) = default;
  friend auto operator<=>(const Term&, const Term&) = default;
};

struct MetricBand {
  Metric metric = Metric::cyclomatic;
  double low = 0;
  double high = 0;
  Attribute attribute = Attribute::complexity;
  int delta_low = 0;
  int delta_high = 0;

  /// Delta contributed by this band for a metric value.
  int delta_for(double value) const {
    if (value < low) return delta_low;
    if (value > high) return delta_high;
    return 0;
  }

  friend bool operator==(const MetricBand&, const MetricBand&) = default;
};

struct AttackStepRule {
  std::string id;
  Term head;
  std::vector<Term> premises;
  /// Derivation-only rules connect steps and never appear in attack paths.
  bool derived = false;
  AttributeVector attributes;
  std::vector<std::string> classes;
  std::vector<MetricBand> metric_modifiers;

  friend bool operator==(const AttackStepRule&, const AttackStepRule&) = default;
};

struct Protection {
  std::string id;
  RequirementSet requirements;
  bool singleton = false;
  double resilience = 1.0;   // in (0,1]
  double fingerprint = 0.0;  // in [0,1]

  friend bool operator==(const Protection&, const Protection&) = default;
};

struct ProtectionInstance {
  std::string id;
  std::string protection;
  std::string config;
  std::map<std::string, AttributeDelta> step_deltas;   // keyed by rule id
  std::map<std::string, AttributeDelta> class_deltas;  // keyed by step-class tag
  AffineTransform transform = AffineTransform::identity();
  OverheadCoefficients overhead{};

  /// Sum of every delta entry that targets the rule (by id or by class).
  AttributeDelta delta_for(const AttackStepRule& rule) const;
  bool has_deltas() const;

  friend bool operator==(const ProtectionInstance&, const ProtectionInstance&) = default;
};

using PiPair = std::pair<std::string, std::string>;

struct PrecedenceRules {
  std::set<PiPair> forbidden;                      // ordered (earlier, later)
  std::map<PiPair, double> discouraged;            // ordered, penalty factor in (0,1)
  std::map<PiPair, AttributeDelta> synergies;      // unordered, stored with first < second
  std::vector<std::vector<std::string>> correlation_sets;

  bool is_forbidden(const std::string& earlier, const std::string& later) const {
    return forbidden.contains({earlier, later});
  }
  const AttributeDelta* synergy(const std::string& a, const std::string& b) const;

  friend bool operator==(const PrecedenceRules&, const PrecedenceRules&) = default;
};

enum class Expertise : std::uint8_t { geek, amateur, professional, guru };

std::string_view to_string(Expertise e);
std::optional<Expertise> parse_expertise(std::string_view s);
/// geek=1, amateur=2, professional=3, guru=4.
constexpr int capability_rank(Expertise e) { return int(e) + 1; }

struct AttackerModel {
  Expertise expertise = Expertise::professional;
  std::optional<int> effort_budget;  // defaults to the number of assets

  int effort(const ApplicationModel& app) const {
    return effort_budget.value_or(int(app.assets.size()));
  }

  friend bool operator==(const AttackerModel&, const AttackerModel&) = default;
};

struct Thresholds {
  int max_depth = 8;
  int max_paths_per_asset = 64;
  int secondary_depth = 1;
  double secondary_factor = 0.25;
  int lmax = 3;
  int beam_width = 256;
  int top_k = 10;
  double discouraged_default = 0.9;
  OverheadVector budgets = default_budgets();
  std::vector<MetricBand> metric_bands = default_metric_bands();

  static OverheadVector default_budgets();
  static std::vector<MetricBand> default_metric_bands();

  friend bool operator==(const Thresholds&, const Thresholds&) = default;
};

struct HidingParams {
  int gamma = 2;
  double beta_replication = 1.0;
  double beta_enlargement = 0.05;
  double beta_shadowing = 0.5;
  long node_limit = 1'000'000;

  friend bool operator==(const HidingParams&, const HidingParams&) = default;
};

class KnowledgeBase {
 public:
  std::vector<AttackStepRule> rules;
  std::vector<Protection> protections;
  std::vector<ProtectionInstance> instances;
  PrecedenceRules precedence;
  AttackerModel attacker;
  Thresholds thresholds;
  HidingParams hiding;

  /// Rebuilds the id lookup tables; call after mutating the vectors.
  void reindex();

  const AttackStepRule* find_rule(std::string_view id) const;
  const Protection* find_protection(std::string_view id) const;
  const ProtectionInstance* find_instance(std::string_view id) const;
  /// Protection owning a PI; the PI must exist.
  const Protection& protection_of(const ProtectionInstance& pi) const;

  friend bool operator==(const KnowledgeBase& a, const KnowledgeBase& b) {
    return a.rules == b.rules && a.protections == b.protections && a.instances == b.instances &&
           a.precedence == b.precedence && a.attacker == b.attacker &&
           a.thresholds == b.thresholds && a.hiding == b.hiding;
  }

 private:
  std::unordered_map<std::string, std::size_t> rule_index_;
  std::unordered_map<std::string, std::size_t> protection_index_;
  std::unordered_map<std::string, std::size_t> instance_index_;
};

}  // namespace esp
