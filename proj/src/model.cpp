#include "esp/model.hpp"

#include <algorithm>
#include <cctype>

namespace esp {

std::string_view to_string(Error::Kind k) {
  switch (k) {
    case Error::Kind::parse: return "parse";
    case Error::Kind::reference: return "reference";
    case Error::Kind::range: return "range";
    case Error::Kind::grammar: return "grammar";
    case Error::Kind::constraint: return "constraint";
    case Error::Kind::io: return "io";
    case Error::Kind::usage: return "usage";
    case Error::Kind::internal: return "internal";
  }
  return "internal";
}

namespace {

template <typename Enum, std::size_t N>
std::optional<Enum> lookup(std::string_view s, const std::array<std::string_view, N>& names) {
  for (std::size_t i = 0; i < N; ++i)
    if (names[i] == s) return Enum(i);
  return std::nullopt;
}

constexpr std::array<std::string_view, 2> kRequirementNames{"confidentiality", "integrity"};
constexpr std::array<std::string_view, kMetricCount> kMetricNames{
    "sloc", "cyclomatic", "call_fanout", "halstead_volume", "operand_count"};
constexpr std::array<std::string_view, kAttributeCount> kAttributeNames{
    "complexity", "required_skill", "tool_availability", "tool_usability"};
constexpr std::array<std::string_view, kOverheadCount> kOverheadNames{
    "client_time", "server_time", "client_memory", "server_memory", "network_traffic"};
constexpr std::array<std::string_view, 3> kPartKindNames{"function", "code-region", "variable"};
constexpr std::array<std::string_view, 4> kExpertiseNames{"geek", "amateur", "professional",
                                                          "guru"};

}  // namespace

std::string_view to_string(Requirement r) { return kRequirementNames[std::size_t(r)]; }
std::optional<Requirement> parse_requirement(std::string_view s) {
  return lookup<Requirement>(s, kRequirementNames);
}

std::vector<Requirement> RequirementSet::list() const {
  std::vector<Requirement> out;
  for (auto r : {Requirement::confidentiality, Requirement::integrity})
    if (contains(r)) out.push_back(r);
  return out;
}

std::string_view to_string(Metric m) { return kMetricNames[std::size_t(m)]; }
std::optional<Metric> parse_metric(std::string_view s) { return lookup<Metric>(s, kMetricNames); }

std::string_view to_string(Attribute a) { return kAttributeNames[std::size_t(a)]; }
std::optional<Attribute> parse_attribute(std::string_view s) {
  return lookup<Attribute>(s, kAttributeNames);
}

std::string_view to_string(OverheadKind k) { return kOverheadNames[std::size_t(k)]; }
std::optional<OverheadKind> parse_overhead_kind(std::string_view s) {
  return lookup<OverheadKind>(s, kOverheadNames);
}

std::string_view to_string(PartKind k) { return kPartKindNames[std::size_t(k)]; }
std::optional<PartKind> parse_part_kind(std::string_view s) {
  return lookup<PartKind>(s, kPartKindNames);
}

std::string_view to_string(Expertise e) { return kExpertiseNames[std::size_t(e)]; }
std::optional<Expertise> parse_expertise(std::string_view s) {
  return lookup<Expertise>(s, kExpertiseNames);
}

AffineTransform AffineTransform::identity() {
  AffineTransform t;
  for (std::size_t i = 0; i < kMetricCount; ++i) t.matrix[i][i] = 1.0;
  return t;
}

MetricVector AffineTransform::apply(const MetricVector& m) const {
  MetricVector out;
  for (std::size_t i = 0; i < kMetricCount; ++i) {
    double acc = offset[i];
    for (std::size_t j = 0; j < kMetricCount; ++j) acc += matrix[i][j] * m.values[j];
    out.values[i] = acc;
  }
  return out;
}

bool AttributeDelta::is_zero() const {
  return std::all_of(values.begin(), values.end(), [](int v) { return v == 0; });
}

AttributeDelta& AttributeDelta::operator+=(const AttributeDelta& o) {
  for (std::size_t i = 0; i < kAttributeCount; ++i) values[i] += o.values[i];
  return *this;
}

OverheadVector& OverheadVector::operator+=(const OverheadVector& o) {
  for (std::size_t i = 0; i < kOverheadCount; ++i) values[i] += o.values[i];
  return *this;
}

bool OverheadVector::within(const OverheadVector& budget) const {
  for (std::size_t i = 0; i < kOverheadCount; ++i)
    if (values[i] > budget.values[i]) return false;
  return true;
}

double OverheadVector::total() const {
  double s = 0;
  for (double v : values) s += v;
  return s;
}

const ApplicationPart* ApplicationModel::find_part(std::string_view id) const {
  for (const auto& p : parts)
    if (p.id == id) return &p;
  return nullptr;
}

const Asset* ApplicationModel::find_asset(std::string_view part) const {
  for (const auto& a : assets)
    if (a.part == part) return &a;
  return nullptr;
}

Term Term::parse(std::string_view text) {
  auto trim = [](std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
  };
  auto valid_name = [](std::string_view s) {
    if (s.empty()) return false;
    return std::all_of(s.begin(), s.end(), [](char c) {
      return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '#' ||
             c == '-' || c == ':';
    });
  };

  text = trim(text);
  Term t;
  auto open = text.find('(');
  if (open == std::string_view::npos) {
    t.predicate = std::string(text);
  } else {
    if (text.back() != ')')
      throw Error(Error::Kind::parse, "malformed term '" + std::string(text) + "'");
    t.predicate = std::string(trim(text.substr(0, open)));
    auto inner = trim(text.substr(open + 1, text.size() - open - 2));
    while (!inner.empty()) {
      auto comma = inner.find(',');
      auto arg = trim(inner.substr(0, comma));
      if (!valid_name(arg))
        throw Error(Error::Kind::parse, "malformed argument in term '" + std::string(text) + "'");
      t.args.emplace_back(arg);
      if (comma == std::string_view::npos) break;
      inner = inner.substr(comma + 1);
    }
  }
  if (!valid_name(t.predicate) || is_variable(t.predicate))
    throw Error(Error::Kind::parse, "malformed predicate in term '" + std::string(text) + "'");
  return t;
}

std::string Term::str() const {
  std::string s = predicate + "(";
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (i) s += ",";
    s += args[i];
  }
  return s + ")";
}

bool Term::is_variable(std::string_view arg) {
  return !arg.empty() && (std::isupper(static_cast<unsigned char>(arg.front())) || arg.front() == '_');
}

AttributeDelta ProtectionInstance::delta_for(const AttackStepRule& rule) const {
  AttributeDelta d;
  if (auto it = step_deltas.find(rule.id); it != step_deltas.end()) d += it->second;
  for (const auto& cls : rule.classes)
    if (auto it = class_deltas.find(cls); it != class_deltas.end()) d += it->second;
  return d;
}

bool ProtectionInstance::has_deltas() const {
  auto nonzero = [](const auto& kv) { return !kv.second.is_zero(); };
  return std::any_of(step_deltas.begin(), step_deltas.end(), nonzero) ||
         std::any_of(class_deltas.begin(), class_deltas.end(), nonzero);
}

const AttributeDelta* PrecedenceRules::synergy(const std::string& a, const std::string& b) const {
  auto key = a < b ? PiPair{a, b} : PiPair{b, a};
  auto it = synergies.find(key);
  return it == synergies.end() ? nullptr : &it->second;
}

OverheadVector Thresholds::default_budgets() {
  OverheadVector v;
  v.values.fill(100.0);
  return v;
}

std::vector<MetricBand> Thresholds::default_metric_bands() {
  return {
      {Metric::cyclomatic, 5, 25, Attribute::complexity, -1, +1},
      {Metric::sloc, 20, 200, Attribute::complexity, -1, +1},
  };
}

void KnowledgeBase::reindex() {
  rule_index_.clear();
  protection_index_.clear();
  instance_index_.clear();
  for (std::size_t i = 0; i < rules.size(); ++i) rule_index_.emplace(rules[i].id, i);
  for (std::size_t i = 0; i < protections.size(); ++i) protection_index_.emplace(protections[i].id, i);
  for (std::size_t i = 0; i < instances.size(); ++i) instance_index_.emplace(instances[i].id, i);
}

const AttackStepRule* KnowledgeBase::find_rule(std::string_view id) const {
  auto it = rule_index_.find(std::string(id));
  return it == rule_index_.end() ? nullptr : &rules[it->second];
}

const Protection* KnowledgeBase::find_protection(std::string_view id) const {
  auto it = protection_index_.find(std::string(id));
  return it == protection_index_.end() ? nullptr : &protections[it->second];
}

const ProtectionInstance* KnowledgeBase::find_instance(std::string_view id) const {
  auto it = instance_index_.find(std::string(id));
  return it == instance_index_.end() ? nullptr : &instances[it->second];
}

const Protection& KnowledgeBase::protection_of(const ProtectionInstance& pi) const {
  const auto* p = find_protection(pi.protection);
  if (!p) throw Error(Error::Kind::reference, "unknown protection '" + pi.protection + "'");
  return *p;
}

}  // namespace esp
