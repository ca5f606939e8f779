#include "esp/kb_io.hpp"

#include <openssl/evp.h>

#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace esp {

namespace {

[[noreturn]] void schema_error(const std::string& where, const std::string& what) {
  throw Error(Error::Kind::parse, where + ": " + what);
}

const json& require(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object()) schema_error(where, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) schema_error(where, std::string("missing key '") + key + "'");
  return *it;
}

std::string get_string(const json& j, const std::string& where) {
  if (!j.is_string()) schema_error(where, "expected a string");
  return j.get<std::string>();
}

double get_number(const json& j, const std::string& where) {
  if (!j.is_number()) schema_error(where, "expected a number");
  return j.get<double>();
}

int get_int(const json& j, const std::string& where) {
  if (!j.is_number_integer()) schema_error(where, "expected an integer");
  return j.get<int>();
}

bool get_bool(const json& j, const std::string& where) {
  if (!j.is_boolean()) schema_error(where, "expected a boolean");
  return j.get<bool>();
}

const json& get_array(const json& j, const std::string& where) {
  if (!j.is_array()) schema_error(where, "expected an array");
  return j;
}

template <typename F>
void optional_field(const json& obj, const char* key, F&& f) {
  if (auto it = obj.find(key); it != obj.end() && !it->is_null()) f(*it);
}

json parse_document(std::string_view text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t line = 1, col = 1;
    std::size_t upto = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
    for (std::size_t i = 0; i < upto; ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw Error(Error::Kind::parse, "parse error at line " + std::to_string(line) + ", column " +
                                        std::to_string(col) + ": " + e.what());
  }
}

RequirementSet requirements_from_json(const json& j, const std::string& where) {
  RequirementSet rs;
  for (const auto& r : get_array(j, where)) {
    auto req = parse_requirement(get_string(r, where));
    if (!req) schema_error(where, "unknown requirement '" + r.get<std::string>() + "'");
    rs.insert(*req);
  }
  return rs;
}

json requirements_to_json(RequirementSet rs) {
  json out = json::array();
  for (auto r : rs.list()) out.push_back(std::string(to_string(r)));
  return out;
}

AttributeVector attributes_from_json(const json& j, const std::string& where) {
  AttributeVector a;
  for (std::size_t i = 0; i < kAttributeCount; ++i) {
    auto name = to_string(Attribute(i));
    a.values[i] = get_int(require(j, std::string(name).c_str(), where), where + "." + std::string(name));
  }
  return a;
}

json attributes_to_json(const AttributeVector& a) {
  json out = json::object();
  for (std::size_t i = 0; i < kAttributeCount; ++i) out[std::string(to_string(Attribute(i)))] = a.values[i];
  return out;
}

AttributeDelta delta_from_json(const json& j, const std::string& where) {
  if (!j.is_object()) schema_error(where, "expected an object");
  AttributeDelta d;
  for (const auto& [k, v] : j.items()) {
    auto attr = parse_attribute(k);
    if (!attr) schema_error(where, "unknown attribute '" + k + "'");
    d[*attr] = get_int(v, where + "." + k);
  }
  return d;
}

json delta_to_json(const AttributeDelta& d) {
  json out = json::object();
  for (std::size_t i = 0; i < kAttributeCount; ++i)
    if (d.values[i] != 0) out[std::string(to_string(Attribute(i)))] = d.values[i];
  return out;
}

MetricBand band_from_json(const json& j, const std::string& where) {
  MetricBand b;
  auto metric = get_string(require(j, "metric", where), where + ".metric");
  auto m = parse_metric(metric);
  if (!m) schema_error(where, "unknown metric '" + metric + "'");
  b.metric = *m;
  auto attr = get_string(require(j, "attribute", where), where + ".attribute");
  auto a = parse_attribute(attr);
  if (!a) schema_error(where, "unknown attribute '" + attr + "'");
  b.attribute = *a;
  b.low = get_number(require(j, "low", where), where + ".low");
  b.high = get_number(require(j, "high", where), where + ".high");
  b.delta_low = get_int(require(j, "delta_low", where), where + ".delta_low");
  b.delta_high = get_int(require(j, "delta_high", where), where + ".delta_high");
  return b;
}

json band_to_json(const MetricBand& b) {
  return json{{"metric", std::string(to_string(b.metric))},
              {"attribute", std::string(to_string(b.attribute))},
              {"low", b.low},
              {"high", b.high},
              {"delta_low", b.delta_low},
              {"delta_high", b.delta_high}};
}

PiPair pair_from_json(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 2) schema_error(where, "expected a pair of ids");
  return {get_string(j[0], where), get_string(j[1], where)};
}

AttackStepRule rule_from_json(const json& j, std::size_t index) {
  std::string where = "attack_steps[" + std::to_string(index) + "]";
  AttackStepRule r;
  r.id = get_string(require(j, "id", where), where + ".id");
  where = "attack step '" + r.id + "'";
  r.head = Term::parse(get_string(require(j, "head", where), where + ".head"));
  optional_field(j, "premises", [&](const json& ps) {
    for (const auto& p : get_array(ps, where + ".premises"))
      r.premises.push_back(Term::parse(get_string(p, where + ".premises")));
  });
  optional_field(j, "derived", [&](const json& v) { r.derived = get_bool(v, where + ".derived"); });
  if (!r.derived) r.attributes = attributes_from_json(require(j, "attributes", where), where + ".attributes");
  optional_field(j, "classes", [&](const json& cs) {
    for (const auto& c : get_array(cs, where + ".classes")) r.classes.push_back(get_string(c, where));
  });
  optional_field(j, "metric_modifiers", [&](const json& ms) {
    for (const auto& m : get_array(ms, where + ".metric_modifiers"))
      r.metric_modifiers.push_back(band_from_json(m, where + ".metric_modifiers"));
  });
  return r;
}

json rule_to_json(const AttackStepRule& r) {
  json j{{"id", r.id}, {"head", r.head.str()}, {"derived", r.derived}};
  json premises = json::array();
  for (const auto& p : r.premises) premises.push_back(p.str());
  j["premises"] = premises;
  if (!r.derived) j["attributes"] = attributes_to_json(r.attributes);
  j["classes"] = r.classes;
  json mods = json::array();
  for (const auto& m : r.metric_modifiers) mods.push_back(band_to_json(m));
  j["metric_modifiers"] = mods;
  return j;
}

Protection protection_from_json(const json& j, std::size_t index) {
  std::string where = "protections[" + std::to_string(index) + "]";
  Protection p;
  p.id = get_string(require(j, "id", where), where + ".id");
  where = "protection '" + p.id + "'";
  p.requirements = requirements_from_json(require(j, "requirements", where), where + ".requirements");
  optional_field(j, "singleton", [&](const json& v) { p.singleton = get_bool(v, where + ".singleton"); });
  p.resilience = get_number(require(j, "resilience", where), where + ".resilience");
  p.fingerprint = get_number(require(j, "fingerprint", where), where + ".fingerprint");
  return p;
}

json protection_to_json(const Protection& p) {
  return json{{"id", p.id},
              {"requirements", requirements_to_json(p.requirements)},
              {"singleton", p.singleton},
              {"resilience", p.resilience},
              {"fingerprint", p.fingerprint}};
}

ProtectionInstance instance_from_json(const json& j, std::size_t index) {
  std::string where = "protection_instances[" + std::to_string(index) + "]";
  ProtectionInstance pi;
  pi.id = get_string(require(j, "id", where), where + ".id");
  where = "protection instance '" + pi.id + "'";
  pi.protection = get_string(require(j, "protection", where), where + ".protection");
  optional_field(j, "config", [&](const json& v) { pi.config = get_string(v, where + ".config"); });
  optional_field(j, "step_deltas", [&](const json& m) {
    if (!m.is_object()) schema_error(where + ".step_deltas", "expected an object");
    for (const auto& [k, v] : m.items()) pi.step_deltas[k] = delta_from_json(v, where + ".step_deltas." + k);
  });
  optional_field(j, "class_deltas", [&](const json& m) {
    if (!m.is_object()) schema_error(where + ".class_deltas", "expected an object");
    for (const auto& [k, v] : m.items()) pi.class_deltas[k] = delta_from_json(v, where + ".class_deltas." + k);
  });
  optional_field(j, "metric_transform", [&](const json& t) {
    const std::string w = where + ".metric_transform";
    optional_field(t, "matrix", [&](const json& rows) {
      if (!rows.is_array() || rows.size() != kMetricCount) schema_error(w, "matrix must be 5x5");
      for (std::size_t i = 0; i < kMetricCount; ++i) {
        if (!rows[i].is_array() || rows[i].size() != kMetricCount) schema_error(w, "matrix must be 5x5");
        for (std::size_t k = 0; k < kMetricCount; ++k) pi.transform.matrix[i][k] = get_number(rows[i][k], w);
      }
    });
    optional_field(t, "offset", [&](const json& off) {
      if (!off.is_object()) schema_error(w + ".offset", "expected an object keyed by metric");
      for (const auto& [k, v] : off.items()) {
        auto m = parse_metric(k);
        if (!m) schema_error(w + ".offset", "unknown metric '" + k + "'");
        pi.transform.offset[std::size_t(*m)] = get_number(v, w + ".offset." + k);
      }
    });
  });
  optional_field(j, "overhead", [&](const json& o) {
    const std::string w = where + ".overhead";
    if (!o.is_object()) schema_error(w, "expected an object keyed by overhead kind");
    for (const auto& [kind, row] : o.items()) {
      auto k = parse_overhead_kind(kind);
      if (!k) schema_error(w, "unknown overhead kind '" + kind + "'");
      if (!row.is_object()) schema_error(w + "." + kind, "expected an object keyed by metric");
      for (const auto& [metric, v] : row.items()) {
        auto m = parse_metric(metric);
        if (!m) schema_error(w + "." + kind, "unknown metric '" + metric + "'");
        pi.overhead[std::size_t(*k)][std::size_t(*m)] = get_number(v, w + "." + kind + "." + metric);
      }
    }
  });
  return pi;
}

json instance_to_json(const ProtectionInstance& pi) {
  json j{{"id", pi.id}, {"protection", pi.protection}, {"config", pi.config}};
  json sd = json::object(), cd = json::object();
  for (const auto& [k, d] : pi.step_deltas) sd[k] = delta_to_json(d);
  for (const auto& [k, d] : pi.class_deltas) cd[k] = delta_to_json(d);
  j["step_deltas"] = sd;
  j["class_deltas"] = cd;
  if (!(pi.transform == AffineTransform::identity())) {
    json rows = json::array();
    for (const auto& row : pi.transform.matrix) rows.push_back(row);
    json offset = json::object();
    for (std::size_t i = 0; i < kMetricCount; ++i)
      if (pi.transform.offset[i] != 0.0) offset[std::string(to_string(Metric(i)))] = pi.transform.offset[i];
    j["metric_transform"] = json{{"matrix", rows}, {"offset", offset}};
  }
  json overhead = json::object();
  for (std::size_t k = 0; k < kOverheadCount; ++k) {
    json row = json::object();
    for (std::size_t m = 0; m < kMetricCount; ++m)
      if (pi.overhead[k][m] != 0.0) row[std::string(to_string(Metric(m)))] = pi.overhead[k][m];
    if (!row.empty()) overhead[std::string(to_string(OverheadKind(k)))] = row;
  }
  j["overhead"] = overhead;
  return j;
}

Thresholds thresholds_from_json(const json& j) {
  const std::string where = "thresholds";
  Thresholds t;
  if (!j.is_object()) schema_error(where, "expected an object");
  optional_field(j, "max_depth", [&](const json& v) { t.max_depth = get_int(v, where + ".max_depth"); });
  optional_field(j, "max_paths_per_asset",
                 [&](const json& v) { t.max_paths_per_asset = get_int(v, where + ".max_paths_per_asset"); });
  optional_field(j, "secondary_depth",
                 [&](const json& v) { t.secondary_depth = get_int(v, where + ".secondary_depth"); });
  optional_field(j, "secondary_factor",
                 [&](const json& v) { t.secondary_factor = get_number(v, where + ".secondary_factor"); });
  optional_field(j, "lmax", [&](const json& v) { t.lmax = get_int(v, where + ".lmax"); });
  optional_field(j, "beam_width", [&](const json& v) { t.beam_width = get_int(v, where + ".beam_width"); });
  optional_field(j, "top_k", [&](const json& v) { t.top_k = get_int(v, where + ".top_k"); });
  optional_field(j, "discouraged_default",
                 [&](const json& v) { t.discouraged_default = get_number(v, where + ".discouraged_default"); });
  optional_field(j, "budgets", [&](const json& v) { t.budgets = overhead_from_json(v, t.budgets); });
  optional_field(j, "metric_bands", [&](const json& v) {
    t.metric_bands.clear();
    for (const auto& b : get_array(v, where + ".metric_bands"))
      t.metric_bands.push_back(band_from_json(b, where + ".metric_bands"));
  });
  return t;
}

json thresholds_to_json(const Thresholds& t) {
  json bands = json::array();
  for (const auto& b : t.metric_bands) bands.push_back(band_to_json(b));
  return json{{"max_depth", t.max_depth},
              {"max_paths_per_asset", t.max_paths_per_asset},
              {"secondary_depth", t.secondary_depth},
              {"secondary_factor", t.secondary_factor},
              {"lmax", t.lmax},
              {"beam_width", t.beam_width},
              {"top_k", t.top_k},
              {"discouraged_default", t.discouraged_default},
              {"budgets", overhead_to_json(t.budgets)},
              {"metric_bands", bands}};
}

template <class Matrix>
bool finite_matrix(const Matrix& m) {
  for (const auto& row : m)
    for (double v : row)
      if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace

// -----------------------------------------------------------------------------

json overhead_to_json(const OverheadVector& v) {
  json out = json::object();
  for (std::size_t i = 0; i < kOverheadCount; ++i) out[std::string(to_string(OverheadKind(i)))] = v.values[i];
  return out;
}

OverheadVector overhead_from_json(const json& j, OverheadVector base) {
  if (!j.is_object()) schema_error("overhead vector", "expected an object keyed by overhead kind");
  for (const auto& [k, v] : j.items()) {
    auto kind = parse_overhead_kind(k);
    if (!kind) schema_error("overhead vector", "unknown overhead kind '" + k + "'");
    base[*kind] = get_number(v, "overhead vector." + k);
  }
  return base;
}

json metrics_to_json(const MetricVector& m) {
  json out = json::object();
  for (std::size_t i = 0; i < kMetricCount; ++i) out[std::string(to_string(Metric(i)))] = m.values[i];
  return out;
}

KnowledgeBase parse_kb(std::string_view text) {
  json doc = parse_document(text);
  if (!doc.is_object()) schema_error("knowledge base", "expected a JSON object");

  KnowledgeBase kb;
  optional_field(doc, "thresholds", [&](const json& v) { kb.thresholds = thresholds_from_json(v); });
  optional_field(doc, "attack_steps", [&](const json& v) {
    std::size_t i = 0;
    for (const auto& r : get_array(v, "attack_steps")) kb.rules.push_back(rule_from_json(r, i++));
  });
  optional_field(doc, "protections", [&](const json& v) {
    std::size_t i = 0;
    for (const auto& p : get_array(v, "protections")) kb.protections.push_back(protection_from_json(p, i++));
  });
  optional_field(doc, "protection_instances", [&](const json& v) {
    std::size_t i = 0;
    for (const auto& p : get_array(v, "protection_instances")) kb.instances.push_back(instance_from_json(p, i++));
  });
  optional_field(doc, "precedence", [&](const json& p) {
    const std::string where = "precedence";
    optional_field(p, "forbidden", [&](const json& v) {
      for (const auto& pr : get_array(v, where + ".forbidden"))
        kb.precedence.forbidden.insert(pair_from_json(pr, where + ".forbidden"));
    });
    optional_field(p, "discouraged", [&](const json& v) {
      for (const auto& d : get_array(v, where + ".discouraged")) {
        auto pr = pair_from_json(require(d, "pair", where + ".discouraged"), where + ".discouraged");
        double delta = kb.thresholds.discouraged_default;
        optional_field(d, "delta", [&](const json& x) { delta = get_number(x, where + ".discouraged.delta"); });
        kb.precedence.discouraged[pr] = delta;
      }
    });
    optional_field(p, "synergies", [&](const json& v) {
      for (const auto& s : get_array(v, where + ".synergies")) {
        auto pr = pair_from_json(require(s, "pair", where + ".synergies"), where + ".synergies");
        if (pr.second < pr.first) std::swap(pr.first, pr.second);
        kb.precedence.synergies[pr] = delta_from_json(require(s, "delta", where + ".synergies"),
                                                      where + ".synergies.delta");
      }
    });
    optional_field(p, "correlation_sets", [&](const json& v) {
      for (const auto& set : get_array(v, where + ".correlation_sets")) {
        std::vector<std::string> ids;
        for (const auto& id : get_array(set, where + ".correlation_sets"))
          ids.push_back(get_string(id, where + ".correlation_sets"));
        kb.precedence.correlation_sets.push_back(std::move(ids));
      }
    });
  });
  optional_field(doc, "attacker", [&](const json& a) {
    optional_field(a, "expertise", [&](const json& v) {
      auto e = parse_expertise(get_string(v, "attacker.expertise"));
      if (!e) schema_error("attacker.expertise", "unknown expertise '" + v.get<std::string>() + "'");
      kb.attacker.expertise = *e;
    });
    optional_field(a, "effort_budget",
                   [&](const json& v) { kb.attacker.effort_budget = get_int(v, "attacker.effort_budget"); });
  });
  optional_field(doc, "hiding", [&](const json& h) {
    optional_field(h, "gamma", [&](const json& v) { kb.hiding.gamma = get_int(v, "hiding.gamma"); });
    optional_field(h, "beta_replication",
                   [&](const json& v) { kb.hiding.beta_replication = get_number(v, "hiding.beta_replication"); });
    optional_field(h, "beta_enlargement",
                   [&](const json& v) { kb.hiding.beta_enlargement = get_number(v, "hiding.beta_enlargement"); });
    optional_field(h, "beta_shadowing",
                   [&](const json& v) { kb.hiding.beta_shadowing = get_number(v, "hiding.beta_shadowing"); });
    optional_field(h, "node_limit", [&](const json& v) {
      if (!v.is_number_integer()) schema_error("hiding.node_limit", "expected an integer");
      kb.hiding.node_limit = v.get<long>();
    });
  });
  kb.reindex();
  throw_on_error(validate_kb(kb));
  return kb;
}

KnowledgeBase load_kb(const std::filesystem::path& path) { return parse_kb(read_text_file(path)); }

json kb_to_json(const KnowledgeBase& kb) {
  json rules = json::array(), protections = json::array(), instances = json::array();
  for (const auto& r : kb.rules) rules.push_back(rule_to_json(r));
  for (const auto& p : kb.protections) protections.push_back(protection_to_json(p));
  for (const auto& pi : kb.instances) instances.push_back(instance_to_json(pi));

  json forbidden = json::array(), discouraged = json::array(), synergies = json::array();
  for (const auto& [a, b] : kb.precedence.forbidden) forbidden.push_back({a, b});
  for (const auto& [pr, d] : kb.precedence.discouraged)
    discouraged.push_back(json{{"pair", {pr.first, pr.second}}, {"delta", d}});
  for (const auto& [pr, d] : kb.precedence.synergies)
    synergies.push_back(json{{"pair", {pr.first, pr.second}}, {"delta", delta_to_json(d)}});

  json attacker{{"expertise", std::string(to_string(kb.attacker.expertise))}};
  if (kb.attacker.effort_budget) attacker["effort_budget"] = *kb.attacker.effort_budget;

  return json{{"attack_steps", rules},
              {"protections", protections},
              {"protection_instances", instances},
              {"precedence",
               json{{"forbidden", forbidden},
                    {"discouraged", discouraged},
                    {"synergies", synergies},
                    {"correlation_sets", kb.precedence.correlation_sets}}},
              {"attacker", attacker},
              {"thresholds", thresholds_to_json(kb.thresholds)},
              {"hiding",
               json{{"gamma", kb.hiding.gamma},
                    {"beta_replication", kb.hiding.beta_replication},
                    {"beta_enlargement", kb.hiding.beta_enlargement},
                    {"beta_shadowing", kb.hiding.beta_shadowing},
                    {"node_limit", kb.hiding.node_limit}}}};
}

std::string canonical_dump(const json& j) { return j.dump(2) + "\n"; }

std::string save_kb(const KnowledgeBase& kb) { return canonical_dump(kb_to_json(kb)); }

std::vector<Diagnostic> validate_kb(const KnowledgeBase& kb) {
  std::vector<Diagnostic> out;
  auto error = [&](Error::Kind kind, const std::string& entity, const std::string& msg) {
    out.push_back({Severity::error, kind, entity, msg});
  };
  auto warning = [&](const std::string& entity, const std::string& msg) {
    out.push_back({Severity::warning, Error::Kind::constraint, entity, msg});
  };

  // Rules: ids, attribute ranges, declared predicates with consistent arity.
  std::set<std::string> rule_ids, classes;
  std::map<std::string, std::size_t> arity;
  for (const auto& r : kb.rules) {
    if (!rule_ids.insert(r.id).second) error(Error::Kind::constraint, r.id, "duplicate attack step id");
    if (auto [it, fresh] = arity.emplace(r.head.predicate, r.head.args.size());
        !fresh && it->second != r.head.args.size())
      error(Error::Kind::constraint, r.id, "predicate '" + r.head.predicate + "' used with inconsistent arity");
    for (const auto& c : r.classes) classes.insert(c);
  }
  for (const auto& r : kb.rules) {
    if (!r.derived) {
      for (std::size_t i = 0; i < kAttributeCount; ++i) {
        int v = r.attributes.values[i];
        if (v < 1 || v > 5)
          error(Error::Kind::range, r.id, std::string(to_string(Attribute(i))) + " must be in 1..5");
      }
    } else if (r.premises.empty()) {
      error(Error::Kind::constraint, r.id, "derived rule needs at least one premise");
    }
    for (const auto& p : r.premises) {
      auto it = arity.find(p.predicate);
      if (it == arity.end())
        error(Error::Kind::reference, r.id, "premise names undeclared predicate '" + p.predicate + "'");
      else if (it->second != p.args.size())
        error(Error::Kind::constraint, r.id, "predicate '" + p.predicate + "' used with inconsistent arity");
    }
    for (const auto& m : r.metric_modifiers)
      if (m.low > m.high) error(Error::Kind::range, r.id, "metric modifier low threshold exceeds high threshold");
  }

  std::set<std::string> protection_ids;
  for (const auto& p : kb.protections) {
    if (!protection_ids.insert(p.id).second) error(Error::Kind::constraint, p.id, "duplicate protection id");
    if (!(p.resilience > 0.0 && p.resilience <= 1.0))
      error(Error::Kind::range, p.id, "resilience must be in (0,1]");
    if (!(p.fingerprint >= 0.0 && p.fingerprint <= 1.0))
      error(Error::Kind::range, p.id, "fingerprint must be in [0,1]");
    if (p.requirements.empty()) warning(p.id, "protection addresses no requirement");
  }

  std::set<std::string> instance_ids;
  for (const auto& pi : kb.instances) {
    if (!instance_ids.insert(pi.id).second) error(Error::Kind::constraint, pi.id, "duplicate protection instance id");
    if (!protection_ids.contains(pi.protection))
      error(Error::Kind::reference, pi.id, "unknown protection '" + pi.protection + "'");
    for (const auto& [k, _] : pi.step_deltas)
      if (!rule_ids.contains(k)) error(Error::Kind::reference, pi.id, "delta targets unknown attack step '" + k + "'");
    for (const auto& [k, _] : pi.class_deltas)
      if (!classes.contains(k)) warning(pi.id, "delta targets step class '" + k + "' carried by no rule");
    if (!finite_matrix(pi.transform.matrix) || !finite_matrix(std::array<std::array<double, kMetricCount>, 1>{pi.transform.offset}))
      error(Error::Kind::range, pi.id, "metric transform must be finite");
    for (const auto& row : pi.overhead)
      for (double v : row)
        if (!std::isfinite(v) || v < 0.0) error(Error::Kind::range, pi.id, "overhead coefficients must be finite and >= 0");
    if (!pi.has_deltas()) warning(pi.id, "protection instance has no attribute deltas");
  }

  auto check_pair = [&](const PiPair& pr, const char* what) {
    for (const auto* id : {&pr.first, &pr.second})
      if (!instance_ids.contains(*id))
        error(Error::Kind::reference, pr.first + "," + pr.second,
              std::string(what) + " pair names unknown protection instance '" + *id + "'");
  };
  for (const auto& pr : kb.precedence.forbidden) check_pair(pr, "forbidden");
  for (const auto& [pr, delta] : kb.precedence.discouraged) {
    check_pair(pr, "discouraged");
    if (kb.precedence.forbidden.contains(pr))
      error(Error::Kind::constraint, pr.first + "," + pr.second, "pair is both forbidden and discouraged");
    if (!(delta > 0.0 && delta < 1.0))
      error(Error::Kind::range, pr.first + "," + pr.second, "discouraged penalty must be in (0,1)");
  }
  for (const auto& [pr, _] : kb.precedence.synergies) {
    check_pair(pr, "synergy");
    if (pr.first == pr.second) error(Error::Kind::constraint, pr.first, "synergy pair needs two distinct instances");
  }
  std::set<std::string> correlated;
  for (const auto& set : kb.precedence.correlation_sets)
    for (const auto& id : set)
      if (!correlated.insert(id).second)
        error(Error::Kind::constraint, id, "part appears in more than one correlation set");

  if (kb.attacker.effort_budget && *kb.attacker.effort_budget <= 0)
    error(Error::Kind::range, "attacker", "effort budget must be positive");

  const auto& t = kb.thresholds;
  if (t.max_depth < 1) error(Error::Kind::range, "thresholds", "max_depth must be positive");
  if (t.max_paths_per_asset < 1) error(Error::Kind::range, "thresholds", "max_paths_per_asset must be positive");
  if (t.secondary_depth < 0) error(Error::Kind::range, "thresholds", "secondary_depth must be >= 0");
  if (!(t.secondary_factor > 0.0 && t.secondary_factor <= 1.0))
    error(Error::Kind::range, "thresholds", "secondary_factor must be in (0,1]");
  if (t.lmax < 1) error(Error::Kind::range, "thresholds", "lmax must be positive");
  if (t.beam_width < 1) error(Error::Kind::range, "thresholds", "beam_width must be positive");
  if (t.top_k < 1) error(Error::Kind::range, "thresholds", "top_k must be positive");
  if (!(t.discouraged_default > 0.0 && t.discouraged_default < 1.0))
    error(Error::Kind::range, "thresholds", "discouraged_default must be in (0,1)");
  for (double b : t.budgets.values)
    if (!(b >= 0.0)) error(Error::Kind::range, "thresholds", "budgets must be >= 0");
  for (const auto& b : t.metric_bands)
    if (b.low > b.high) error(Error::Kind::range, "thresholds", "metric band low threshold exceeds high threshold");

  const auto& h = kb.hiding;
  if (h.gamma < 1) error(Error::Kind::range, "hiding", "gamma must be >= 1");
  if (h.beta_replication < 0 || h.beta_enlargement < 0 || h.beta_shadowing < 0)
    error(Error::Kind::range, "hiding", "hiding coefficients must be >= 0");
  if (h.node_limit < 1) error(Error::Kind::range, "hiding", "node_limit must be positive");
  return out;
}

// -----------------------------------------------------------------------------

ApplicationModel parse_app(std::string_view text) {
  json doc = parse_document(text);
  if (!doc.is_object()) schema_error("application model", "expected a JSON object");
  ApplicationModel app;
  optional_field(doc, "parts", [&](const json& v) {
    std::size_t i = 0;
    for (const auto& p : get_array(v, "parts")) {
      std::string where = "parts[" + std::to_string(i++) + "]";
      ApplicationPart part;
      part.id = get_string(require(p, "id", where), where + ".id");
      where = "part '" + part.id + "'";
      auto kind = get_string(require(p, "kind", where), where + ".kind");
      auto k = parse_part_kind(kind);
      if (!k) schema_error(where, "unknown part kind '" + kind + "'");
      part.kind = *k;
      part.name = part.id;
      optional_field(p, "name", [&](const json& x) { part.name = get_string(x, where + ".name"); });
      optional_field(p, "parent", [&](const json& x) { part.parent = get_string(x, where + ".parent"); });
      optional_field(p, "span", [&](const json& s) {
        part.span.file = get_string(require(s, "file", where + ".span"), where + ".span.file");
        part.span.line_begin = get_int(require(s, "line_begin", where + ".span"), where + ".span.line_begin");
        part.span.line_end = get_int(require(s, "line_end", where + ".span"), where + ".span.line_end");
      });
      optional_field(p, "metrics", [&](const json& m) {
        if (!m.is_object()) schema_error(where + ".metrics", "expected an object");
        for (const auto& [name, v] : m.items()) {
          auto metric = parse_metric(name);
          if (!metric) schema_error(where + ".metrics", "unknown metric '" + name + "'");
          part.metrics[*metric] = get_number(v, where + ".metrics." + name);
        }
      });
      app.parts.push_back(std::move(part));
    }
  });
  optional_field(doc, "assets", [&](const json& v) {
    std::size_t i = 0;
    for (const auto& a : get_array(v, "assets")) {
      std::string where = "assets[" + std::to_string(i++) + "]";
      Asset asset;
      asset.part = get_string(require(a, "part", where), where + ".part");
      asset.requirements = requirements_from_json(require(a, "requirements", where), where + ".requirements");
      optional_field(a, "weight", [&](const json& x) { asset.weight = get_number(x, where + ".weight"); });
      optional_field(a, "role", [&](const json& x) {
        auto role = get_string(x, where + ".role");
        if (role == "primary") asset.role = AssetRole::primary;
        else if (role == "secondary") asset.role = AssetRole::secondary;
        else schema_error(where, "unknown asset role '" + role + "'");
      });
      app.assets.push_back(asset);
    }
  });
  optional_field(doc, "call_edges", [&](const json& v) {
    for (const auto& e : get_array(v, "call_edges")) app.call_edges.push_back(pair_from_json(e, "call_edges"));
  });
  optional_field(doc, "adjacency", [&](const json& v) {
    for (const auto& e : get_array(v, "adjacency")) app.adjacency.push_back(pair_from_json(e, "adjacency"));
  });
  throw_on_error(validate_app(app));
  return app;
}

ApplicationModel load_app(const std::filesystem::path& path) { return parse_app(read_text_file(path)); }

json app_to_json(const ApplicationModel& app) {
  json parts = json::array(), assets = json::array(), calls = json::array(), adjacency = json::array();
  for (const auto& p : app.parts) {
    json jp{{"id", p.id},
            {"kind", std::string(to_string(p.kind))},
            {"name", p.name},
            {"span", json{{"file", p.span.file}, {"line_begin", p.span.line_begin}, {"line_end", p.span.line_end}}},
            {"metrics", metrics_to_json(p.metrics)}};
    if (p.parent) jp["parent"] = *p.parent;
    parts.push_back(std::move(jp));
  }
  for (const auto& a : app.assets)
    assets.push_back(json{{"part", a.part},
                          {"requirements", requirements_to_json(a.requirements)},
                          {"weight", a.weight},
                          {"role", a.role == AssetRole::primary ? "primary" : "secondary"}});
  for (const auto& [a, b] : app.call_edges) calls.push_back({a, b});
  for (const auto& [a, b] : app.adjacency) adjacency.push_back({a, b});
  return json{{"parts", parts}, {"assets", assets}, {"call_edges", calls}, {"adjacency", adjacency}};
}

std::string save_app(const ApplicationModel& app) { return canonical_dump(app_to_json(app)); }

std::vector<Diagnostic> validate_app(const ApplicationModel& app) {
  std::vector<Diagnostic> out;
  auto error = [&](Error::Kind kind, const std::string& entity, const std::string& msg) {
    out.push_back({Severity::error, kind, entity, msg});
  };
  std::map<std::string, const ApplicationPart*> parts;
  for (const auto& p : app.parts)
    if (!parts.emplace(p.id, &p).second) error(Error::Kind::constraint, p.id, "duplicate part id");

  for (const auto& p : app.parts) {
    if (p.parent) {
      auto it = parts.find(*p.parent);
      if (it == parts.end()) {
        error(Error::Kind::reference, p.id, "parent '" + *p.parent + "' does not exist");
      } else if (p.kind == PartKind::code_region && it->second->kind != PartKind::function) {
        error(Error::Kind::constraint, p.id, "code-region parent must be a function");
      }
    }
    // Walk the parent chain; a chain longer than the part count is a cycle.
    const ApplicationPart* cur = &p;
    for (std::size_t steps = 0; cur && cur->parent; ++steps) {
      if (steps > app.parts.size()) {
        error(Error::Kind::constraint, p.id, "containment cycle");
        break;
      }
      auto it = parts.find(*cur->parent);
      cur = it == parts.end() ? nullptr : it->second;
    }
    if (p.span.line_begin > p.span.line_end) error(Error::Kind::range, p.id, "span begins after it ends");
    for (double v : p.metrics.values)
      if (!std::isfinite(v) || v < 0) error(Error::Kind::range, p.id, "metrics must be finite and non-negative");
    if (p.kind == PartKind::function && p.metrics[Metric::cyclomatic] < 1)
      error(Error::Kind::range, p.id, "cyclomatic complexity of a function must be >= 1");
  }
  std::set<std::string> asset_parts;
  for (const auto& a : app.assets) {
    if (!parts.contains(a.part)) error(Error::Kind::reference, a.part, "asset references unknown part");
    if (!asset_parts.insert(a.part).second) error(Error::Kind::constraint, a.part, "part carries more than one asset");
    if (!(a.weight > 0.0) || !std::isfinite(a.weight)) error(Error::Kind::range, a.part, "asset weight must be > 0");
    if (a.requirements.empty()) error(Error::Kind::range, a.part, "asset requirements must be non-empty");
  }
  for (const auto& [a, b] : app.call_edges)
    for (const auto* id : {&a, &b})
      if (!parts.contains(*id)) error(Error::Kind::reference, *id, "call edge references unknown part");
  for (const auto& [a, b] : app.adjacency)
    for (const auto* id : {&a, &b})
      if (!parts.contains(*id)) error(Error::Kind::reference, *id, "adjacency references unknown part");
  return out;
}

std::vector<Diagnostic> validate_pair(const KnowledgeBase& kb, const ApplicationModel& app) {
  std::vector<Diagnostic> out;
  for (const auto& set : kb.precedence.correlation_sets)
    for (const auto& id : set)
      if (!app.find_part(id))
        out.push_back({Severity::error, Error::Kind::reference, id, "correlation set names unknown part"});
  return out;
}

void throw_on_error(const std::vector<Diagnostic>& diags) {
  for (const auto& d : diags)
    if (d.severity == Severity::error) throw Error(d.kind, d.entity + ": " + d.message);
}

// -----------------------------------------------------------------------------

Session::Session(KnowledgeBase kb, ApplicationModel app) : kb_(std::move(kb)), app_(std::move(app)) {
  kb_.reindex();
  std::string kb_text = save_kb(kb_);
  std::string payload = kb_text;
  payload.push_back('\0');
  payload += save_app(app_);
  hash_ = sha256_hex(payload);
  kb_hash_ = sha256_hex(kb_text);
}

std::shared_ptr<const Session> snapshot(KnowledgeBase kb, ApplicationModel app) {
  return std::make_shared<const Session>(std::move(kb), std::move(app));
}

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw Error(Error::Kind::internal, "SHA-256 digest failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xf]);
  }
  return out;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Error::Kind::io, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Error::Kind::io, "cannot write '" + path.string() + "'");
  out.write(text.data(), std::streamsize(text.size()));
}

}  // namespace esp
