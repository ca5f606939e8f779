#include "esp/demo.hpp"

#include <array>
#include <sstream>

namespace esp::demo {

namespace {

json rule(const char* id, const char* head, std::vector<std::string> premises, std::array<int, 4> attrs,
          std::vector<std::string> classes) {
  return json{{"id", id},
              {"head", head},
              {"premises", premises},
              {"attributes",
               {{"complexity", attrs[0]},
                {"required_skill", attrs[1]},
                {"tool_availability", attrs[2]},
                {"tool_usability", attrs[3]}}},
              {"classes", classes}};
}

json derived(const char* id, const char* head, std::vector<std::string> premises) {
  return json{{"id", id}, {"head", head}, {"premises", premises}, {"derived", true}};
}

struct ProtectionSpec {
  const char* id;
  const char* prefix;
  std::vector<std::string> requirements;
  bool singleton;
  double resilience;
  double fingerprint;
};

const std::array<ProtectionSpec, 6> kProtections{{
    {"control_flow_flattening", "cff", {"confidentiality", "integrity"}, false, 0.6, 0.7},
    {"opaque_predicates", "opq", {"confidentiality", "integrity"}, false, 0.5, 0.4},
    {"anti_debugging", "adb", {"confidentiality", "integrity"}, true, 0.8, 0.9},
    {"code_mobility", "mob", {"confidentiality"}, true, 0.7, 0.5},
    {"data_obfuscation", "dob", {"confidentiality", "integrity"}, false, 0.4, 0.3},
    {"remote_attestation", "rat", {"integrity"}, true, 0.9, 0.6},
}};

json identity_matrix() {
  json rows = json::array();
  for (std::size_t i = 0; i < kMetricCount; ++i) {
    json row = json::array();
    for (std::size_t k = 0; k < kMetricCount; ++k) row.push_back(i == k ? 1.0 : 0.0);
    rows.push_back(row);
  }
  return rows;
}

json instance(int index) {
  const auto& p = kProtections[std::size_t(index) % kProtections.size()];
  const int level = index / int(kProtections.size()) + 1;
  const double L = level;
  json pi{{"id", std::string(p.prefix) + "-" + std::to_string(level)},
          {"protection", p.id},
          {"config", "level=" + std::to_string(level)}};
  json matrix = identity_matrix();
  json offset = json::object();
  json classes = json::object();
  json overhead = json::object();
  switch (index % 6) {
    case 0:
      classes["static"] = {{"complexity", level}};
      classes["dynamic"] = {{"complexity", 1}};
      matrix[0][0] = 1.0 + 0.25 * L;
      matrix[1][1] = 1.0 + L;
      matrix[3][3] = 1.0 + 0.5 * L;
      overhead["client_time"] = {{"sloc", 0.04 * L}, {"cyclomatic", 0.1 * L}};
      overhead["client_memory"] = {{"sloc", 0.02 * L}};
      break;
    case 1:
      classes["static"] = {{"tool_usability", -level}};
      offset = {{"sloc", 4 * L}, {"cyclomatic", 3 * L}, {"halstead_volume", 40 * L}};
      overhead["client_time"] = {{"cyclomatic", 0.15 * L}};
      break;
    case 2:
      classes["dynamic"] = {{"required_skill", 1}, {"tool_availability", -level}};
      overhead["client_time"] = {{"sloc", 0.01 * L}};
      overhead["client_memory"] = {{"sloc", 0.03 * L}};
      break;
    case 3:
      classes["static"] = {{"complexity", 2}, {"tool_availability", -level}};
      overhead["network_traffic"] = {{"sloc", 0.08 * L}};
      overhead["server_time"] = {{"sloc", 0.04 * L}};
      break;
    case 4:
      classes["extract"] = {{"complexity", level}};
      matrix[4][4] = 1.0 + L;
      matrix[3][3] = 1.2;
      overhead["client_time"] = {{"operand_count", 0.05 * L}};
      overhead["client_memory"] = {{"operand_count", 0.02 * L}};
      break;
    default:
      classes["tamper"] = {{"required_skill", 1}, {"complexity", level}};
      overhead["server_time"] = {{"sloc", 0.06 * L}};
      overhead["network_traffic"] = {{"sloc", 0.03 * L}};
      break;
  }
  pi["class_deltas"] = classes;
  pi["metric_transform"] = {{"matrix", matrix}, {"offset", offset}};
  pi["overhead"] = overhead;
  return pi;
}

std::string function_text(const std::string& name, const std::string& callee, int blocks, int seed) {
  std::ostringstream o;
  o << "int " << name << "(const unsigned char *buf, int n) {\n";
  o << "  int i, acc = " << seed << ";\n";
  for (int b = 0; b < blocks; ++b) {
    const int k = (seed * 7 + b * 13) % 200 + 17;
    o << "  for (i = 0; i < n; i++) {\n";
    o << "    if (buf[i] > " << k << " && acc != " << b << ") {\n";
    o << "      acc += buf[i] * " << (b + 3) << ";\n";
    o << "    } else {\n";
    o << "      acc ^= buf[i] << " << (b % 5 + 1) << ";\n";
    o << "    }\n";
    o << "  }\n";
  }
  if (!callee.empty()) o << "  acc += " << callee << "(buf, n - 1);\n";
  o << "  return acc;\n";
  o << "}\n";
  return o.str();
}

}  // namespace

json knowledge_base(int pi_count) {
  json rules = json::array({
      derived("breach_conf", "breached(confidentiality,V)", {"locate(V)", "extract(V)"}),
      derived("breach_integ", "breached(integrity,V)", {"locate(V)", "tamper(V)"}),
      rule("static_locate", "locate(V)", {}, {2, 2, 4, 3}, {"static"}),
      rule("dyn_locate", "locate(V)", {"app_running()"}, {3, 2, 4, 3}, {"dynamic"}),
      rule("app_running", "app_running()", {}, {1, 1, 5, 5}, {"setup"}),
      rule("attach_debugger", "debugger_attached()", {"app_running()"}, {2, 2, 5, 4}, {"dynamic"}),
      rule("static_extract", "extract(V)", {}, {4, 3, 3, 3}, {"static", "extract"}),
      rule("dyn_extract", "extract(V)", {"debugger_attached()"}, {3, 3, 4, 3}, {"dynamic", "extract"}),
      rule("binary_patch", "tamper(V)", {}, {3, 3, 4, 3}, {"static", "tamper"}),
      rule("dyn_tamper", "tamper(V)", {"debugger_attached()"}, {3, 4, 3, 3}, {"dynamic", "tamper"}),
  });

  json protections = json::array();
  for (const auto& p : kProtections)
    protections.push_back(json{{"id", p.id},
                               {"requirements", p.requirements},
                               {"singleton", p.singleton},
                               {"resilience", p.resilience},
                               {"fingerprint", p.fingerprint}});

  json instances = json::array();
  std::vector<std::string> ids;
  for (int i = 0; i < pi_count; ++i) {
    instances.push_back(instance(i));
    ids.push_back(instances.back().at("id").get<std::string>());
  }
  auto with_prefix = [&](const std::string& prefix) {
    std::vector<std::string> out;
    for (const auto& id : ids)
      if (id.starts_with(prefix + "-")) out.push_back(id);
    return out;
  };

  // Mobile code cannot be flattened afterwards; anti-debugging under opaque
  // predicates works but weakens both.
  json forbidden = json::array(), discouraged = json::array(), synergies = json::array();
  for (const auto& m : with_prefix("mob"))
    for (const auto& c : with_prefix("cff")) forbidden.push_back({m, c});
  for (const auto& a : with_prefix("adb"))
    for (const auto& q : with_prefix("opq")) discouraged.push_back(json{{"pair", {a, q}}, {"delta", 0.85}});
  if (pi_count > 1) synergies.push_back(json{{"pair", {"cff-1", "opq-1"}}, {"delta", {{"complexity", 1}}}});

  return json{{"attack_steps", rules},
              {"protections", protections},
              {"protection_instances", instances},
              {"precedence",
               {{"forbidden", forbidden},
                {"discouraged", discouraged},
                {"synergies", synergies},
                {"correlation_sets", json::array()}}},
              {"attacker", {{"expertise", "professional"}}},
              {"thresholds",
               {{"secondary_depth", 0},
                {"lmax", 3},
                {"budgets",
                 {{"client_time", 4.0},
                  {"server_time", 3.0},
                  {"client_memory", 2.0},
                  {"server_memory", 0.0},
                  {"network_traffic", 2.0}}}}},
              {"hiding", {{"gamma", 2}}}};
}

std::vector<SourceFile> sources() {
  struct Fn {
    std::string name;
    int blocks;
  };
  struct File {
    std::string path;
    std::vector<Fn> fns;
  };
  const std::vector<File> files{
      {"core.c", {{"update_balance", 3}, {"apply_fee", 4}, {"round_amount", 3}, {"log_entry", 3}}},
      {"crypto.c", {{"derive_key", 4}, {"mix_round", 4}, {"expand_block", 3}, {"wipe_state", 3}}},
      {"license.c", {{"check_license", 3}, {"parse_serial", 4}, {"checksum", 3}, {"report_status", 3}}},
      {"util.c", {{"decode_blob", 3}, {"read_header", 4}, {"skip_padding", 3}, {"copy_bytes", 3}}},
  };

  std::vector<SourceFile> out;
  int seed = 5;
  for (const auto& f : files) {
    std::ostringstream o;
    o << "/* " << f.path << " */\n\n";
    for (const auto& fn : f.fns) o << "int " << fn.name << "(const unsigned char *buf, int n);\n";
    o << "\n";
    for (std::size_t i = 0; i < f.fns.size(); ++i) {
      const std::string callee = i + 1 < f.fns.size() ? f.fns[i + 1].name : "";
      std::string body = function_text(f.fns[i].name, callee, f.fns[i].blocks, seed++);
      const auto& name = f.fns[i].name;
      if (name == "check_license") {
        o << "#pragma esp asset begin(integrity, weight=2.0)\n" << body << "#pragma esp asset end\n";
      } else if (name == "update_balance") {
        o << "#pragma esp asset begin(integrity, weight=1.5)\n" << body << "#pragma esp asset end\n";
      } else if (name == "derive_key" || name == "decode_blob") {
        // Annotate the second loop of the body as an asset region.
        const bool key = name == "derive_key";
        std::string open = key ? "#pragma esp asset begin(confidentiality, weight=3.0, id=key_schedule)\n"
                               : "#pragma esp asset begin(confidentiality, integrity, id=blob_key)\n";
        std::size_t first = body.find("  for (");
        std::size_t second = body.find("  for (", first + 1);
        std::size_t third = body.find("  for (", second + 1);
        body.insert(third, "#pragma esp asset end\n");
        body.insert(second, open);
        o << body;
      } else {
        o << body;
      }
      o << "\n";
    }
    out.push_back(SourceFile{f.path, o.str()});
  }
  return out;
}

}  // namespace esp::demo
