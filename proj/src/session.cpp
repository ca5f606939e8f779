#include "esp/session.hpp"

#include <algorithm>
#include <sstream>

#include "esp/ingest.hpp"

namespace esp {

namespace {

const std::vector<std::string> kAssessmentArtifacts = {"attacks.json", "risk_report.json", "risk_report.md"};
const std::vector<std::string> kMitigationArtifacts = {"solutions.json"};
const std::vector<std::string> kHidingArtifacts = {"hidden_solution.json", "hiding_model.lp"};

json diagnostics_to_json(const std::vector<Diagnostic>& diags) {
  json out = json::array();
  for (const auto& d : diags)
    out.push_back(json{{"severity", d.severity == Severity::error ? "error" : "warning"},
                       {"kind", std::string(to_string(d.kind))},
                       {"entity", d.entity},
                       {"message", d.message}});
  return out;
}

std::vector<std::string> plan_files(const fs::path& dir) {
  std::vector<std::string> out;
  if (!fs::exists(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir)) {
    auto name = e.path().filename().string();
    if (name.starts_with("plan_") && name.ends_with(".json")) out.push_back(name);
  }
  std::sort(out.begin(), out.end());
  return out;
}

void drop_stages(const SessionStore& store, const std::vector<std::string>& stages) {
  for (const auto& stage : stages) {
    if (stage == "assessment")
      for (const auto& a : kAssessmentArtifacts) store.remove(a);
    if (stage == "mitigation")
      for (const auto& a : kMitigationArtifacts) store.remove(a);
    if (stage == "hiding")
      for (const auto& a : kHidingArtifacts) store.remove(a);
    if (stage == "plan")
      for (const auto& a : plan_files(store.dir())) store.remove(a);
  }
  if (!store.has("manifest.json")) return;
  json m = store.manifest();
  for (const auto& stage : stages) {
    if (m.contains("stages")) m["stages"].erase(stage);
    if (stage == "plan") m["plans"] = json::object();
  }
  store.write_json("manifest.json", m);
}

json attacker_json(const AttackerModel& a) {
  json j{{"expertise", std::string(to_string(a.expertise))}};
  if (a.effort_budget) j["effort_budget"] = *a.effort_budget;
  return j;
}

void require_non_negative(const OverheadVector& v) {
  for (std::size_t k = 0; k < kOverheadCount; ++k)
    if (!(v.values[k] >= 0.0))
      throw Error(Error::Kind::usage, "budget " + std::string(to_string(OverheadKind(k))) + " must be >= 0");
}

struct ResolvedMitigation {
  OverheadVector budgets;
  int lmax;
  int effort;
  int top_k;
  int beam_width;
};

ResolvedMitigation resolve(const Session& s, const MitigateOptions& o) {
  const auto& t = s.kb().thresholds;
  ResolvedMitigation r{o.budgets.value_or(t.budgets), o.lmax.value_or(t.lmax),
                       o.effort.value_or(s.kb().attacker.effort(s.app())), o.top_k.value_or(t.top_k),
                       o.beam_width.value_or(t.beam_width)};
  for (const auto& [name, value] : o.budget_overrides) {
    auto k = parse_overhead_kind(name);
    if (!k) throw Error(Error::Kind::usage, "unknown overhead kind '" + name + "'");
    r.budgets[*k] = value;
  }
  require_non_negative(r.budgets);
  if (r.lmax < 0) throw Error(Error::Kind::usage, "lmax must be >= 0");
  if (r.effort < 0) throw Error(Error::Kind::usage, "effort must be >= 0");
  if (r.top_k < 1) throw Error(Error::Kind::usage, "top must be >= 1");
  if (r.beam_width < 1) throw Error(Error::Kind::usage, "beam width must be >= 1");
  return r;
}

ResolvedMitigation stored_options(const SessionStore& store, const Session& s) {
  MitigateOptions o;
  if (store.has("solutions.json")) {
    json opts = store.read_json("solutions.json").at("options");
    o.budgets = overhead_from_json(opts.at("budgets"));
    o.lmax = opts.at("lmax").get<int>();
    o.effort = opts.at("effort").get<int>();
    o.top_k = opts.at("top_k").get<int>();
    o.beam_width = opts.at("beam_width").get<int>();
  }
  return resolve(s, o);
}

}  // namespace

// -----------------------------------------------------------------------------

SessionStore::SessionStore(fs::path dir) : dir_(std::move(dir)) {}

bool SessionStore::has(const std::string& artifact) const { return fs::exists(dir_ / artifact); }

json SessionStore::read_json(const std::string& artifact) const {
  if (!has(artifact)) throw Error(Error::Kind::io, "session has no " + artifact);
  try {
    return json::parse(read_text_file(dir_ / artifact));
  } catch (const json::exception& e) {
    throw Error(Error::Kind::parse, artifact + ": " + e.what());
  }
}

std::string SessionStore::read_text(const std::string& artifact) const {
  if (!has(artifact)) throw Error(Error::Kind::io, "session has no " + artifact);
  return read_text_file(dir_ / artifact);
}

void SessionStore::write_json(const std::string& artifact, const json& j) const {
  write_text(artifact, canonical_dump(j));
}

void SessionStore::write_text(const std::string& artifact, std::string_view text) const {
  fs::create_directories(dir_);
  write_text_file(dir_ / artifact, text);
}

void SessionStore::remove(const std::string& artifact) const {
  std::error_code ec;
  fs::remove(dir_ / artifact, ec);
}

Session SessionStore::load_session() const {
  return Session(parse_kb(read_text("kb.json")), parse_app(read_text("app.json")));
}

std::vector<AttackPath> SessionStore::load_paths() const {
  return paths_from_json(read_json("attacks.json").at("paths"));
}

json SessionStore::manifest() const {
  if (!has("manifest.json")) return json{{"stages", json::object()}, {"plans", json::object()}};
  return read_json("manifest.json");
}

void SessionStore::record_stage(const std::string& stage, const std::vector<std::string>& artifacts) const {
  json m = manifest();
  json hashes = json::object();
  for (const auto& a : artifacts) hashes[a] = sha256_hex(read_text(a));
  m["stages"][stage] = json{{"kb_hash", sha256_hex(read_text("kb.json"))}, {"artifacts", hashes}};
  write_json("manifest.json", m);
}

// -----------------------------------------------------------------------------

void analyze(const fs::path& dir, const AnalyzeInput& input) {
  KnowledgeBase kb;
  if (input.kb_text) kb = parse_kb(*input.kb_text);
  else if (input.kb_path) kb = load_kb(*input.kb_path);
  else throw Error(Error::Kind::usage, "a knowledge base is required");

  ApplicationModel app;
  if (input.model_text) {
    app = parse_app(*input.model_text);
  } else if (input.model_path) {
    app = load_app(*input.model_path);
  } else {
    std::vector<SourceFile> files = input.src_files;
    if (input.src_root) files = read_sources(*input.src_root);
    if (files.empty()) throw Error(Error::Kind::usage, "an application model or C sources are required");
    std::sort(files.begin(), files.end(), [](const SourceFile& a, const SourceFile& b) { return a.path < b.path; });
    app = scan_files(files);
    auto cg = build_call_graph(app, files);
    attach_secondary_assets(app, cg, kb.thresholds.secondary_depth, kb.thresholds.secondary_factor);
  }
  throw_on_error(validate_pair(kb, app));
  Session session(kb, app);

  SessionStore store(dir);
  drop_stages(store, {"assessment", "mitigation", "hiding", "plan"});
  store.remove("FAILED");
  store.write_text("kb.json", save_kb(session.kb()));
  store.write_text("app.json", save_app(session.app()));
  json m{{"session", session.hash()},
         {"kb_hash", session.kb_hash()},
         {"stages", json::object()},
         {"plans", json::object()}};
  store.write_json("manifest.json", m);
  store.record_stage("framing", {"kb.json", "app.json"});
}

void assess(const fs::path& dir) {
  SessionStore store(dir);
  Session session = store.load_session();
  const auto& kb = session.kb();
  auto inferred = infer_paths(session, {kb.thresholds.max_depth, kb.thresholds.max_paths_per_asset});
  auto gated = gate_by_attacker(inferred, kb, kb.attacker);

  MitigationContext ctx(session, gated, kb.thresholds.lmax);
  auto report = ctx.assess({});

  drop_stages(store, {"mitigation", "hiding", "plan"});
  store.write_json("attacks.json", json{{"attacker", attacker_json(kb.attacker)},
                                        {"limits",
                                         {{"max_depth", kb.thresholds.max_depth},
                                          {"max_paths_per_asset", kb.thresholds.max_paths_per_asset}}},
                                        {"inferred", inferred.size()},
                                        {"gated_out", inferred.size() - gated.size()},
                                        {"paths", paths_to_json(gated)}});
  store.write_json("risk_report.json", risk_report_to_json(report, gated, kb, kb.attacker));
  store.write_text("risk_report.md", risk_report_markdown(report, gated, kb.attacker));
  store.record_stage("assessment", kAssessmentArtifacts);
}

json mitigate(const fs::path& dir, const MitigateOptions& options) {
  SessionStore store(dir);
  Session session = store.load_session();
  auto paths = store.load_paths();
  auto opts = resolve(session, options);

  MitigationContext ctx(session, paths, opts.lmax);
  auto suitable = suitable_pis(session, paths);
  CandidateSearchOptions cso;
  cso.budgets = opts.budgets;
  cso.beam_width = opts.beam_width;
  cso.parallel = options.parallel;
  auto found = search_candidates(ctx, suitable, cso);
  auto ranked = play_game(ctx, found.beam, opts.effort, options.search, options.parallel);
  if (int(ranked.size()) > opts.top_k) ranked.resize(std::size_t(opts.top_k));

  json sols = json::array();
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    json s = solution_to_json(ranked[i].solution);
    s["id"] = "sol-" + std::to_string(i + 1);
    s["rank"] = i + 1;
    s["game_value"] = ranked[i].game_value;
    sols.push_back(std::move(s));
  }
  json out{{"options",
            {{"budgets", overhead_to_json(opts.budgets)},
             {"lmax", opts.lmax},
             {"effort", opts.effort},
             {"top_k", opts.top_k},
             {"beam_width", opts.beam_width}}},
           {"suitable", suitable},
           {"vanilla_risk", ctx.assess({}).application_risk},
           {"enumerated", found.enumerated},
           {"evaluated", found.beam.size()},
           {"solutions", sols}};
  drop_stages(store, {"hiding", "plan"});
  store.write_json("solutions.json", out);
  store.record_stage("mitigation", kMitigationArtifacts);
  return out;
}

json find_solution(const fs::path& dir, const std::string& id) {
  SessionStore store(dir);
  if (id == "hidden") {
    json h = store.read_json("hidden_solution.json").at("solution");
    h["id"] = "hidden";
    return h;
  }
  const json sols = store.read_json("solutions.json");
  for (const auto& s : sols.at("solutions"))
    if (s.at("id") == id) return s;
  throw Error(Error::Kind::reference, "unknown solution id '" + id + "'");
}

json hide_solution(const fs::path& dir, const HideOptions& options) {
  SessionStore store(dir);
  Session session = store.load_session();
  auto paths = store.load_paths();
  auto opts = stored_options(store, session);
  json stored = find_solution(dir, options.solution);
  Solution base = solution_from_json(stored);
  const int gamma = options.gamma.value_or(session.kb().hiding.gamma);

  MitigationContext ctx(session, paths, opts.lmax);
  auto model = build_hiding_model(ctx, base, opts.budgets, gamma);
  HidingResult result = solve_hiding(ctx, model, session.kb().hiding.node_limit);
  json out = hiding_result_to_json(model, result);
  out["source"] = options.solution;
  store.remove("plan_hidden.json");
  store.write_json("hidden_solution.json", out);
  store.write_text("hiding_model.lp", hiding_model_lp(model));
  store.record_stage("hiding", kHidingArtifacts);
  return out;
}

json export_plan(const fs::path& dir, const std::string& solution_id) {
  SessionStore store(dir);
  Session session = store.load_session();
  Solution s = solution_from_json(find_solution(dir, solution_id));
  json directives = json::array();
  for (const auto& a : s.applied) {
    const auto* pi = session.kb().find_instance(a.pi);
    if (!pi) throw Error(Error::Kind::reference, "solution names unknown PI '" + a.pi + "'");
    directives.push_back(json{{"action", "apply"},
                              {"pi", a.pi},
                              {"protection", pi->protection},
                              {"part", a.part},
                              {"layer", a.layer},
                              {"config", pi->config}});
  }
  for (const auto& e : s.enlargements) {
    const auto* pi = session.kb().find_instance(e.pi);
    directives.push_back(json{{"action", "extend"},
                              {"pi", e.pi},
                              {"protection", pi ? pi->protection : ""},
                              {"part", e.to},
                              {"from", e.from},
                              {"config", pi ? pi->config : ""}});
  }
  const std::string hash = sha256_hex(canonical_dump(directives));
  json plan{{"solution", solution_id}, {"session", session.hash()}, {"directives", directives}, {"hash", hash}};
  const std::string name = "plan_" + solution_id + ".json";
  store.write_json(name, plan);
  json m = store.manifest();
  m["plans"][solution_id] = hash;
  store.write_json("manifest.json", m);
  return plan;
}

json evaluate_what_if(const fs::path& dir, const json& edited) {
  SessionStore store(dir);
  Session session = store.load_session();
  auto paths = store.load_paths();
  auto opts = stored_options(store, session);
  Solution s = solution_from_json(edited);
  PartSequences seqs = s.sequences();

  MitigationContext ctx(session, paths, opts.lmax);
  auto diags = ctx.check(seqs, opts.budgets);
  const bool valid = std::none_of(diags.begin(), diags.end(), [](const Diagnostic& d) { return d.severity == Severity::error; });
  const bool resolvable = std::none_of(diags.begin(), diags.end(), [](const Diagnostic& d) {
    return d.kind == Error::Kind::reference ||
           (d.kind == Error::Kind::constraint && d.message.find("exceeds lmax") != std::string::npos);
  });
  json out{{"valid", valid}, {"diagnostics", diagnostics_to_json(diags)}, {"signature", signature_of(seqs)}};
  if (resolvable) {
    Solution full = ctx.make_solution(seqs);
    out["protection_index"] = full.protection_index;
    out["discouraged_penalty"] = full.discouraged_penalty;
    out["game_value"] = game_value(ctx.game_instance(seqs), opts.effort);
    out["overhead"] = overhead_to_json(full.overhead);
    json predicted = json::object();
    for (const auto& [part, m] : full.predicted) predicted[part] = metrics_to_json(m);
    out["predicted_metrics"] = predicted;
  } else {
    out["protection_index"] = nullptr;
    out["game_value"] = nullptr;
    out["overhead"] = nullptr;
  }
  return out;
}

json read_framing(const fs::path& dir) {
  SessionStore store(dir);
  Session session = store.load_session();
  const auto& app = session.app();
  json parts = json::array();
  for (const auto& p : app.parts)
    parts.push_back(json{{"id", p.id}, {"kind", std::string(to_string(p.kind))}, {"name", p.name}});
  json assets = app_to_json(app).at("assets");
  return json{{"session", session.hash()},
              {"kb_hash", session.kb_hash()},
              {"parts", parts},
              {"assets", assets},
              {"attacker", attacker_json(session.kb().attacker)},
              {"budgets", overhead_to_json(session.kb().thresholds.budgets)}};
}

void update_framing(const fs::path& dir, const json& framing) {
  SessionStore store(dir);
  if (!framing.is_object()) throw Error(Error::Kind::parse, "framing must be a JSON object");
  json kbj = store.read_json("kb.json");
  json appj = store.read_json("app.json");
  if (framing.contains("assets")) appj["assets"] = framing.at("assets");
  if (framing.contains("attacker")) kbj["attacker"] = framing.at("attacker");
  if (framing.contains("budgets")) {
    if (!kbj.contains("thresholds")) kbj["thresholds"] = json::object();
    kbj["thresholds"]["budgets"] =
        overhead_to_json(overhead_from_json(framing.at("budgets"), parse_kb(kbj.dump()).thresholds.budgets));
  }
  KnowledgeBase kb = parse_kb(kbj.dump());
  ApplicationModel app = parse_app(appj.dump());
  throw_on_error(validate_pair(kb, app));
  require_non_negative(kb.thresholds.budgets);
  Session session(kb, app);
  drop_stages(store, {"assessment", "mitigation", "hiding", "plan"});
  store.write_text("kb.json", save_kb(session.kb()));
  store.write_text("app.json", save_app(session.app()));
  json m = store.manifest();
  m["session"] = session.hash();
  m["kb_hash"] = session.kb_hash();
  store.write_json("manifest.json", m);
  store.record_stage("framing", {"kb.json", "app.json"});
}

void run_pipeline(const fs::path& dir, const AnalyzeInput& input, const PipelineOptions& options) {
  SessionStore store(dir);
  std::string stage;
  auto fail = [&](const Error& e) {
    store.write_json("FAILED", json{{"stage", stage}, {"kind", std::string(to_string(e.kind()))}, {"message", e.what()}});
    throw StageError(stage, e);
  };
  try {
    store.remove("FAILED");
    stage = "framing";
    analyze(dir, input);
    stage = "assessment";
    assess(dir);
    stage = "mitigation";
    mitigate(dir, options.mitigate);
    stage = "hiding";
    hide_solution(dir, options.hide);
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    fail(e);
  } catch (const std::exception& e) {
    fail(Error(Error::Kind::internal, e.what()));
  }
}

std::map<std::string, double> parse_budget_list(std::string_view text) {
  std::map<std::string, double> out;
  std::string s(text);
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    auto eq = item.find('=');
    if (eq == std::string::npos) throw Error(Error::Kind::usage, "budget entry '" + item + "' is not kind=value");
    auto kind = parse_overhead_kind(item.substr(0, eq));
    if (!kind) throw Error(Error::Kind::usage, "unknown overhead kind '" + item.substr(0, eq) + "'");
    try {
      std::size_t used = 0;
      double v = std::stod(item.substr(eq + 1), &used);
      if (used != item.size() - eq - 1) throw std::invalid_argument("trailing");
      out[std::string(to_string(*kind))] = v;
    } catch (const std::logic_error&) {
      throw Error(Error::Kind::usage, "budget value in '" + item + "' is not a number");
    }
  }
  return out;
}

std::vector<std::string> session_artifacts(const fs::path& dir) {
  std::vector<std::string> out;
  if (!fs::exists(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file()) out.push_back(e.path().filename().string());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace esp
