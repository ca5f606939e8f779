#include <csignal>
#include <fstream>
#include <iomanip>
#include <iostream>

#include "CLI11.hpp"
#include "esp/service.hpp"
#include "esp/session.hpp"

namespace {

struct Globals {
  std::string session = ".";
  std::string kb;
  long seed = 0;  // reserved: every stage is deterministic
  bool json_out = false;
};

esp::Service* g_service = nullptr;

void on_signal(int) {
  if (g_service) g_service->stop();
}

void print(const Globals& g, const esp::json& j, const std::string& text) {
  if (g.json_out)
    std::cout << esp::canonical_dump(j);
  else
    std::cout << text;
}

std::string fixed(double v, int digits = 4) {
  std::ostringstream o;
  o << std::fixed << std::setprecision(digits) << v;
  return o.str();
}

std::string solutions_text(const esp::json& sols) {
  std::ostringstream o;
  o << "enumerated " << sols.at("enumerated") << " candidates, evaluated " << sols.at("evaluated") << "\n";
  for (const auto& s : sols.at("solutions")) {
    std::string sig = s.at("signature");
    o << s.at("id").get<std::string>() << "  game " << fixed(s.at("game_value")) << "  P "
      << fixed(s.at("protection_index")) << "  overhead " << fixed(esp::overhead_from_json(s.at("overhead")).total(), 2)
      << "  " << (sig.empty() ? "(unprotected)" : sig) << "\n";
  }
  return o.str();
}

esp::AnalyzeInput analyze_input(const Globals& g, const std::string& src, const std::string& model) {
  esp::AnalyzeInput in;
  if (g.kb.empty()) throw esp::Error(esp::Error::Kind::usage, "--kb is required");
  in.kb_path = g.kb;
  if (!model.empty()) in.model_path = model;
  else if (!src.empty()) in.src_root = src;
  else throw esp::Error(esp::Error::Kind::usage, "one of --src or --model is required");
  return in;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Software-protection risk analysis and mitigation engine"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--session", g.session, "Session directory")->capture_default_str();
  app.add_option("--kb", g.kb, "Knowledge base JSON");
  app.add_option("--seed", g.seed, "Reserved; results are deterministic");
  app.add_flag("--json", g.json_out, "Print machine-readable JSON");

  std::string src, model;
  auto* analyze = app.add_subcommand("analyze", "Ingest sources or a model and frame a session");
  analyze->add_option("--src", src, "Directory of C sources");
  analyze->add_option("--model", model, "Application model JSON (used as-is)");

  auto* assess = app.add_subcommand("assess", "Infer attack paths and assess risk");
  auto* report = app.add_subcommand("report", "Print the risk report");

  std::string budgets;
  esp::MitigateOptions mopts;
  int lmax = -1, effort = -1, top = -1, beam = -1;
  bool serial = false, no_prune = false;
  auto add_mitigate_flags = [&](CLI::App* c) {
    c->add_option("--budget", budgets, "Overhead budgets, e.g. client_time=20,server_memory=5");
    c->add_option("--lmax", lmax, "Maximum PIs per part");
    c->add_option("--effort", effort, "Attacker effort units");
    c->add_option("--top", top, "Solutions to keep");
    c->add_option("--beam", beam, "Candidates entering the game");
    c->add_flag("--serial", serial, "Disable OpenMP kernels");
    c->add_flag("--no-prune", no_prune, "Disable alpha-beta and the transposition table");
  };
  auto* mitigate = app.add_subcommand("mitigate", "Rank protection solutions");
  add_mitigate_flags(mitigate);

  std::string solution = "sol-1";
  int gamma = -1;
  auto* hide = app.add_subcommand("hide", "Refine a solution with asset hiding");
  hide->add_option("--solution", solution, "Solution id")->capture_default_str();
  hide->add_option("--gamma", gamma, "Max deployments of one PI per region");

  auto* plan = app.add_subcommand("plan", "Export a deployment plan");
  plan->add_option("--solution", solution, "Solution id (sol-N or hidden)")->capture_default_str();

  std::string whatif_file;
  auto* whatif = app.add_subcommand("whatif", "Evaluate an edited solution without saving");
  whatif->add_option("file", whatif_file, "Solution JSON")->required();

  auto* run = app.add_subcommand("run", "analyze, assess, mitigate and hide in one go");
  run->add_option("--src", src, "Directory of C sources");
  run->add_option("--model", model, "Application model JSON");
  add_mitigate_flags(run);
  run->add_option("--gamma", gamma, "Max deployments of one PI per region");

  std::string host = "127.0.0.1", static_dir;
  int port = 8080;
  auto* serve = app.add_subcommand("serve", "Serve the HTTP API over a directory of sessions");
  serve->add_option("--host", host)->capture_default_str();
  serve->add_option("--port", port)->capture_default_str();
  serve->add_option("--static", static_dir, "Directory of UI files to serve at /");

  CLI11_PARSE(app, argc, argv);

  auto fill_mitigate = [&] {
    if (!budgets.empty()) mopts.budget_overrides = esp::parse_budget_list(budgets);
    if (lmax >= 0) mopts.lmax = lmax;
    if (effort >= 0) mopts.effort = effort;
    if (top >= 0) mopts.top_k = top;
    if (beam >= 0) mopts.beam_width = beam;
    mopts.parallel = !serial;
    if (no_prune) mopts.search = {false, false};
  };

  const std::filesystem::path dir = g.session;
  try {
    if (*analyze) {
      esp::analyze(dir, analyze_input(g, src, model));
      auto f = esp::read_framing(dir);
      print(g, f,
            "session " + f.at("session").get<std::string>() + ": " + std::to_string(f.at("parts").size()) +
                " parts, " + std::to_string(f.at("assets").size()) + " assets\n");
    } else if (*assess) {
      esp::assess(dir);
      esp::SessionStore store(dir);
      auto r = store.read_json("risk_report.json");
      print(g, r,
            std::to_string(r.at("paths").size()) + " attack paths, application risk " +
                fixed(r.at("application_risk")) + "\n");
    } else if (*report) {
      esp::SessionStore store(dir);
      print(g, store.read_json("risk_report.json"), store.read_text("risk_report.md"));
    } else if (*mitigate) {
      fill_mitigate();
      auto sols = esp::mitigate(dir, mopts);
      print(g, sols, solutions_text(sols));
    } else if (*hide) {
      esp::HideOptions o{solution, gamma >= 0 ? std::optional<int>(gamma) : std::nullopt};
      auto h = esp::hide_solution(dir, o);
      std::string sig = h.at("solution").at("signature");
      print(g, h,
            "confusion " + fixed(h.at("confusion_index")) + (h.at("suboptimal").get<bool>() ? " (suboptimal)" : "") +
                "  " + sig + "\n");
    } else if (*plan) {
      auto p = esp::export_plan(dir, solution);
      std::ostringstream o;
      for (const auto& d : p.at("directives"))
        o << d.at("action").get<std::string>() << " " << d.at("pi").get<std::string>() << " on "
          << d.at("part").get<std::string>() << "\n";
      o << "plan hash " << p.at("hash").get<std::string>() << "\n";
      print(g, p, o.str());
    } else if (*whatif) {
      std::ifstream in(whatif_file);
      if (!in) throw esp::Error(esp::Error::Kind::io, "cannot read " + whatif_file);
      esp::json edited;
      try {
        edited = esp::json::parse(in);
      } catch (const esp::json::exception& e) {
        throw esp::Error(esp::Error::Kind::parse, whatif_file + ": " + e.what());
      }
      auto r = esp::evaluate_what_if(dir, edited);
      std::ostringstream o;
      o << (r.at("valid").get<bool>() ? "valid" : "invalid");
      if (!r.at("protection_index").is_null())
        o << "  P " << fixed(r.at("protection_index")) << "  game " << fixed(r.at("game_value"));
      o << "\n";
      for (const auto& d : r.at("diagnostics")) o << "  " << d.at("message").get<std::string>() << "\n";
      print(g, r, o.str());
    } else if (*run) {
      fill_mitigate();
      esp::PipelineOptions po;
      po.mitigate = mopts;
      if (gamma >= 0) po.hide.gamma = gamma;
      esp::run_pipeline(dir, analyze_input(g, src, model), po);
      auto sols = esp::SessionStore(dir).read_json("solutions.json");
      print(g, sols, solutions_text(sols));
    } else if (*serve) {
      esp::Service service(dir, static_dir.empty() ? std::nullopt : std::optional<std::filesystem::path>(static_dir));
      int bound = service.bind(host, port);
      if (bound < 0) throw esp::Error(esp::Error::Kind::io, "cannot bind " + host + ":" + std::to_string(port));
      g_service = &service;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cerr << "serving " << dir.string() << " on http://" << host << ":" << bound << "\n";
      service.run();
      g_service = nullptr;
    }
  } catch (const esp::StageError& e) {
    std::cerr << "error [" << e.stage() << "]: " << e.what() << "\n";
    return 1;
  } catch (const esp::Error& e) {
    std::cerr << "error (" << esp::to_string(e.kind()) << "): " << e.what() << "\n";
    return e.kind() == esp::Error::Kind::usage ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
