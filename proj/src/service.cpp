#include "esp/service.hpp"

#include <map>
#include <mutex>
#include <regex>
#include <shared_mutex>

#include "esp/session.hpp"
#include "httplib.h"

namespace esp {

namespace {

const std::regex kSessionId("[A-Za-z0-9_.-]+");

struct HttpError {
  int code;
  std::string stage;
  std::string message;
  std::vector<std::string> refs;
};

int status_for(Error::Kind kind) {
  switch (kind) {
    case Error::Kind::io: return 409;
    case Error::Kind::internal: return 500;
    default: return 400;
  }
}

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(canonical_dump(body), "application/json");
}

void send_error(httplib::Response& res, const HttpError& e) {
  send_json(res, e.code, json{{"code", e.code}, {"stage", e.stage}, {"message", e.message}, {"refs", e.refs}});
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  try {
    return json::parse(req.body);
  } catch (const json::exception& e) {
    throw HttpError{400, "", std::string("request body is not JSON: ") + e.what(), {}};
  }
}

std::optional<int> opt_int(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  if (!j.at(key).is_number_integer()) throw HttpError{400, "", std::string(key) + " must be an integer", {}};
  return j.at(key).get<int>();
}

MitigateOptions mitigate_options(const json& body) {
  MitigateOptions o;
  if (body.contains("budget")) {
    if (!body.at("budget").is_number()) throw HttpError{400, "mitigation", "budget must be a number", {}};
    OverheadVector all;
    all.values.fill(body.at("budget").get<double>());
    o.budgets = all;
  }
  if (body.contains("budgets")) {
    if (!body.at("budgets").is_object()) throw HttpError{400, "mitigation", "budgets must be an object", {}};
    for (const auto& [k, v] : body.at("budgets").items()) {
      if (!v.is_number()) throw HttpError{400, "mitigation", "budget " + k + " must be a number", {k}};
      o.budget_overrides[k] = v.get<double>();
    }
  }
  o.lmax = opt_int(body, "lmax");
  o.effort = opt_int(body, "effort");
  o.top_k = opt_int(body, "top");
  o.beam_width = opt_int(body, "beam");
  return o;
}

}  // namespace

struct Service::Impl {
  std::filesystem::path root;
  httplib::Server server;
  std::mutex locks_guard;
  std::map<std::string, std::shared_ptr<std::shared_mutex>> locks;
  std::mutex create_guard;

  std::shared_ptr<std::shared_mutex> lock_for(const std::string& id) {
    std::lock_guard<std::mutex> g(locks_guard);
    auto& l = locks[id];
    if (!l) l = std::make_shared<std::shared_mutex>();
    return l;
  }

  std::filesystem::path session_dir(const std::string& id) const {
    if (!std::regex_match(id, kSessionId) || id == "." || id == "..")
      throw HttpError{400, "", "invalid session id '" + id + "'", {id}};
    auto dir = root / id;
    if (!std::filesystem::exists(dir / "manifest.json")) throw HttpError{404, "", "unknown session '" + id + "'", {id}};
    return dir;
  }

  using Handler = std::function<json(const httplib::Request&, const std::filesystem::path&)>;

  /// Wraps a per-session handler with locking and error translation.
  httplib::Server::Handler wrap(std::string stage, bool mutates, int ok_status, Handler h) {
    return [this, stage, mutates, ok_status, h](const httplib::Request& req, httplib::Response& res) {
      try {
        const std::string id = req.matches[1];
        auto dir = session_dir(id);
        auto lock = lock_for(id);
        json out;
        if (mutates) {
          std::unique_lock<std::shared_mutex> g(*lock);
          out = h(req, dir);
        } else {
          std::shared_lock<std::shared_mutex> g(*lock);
          out = h(req, dir);
        }
        send_json(res, ok_status, out);
      } catch (const HttpError& e) {
        HttpError copy = e;
        if (copy.stage.empty()) copy.stage = stage;
        send_error(res, copy);
      } catch (const StageError& e) {
        send_error(res, HttpError{status_for(e.kind()), e.stage(), e.what(), {}});
      } catch (const Error& e) {
        int code = status_for(e.kind());
        if (e.kind() == Error::Kind::reference && std::string(e.what()).starts_with("unknown solution")) code = 404;
        send_error(res, HttpError{code, stage, e.what(), {}});
      } catch (const std::exception& e) {
        send_error(res, HttpError{500, stage, e.what(), {}});
      }
    };
  }

  void create_session(const httplib::Request& req, httplib::Response& res) {
    try {
      AnalyzeInput input;
      std::string id;
      if (req.is_multipart_form_data()) {
        if (!req.has_file("kb")) throw HttpError{400, "framing", "multipart field 'kb' is required", {"kb"}};
        input.kb_text = req.get_file_value("kb").content;
        if (req.has_file("model")) input.model_text = req.get_file_value("model").content;
        for (const auto& f : req.get_file_values("src"))
          input.src_files.push_back(SourceFile{f.filename.empty() ? f.name : f.filename, f.content});
        if (req.has_file("id")) id = req.get_file_value("id").content;
      } else {
        json body = parse_body(req);
        if (!body.contains("kb")) throw HttpError{400, "framing", "field 'kb' is required", {"kb"}};
        input.kb_text = body.at("kb").is_string() ? body.at("kb").get<std::string>() : body.at("kb").dump();
        if (body.contains("model"))
          input.model_text = body.at("model").is_string() ? body.at("model").get<std::string>() : body.at("model").dump();
        if (body.contains("src"))
          for (const auto& [path, text] : body.at("src").items())
            input.src_files.push_back(SourceFile{path, text.get<std::string>()});
        if (body.contains("id")) id = body.at("id").get<std::string>();
      }
      if (!input.model_text && input.src_files.empty())
        throw HttpError{400, "framing", "either 'model' or 'src' files are required", {"model", "src"}};
      if (id.empty()) {
        std::string key = *input.kb_text + '\0' + input.model_text.value_or("");
        for (const auto& f : input.src_files) key += '\0' + f.path + '\0' + f.text;
        id = sha256_hex(key).substr(0, 12);
      }
      if (!std::regex_match(id, kSessionId) || id == "." || id == "..")
        throw HttpError{400, "framing", "invalid session id '" + id + "'", {id}};

      std::lock_guard<std::mutex> g(create_guard);
      auto lock = lock_for(id);
      std::unique_lock<std::shared_mutex> sg(*lock);
      auto dir = root / id;
      try {
        analyze(dir, input);
      } catch (const Error& e) {
        throw StageError("framing", e);
      }
      json framing = read_framing(dir);
      framing["id"] = id;
      send_json(res, 201, framing);
    } catch (const HttpError& e) {
      send_error(res, e);
    } catch (const StageError& e) {
      send_error(res, HttpError{status_for(e.kind()), e.stage(), e.what(), {}});
    } catch (const std::exception& e) {
      send_error(res, HttpError{500, "framing", e.what(), {}});
    }
  }
};

Service::Service(std::filesystem::path root, std::optional<std::filesystem::path> static_dir)
    : impl_(std::make_unique<Impl>()) {
  impl_->root = std::move(root);
  std::filesystem::create_directories(impl_->root);
  auto& s = impl_->server;
  auto* self = impl_.get();
  const std::string sid = "/api/sessions/([^/]+)";

  s.Get("/api/sessions", [this](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, list_sessions());
  });
  s.Post("/api/sessions",
         [self](const httplib::Request& req, httplib::Response& res) { self->create_session(req, res); });

  s.Get(sid + "/framing", self->wrap("framing", false, 200, [](const auto&, const auto& dir) { return read_framing(dir); }));
  s.Put(sid + "/framing", self->wrap("framing", true, 200, [](const auto& req, const auto& dir) {
    update_framing(dir, parse_body(req));
    return read_framing(dir);
  }));
  s.Post(sid + "/assess", self->wrap("assessment", true, 200, [](const auto&, const auto& dir) {
    assess(dir);
    return SessionStore(dir).read_json("risk_report.json");
  }));
  s.Get(sid + "/attacks", self->wrap("assessment", false, 200, [](const auto&, const auto& dir) {
    SessionStore store(dir);
    return json{{"attacks", store.read_json("attacks.json")}, {"report", store.read_json("risk_report.json")}};
  }));
  s.Post(sid + "/mitigate", self->wrap("mitigation", true, 200, [](const auto& req, const auto& dir) {
    return mitigate(dir, mitigate_options(parse_body(req)));
  }));
  s.Get(sid + "/solutions", self->wrap("mitigation", false, 200, [](const auto&, const auto& dir) {
    return SessionStore(dir).read_json("solutions.json");
  }));
  s.Post(sid + "/whatif", self->wrap("mitigation", false, 200, [](const auto& req, const auto& dir) {
    return evaluate_what_if(dir, parse_body(req));
  }));
  s.Post(sid + "/hide", self->wrap("hiding", true, 200, [](const auto& req, const auto& dir) {
    json body = parse_body(req);
    HideOptions o;
    if (body.contains("solution")) o.solution = body.at("solution").get<std::string>();
    o.gamma = opt_int(body, "gamma");
    return hide_solution(dir, o);
  }));
  s.Get(sid + "/plan/([^/]+)", self->wrap("plan", true, 200, [](const auto& req, const auto& dir) {
    return export_plan(dir, req.matches[2]);
  }));

  if (static_dir) s.set_mount_point("/", static_dir->string());
}

Service::~Service() { stop(); }

int Service::bind(const std::string& host, int port) {
  if (port == 0) return impl_->server.bind_to_any_port(host);
  return impl_->server.bind_to_port(host, port) ? port : -1;
}

bool Service::run() { return impl_->server.listen_after_bind(); }

void Service::stop() {
  if (impl_) impl_->server.stop();
}

void Service::wait_until_ready() const { impl_->server.wait_until_ready(); }

json Service::list_sessions() const {
  json out = json::array();
  std::vector<std::filesystem::path> dirs;
  for (const auto& e : std::filesystem::directory_iterator(impl_->root))
    if (e.is_directory() && std::filesystem::exists(e.path() / "manifest.json")) dirs.push_back(e.path());
  std::sort(dirs.begin(), dirs.end());
  for (const auto& d : dirs) {
    auto id = d.filename().string();
    auto lock = impl_->lock_for(id);
    std::shared_lock<std::shared_mutex> g(*lock);
    SessionStore store(d);
    json m = store.manifest();
    json stages = json::array();
    const json recorded = m.value("stages", json::object());
    for (const auto& [k, v] : recorded.items()) stages.push_back(k);
    out.push_back(json{{"id", id},
                       {"session", m.value("session", "")},
                       {"kb_hash", m.value("kb_hash", "")},
                       {"stages", stages},
                       {"failed", store.has("FAILED")}});
  }
  return out;
}

}  // namespace esp
