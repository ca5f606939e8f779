#include <atomic>
#include <cstdlib>
#include <thread>

#include "doctest.h"
#include "esp/service.hpp"
#include "esp/session.hpp"
#include "httplib.h"
#include "support/workspace.hpp"

using namespace esp;
using esp::testing::fixture;
using esp::testing::TempDir;

namespace {

class Running {
 public:
  explicit Running(const fs::path& root) : service_(root) {
    port_ = service_.bind("127.0.0.1", 0);
    REQUIRE(port_ > 0);
    thread_ = std::thread([this] { service_.run(); });
    service_.wait_until_ready();
  }
  ~Running() {
    service_.stop();
    thread_.join();
  }
  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port_);
    c.set_read_timeout(300, 0);
    return c;
  }

 private:
  Service service_;
  int port_ = -1;
  std::thread thread_;
};

json body_of(const httplib::Result& r) {
  REQUIRE(r);
  return json::parse(r->body);
}

AnalyzeInput demo_input() {
  AnalyzeInput in;
  in.kb_path = fixture("demo/kb.json");
  in.src_root = fixture("demo/src");
  return in;
}

json create_body() {
  json src = json::object();
  for (const auto& f : read_sources(fixture("demo/src"))) src[f.path] = f.text;
  return json{{"kb", read_text_file(fixture("demo/kb.json"))}, {"src", src}, {"id", "api"}};
}

}  // namespace

TEST_SUITE("service") {

TEST_CASE("session listing, what-if and zero budget") {
  TempDir root("service");
  run_pipeline(root / "demo", demo_input(), {});
  Running server(root.path());
  auto cli = server.client();

  auto list = body_of(cli.Get("/api/sessions"));
  REQUIRE(list.size() == 1);
  CHECK(list[0].at("id") == "demo");
  CHECK(list[0].at("failed") == false);

  auto sols = body_of(cli.Get("/api/sessions/demo/solutions"));
  json top = sols.at("solutions")[0];
  auto r = cli.Post("/api/sessions/demo/whatif", top.dump(), "application/json");
  REQUIRE(r);
  CHECK(r->status == 200);
  auto w = json::parse(r->body);
  CHECK(w.at("protection_index") == top.at("protection_index"));
  CHECK(w.at("game_value") == top.at("game_value"));

  auto m = cli.Post("/api/sessions/demo/mitigate", R"({"budget":0})", "application/json");
  REQUIRE(m);
  CHECK(m->status == 200);
  auto only = json::parse(m->body).at("solutions");
  REQUIRE(only.size() == 1);
  CHECK(only[0].at("applied").empty());

  auto plan = body_of(cli.Get("/api/sessions/demo/plan/sol-1"));
  CHECK(plan.at("directives").empty());
}

TEST_CASE("errors carry code, stage, message and refs") {
  TempDir root("service");
  run_pipeline(root / "demo", demo_input(), {});
  Running server(root.path());
  auto cli = server.client();

  auto missing = cli.Get("/api/sessions/nope/solutions");
  REQUIRE(missing);
  CHECK(missing->status == 404);
  auto e = json::parse(missing->body);
  CHECK(e.at("code") == 404);
  CHECK(e.at("stage") == "mitigation");
  CHECK(e.at("refs") == json::array({"nope"}));
  CHECK(e.contains("message"));

  auto no_kb = cli.Post("/api/sessions", R"({"src":{"a.c":"int f(void){return 0;}"}})", "application/json");
  REQUIRE(no_kb);
  CHECK(no_kb->status == 400);
  CHECK(json::parse(no_kb->body).at("stage") == "framing");

  auto unknown_plan = cli.Get("/api/sessions/demo/plan/sol-99");
  REQUIRE(unknown_plan);
  CHECK(unknown_plan->status == 404);

  auto framing = body_of(cli.Get("/api/sessions/demo/framing"));
  framing["assets"][0]["weight"] = -1;
  auto bad = cli.Put("/api/sessions/demo/framing", framing.dump(), "application/json");
  REQUIRE(bad);
  CHECK(bad->status == 400);
  CHECK(json::parse(bad->body).at("message").get<std::string>().find("weight") != std::string::npos);

  auto garbage = cli.Post("/api/sessions/demo/whatif", "{not json", "application/json");
  REQUIRE(garbage);
  CHECK(garbage->status == 400);
}

TEST_CASE("API and CLI produce identical session artifacts") {
  TempDir root("service"), cli_dir("service");
  {
    Running server(root.path());
    auto c = server.client();
    auto created = c.Post("/api/sessions", create_body().dump(), "application/json");
    REQUIRE(created);
    CHECK(created->status == 201);
    for (const char* step : {"assess", "mitigate", "hide"}) {
      auto r = c.Post(std::string("/api/sessions/api/") + step, "{}", "application/json");
      REQUIRE(r);
      CHECK_MESSAGE(r->status == 200, step);
    }
    auto attacks = body_of(c.Get("/api/sessions/api/attacks"));
    CHECK(attacks.at("attacks").at("paths").size() == attacks.at("report").at("paths").size());
  }
  const std::string cmd = std::string(ESP_CLI) + " run --session " + (cli_dir / "s").string() + " --kb " +
                          fixture("demo/kb.json").string() + " --src " + fixture("demo/src").string() + " > /dev/null";
  REQUIRE(std::system(cmd.c_str()) == 0);
  auto api_files = session_artifacts(root / "api");
  CHECK(api_files == session_artifacts(cli_dir / "s"));
  for (const auto& f : api_files) {
    INFO(f);
    CHECK(read_text_file(root / "api" / f) == read_text_file(cli_dir / "s" / f));
  }
}

TEST_CASE("concurrent reads of one session") {
  TempDir root("service");
  run_pipeline(root / "demo", demo_input(), {});
  Running server(root.path());
  const auto expected = read_text_file(root / "demo" / "solutions.json");
  std::vector<std::thread> readers;
  std::atomic<int> ok{0};
  for (int t = 0; t < 4; ++t)
    readers.emplace_back([&] {
      auto c = server.client();
      for (int i = 0; i < 5; ++i) {
        auto r = c.Get("/api/sessions/demo/solutions");
        if (r && r->status == 200 && json::parse(r->body) == json::parse(expected)) ++ok;
      }
    });
  for (auto& t : readers) t.join();
  CHECK(ok == 20);
}

}  // TEST_SUITE
