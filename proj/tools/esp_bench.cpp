// Serial vs OpenMP timings of the parallel kernels on the synthetic demo
// application, plus end-to-end pipeline time per PI count.

#include <omp.h>
#include <unistd.h>

#include <chrono>
#include <filesystem>
#include <iomanip>
#include <iostream>

#include "CLI11.hpp"
#include "esp/candidates.hpp"
#include "esp/demo.hpp"
#include "esp/game.hpp"
#include "esp/session.hpp"

namespace {

using Clock = std::chrono::steady_clock;

template <class F>
double best_of(int repeat, F&& f) {
  double best = 1e300;
  for (int i = 0; i < repeat; ++i) {
    auto t0 = Clock::now();
    f();
    best = std::min(best, std::chrono::duration<double>(Clock::now() - t0).count());
  }
  return best;
}

void row(const std::string& name, int pis, std::size_t items, double serial, double parallel) {
  std::cout << std::left << std::setw(16) << name << std::right << std::setw(5) << pis << std::setw(10) << items
            << std::fixed << std::setprecision(4) << std::setw(12) << serial << std::setw(12) << parallel
            << std::setprecision(2) << std::setw(9) << (parallel > 0 ? serial / parallel : 0.0) << "\n";
}

void write_fixture(const std::filesystem::path& dir, int pis) {
  std::filesystem::create_directories(dir / "src");
  esp::write_text_file(dir / "kb.json", esp::canonical_dump(esp::demo::knowledge_base(pis)));
  for (const auto& f : esp::demo::sources()) esp::write_text_file(dir / "src" / f.path, f.text);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Serial vs parallel kernel benchmark"};
  std::vector<int> pis{4, 8, 12};
  int repeat = 3;
  std::string fixture_out;
  app.add_option("--pis", pis, "PI counts to benchmark")->capture_default_str();
  app.add_option("--repeat", repeat, "Repetitions per measurement (best is reported)")->capture_default_str();
  app.add_option("--fixture-out", fixture_out, "Write the demo KB and sources for the first PI count and exit");
  CLI11_PARSE(app, argc, argv);

  if (!fixture_out.empty()) {
    write_fixture(fixture_out, pis.front());
    return 0;
  }

  std::cout << "threads " << omp_get_max_threads() << "\n";
  std::cout << std::left << std::setw(16) << "kernel" << std::right << std::setw(5) << "pis" << std::setw(10)
            << "items" << std::setw(12) << "serial_s" << std::setw(12) << "parallel_s" << std::setw(9) << "speedup"
            << "\n";

  const auto tmp = std::filesystem::temp_directory_path() / ("esp_bench_" + std::to_string(::getpid()));
  for (int n : pis) {
    const auto dir = tmp / ("pis" + std::to_string(n));
    esp::AnalyzeInput input;
    input.kb_text = esp::canonical_dump(esp::demo::knowledge_base(n));
    input.src_files = esp::demo::sources();

    double pipeline = best_of(repeat, [&] { esp::run_pipeline(dir, input, {}); });

    esp::SessionStore store(dir);
    esp::Session session = store.load_session();
    auto paths = store.load_paths();
    esp::MitigationContext ctx(session, paths, session.kb().thresholds.lmax);
    auto suitable = esp::suitable_pis(session, paths);
    esp::CandidateSpace space(ctx, suitable);
    std::vector<esp::Choice> all;
    space.enumerate(session.kb().thresholds.budgets, 4096, [&](const std::vector<esp::Choice>& chunk) {
      all.insert(all.end(), chunk.begin(), chunk.end());
    });
    esp::RiskKernel kernel(ctx, space);
    std::vector<double> out_s, out_p;
    double ts = best_of(repeat, [&] { kernel.score_serial(all, out_s); });
    double tp = best_of(repeat, [&] { kernel.score_parallel(all, out_p); });
    if (out_s != out_p) {
      std::cerr << "score mismatch between serial and parallel kernels\n";
      return 1;
    }
    row("score", n, all.size(), ts, tp);

    esp::CandidateSearchOptions cso;
    cso.budgets = session.kb().thresholds.budgets;
    cso.beam_width = session.kb().thresholds.beam_width;
    auto beam = esp::search_candidates(ctx, suitable, cso).beam;
    const int effort = session.kb().attacker.effort(session.app());
    std::vector<esp::RankedSolution> gs, gp;
    double gts = best_of(repeat, [&] { gs = esp::play_game(ctx, beam, effort, {}, false); });
    double gtp = best_of(repeat, [&] { gp = esp::play_game(ctx, beam, effort, {}, true); });
    for (std::size_t i = 0; i < gs.size(); ++i)
      if (gs[i].game_value != gp[i].game_value || gs[i].solution.signature() != gp[i].solution.signature()) {
        std::cerr << "game mismatch between serial and parallel runs\n";
        return 1;
      }
    row("game", n, beam.size(), gts, gtp);
    std::cout << "pipeline " << n << " PIs: " << std::setprecision(4) << pipeline << " s, " << all.size()
              << " candidates\n";
  }
  std::filesystem::remove_all(tmp);
  return 0;
}
