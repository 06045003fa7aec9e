// Command-line runner: explain-sweep, theory, fairness-sweep, aggregate.
// Exit codes: 0 success, 1 config error, 2 check failure, 3 partial results.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>

#include "aisc/experiments.hpp"

namespace fs = std::filesystem;
using namespace aisc;

namespace {

enum Exit { kOk = 0, kConfig = 1, kCheck = 2, kPartial = 3 };

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::optional<int> threads;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "JSON experiment config")->check(CLI::ExistingFile);
  app->add_option("--seed", c.seed, "master seed (overrides config)");
  app->add_option("--out-dir", c.out_dir, "output directory (overrides config)");
  app->add_option("--threads", c.threads, "worker threads (default: $AISC_THREADS or 1)")->check(CLI::Range(1, 1024));
}

ExperimentConfig resolve(const Common& c, int& threads) {
  ExperimentConfig cfg = c.config.empty() ? ExperimentConfig{} : load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (!c.out_dir.empty()) cfg.out_dir = c.out_dir;
  threads = c.threads ? *c.threads : default_thread_count();
  return cfg;
}

void progress(std::size_t done, std::size_t total) {
  std::fprintf(stderr, "\r%zu/%zu units", done, total);
  if (done == total) std::fputc('\n', stderr);
}

void write_manifest(const fs::path& dir, Manifest m) {
  m.files.push_back("manifest.json");
  write_text_file(dir / "manifest.json", m.to_json().dump(2) + "\n");
}

int explain_sweep(const Common& c) {
  int threads = 1;
  auto cfg = resolve(c, threads);
  auto res = run_explanation_experiment(cfg, threads, progress);
  const fs::path dir = cfg.out_dir;
  write_text_file(dir / "raw.csv", raw_csv(res.rows));
  write_text_file(dir / "aggregate.csv", aggregate_csv(aggregate_rows(res.rows)));
  res.manifest.files = {"raw.csv", "aggregate.csv"};
  write_manifest(dir, res.manifest);
  for (const auto& f : res.manifest.failures) std::cerr << "failed: " << f << '\n';
  return res.manifest.complete() ? kOk : kPartial;
}

int theory(const Common& c) {
  int threads = 1;
  auto cfg = resolve(c, threads);
  auto res = run_theory_suite(cfg, threads);
  const fs::path dir = cfg.out_dir;
  Manifest m;
  m.experiment = "theory";
  m.seed = cfg.seed;
  auto emit = [&](const nlohmann::json& j, const char* name) {
    if (j.is_null()) return;
    write_text_file(dir / name, j.dump(2) + "\n");
    m.files.push_back(name);
    ++m.units_total;
    ++m.units_done;
    std::cout << name << ": " << (j.at("pass").get<bool>() ? "pass" : "FAIL") << '\n';
  };
  emit(res.bounds, "error_bound.json");
  emit(res.eigen, "eigen_ratio.json");
  emit(res.footprint, "footprint.json");
  write_manifest(dir, m);
  return res.pass ? kOk : kCheck;
}

int fairness_sweep(const Common& c) {
  int threads = 1;
  auto cfg = resolve(c, threads);
  auto res = run_fairness_sweep(cfg.fairness, cfg.seed, threads, progress);
  const fs::path dir = cfg.out_dir;
  write_text_file(dir / "outcomes.csv", fairness_csv(res.outcomes));
  res.manifest.files = {"outcomes.csv"};
  if (!res.outcomes.empty()) {
    write_text_file(dir / "frontiers.json", frontier_report(res.outcomes).dump(2) + "\n");
    res.manifest.files.push_back("frontiers.json");
    try {
      write_text_file(dir / "reversibility.json", reversibility_json(res.outcomes).dump(2) + "\n");
      res.manifest.files.push_back("reversibility.json");
    } catch (const ArgumentError& e) {
      std::cerr << "reversibility skipped: " << e.what() << '\n';
    }
  }
  write_manifest(dir, res.manifest);
  for (const auto& f : res.manifest.failures) std::cerr << "failed: " << f << '\n';
  return res.manifest.complete() ? kOk : kPartial;
}

int aggregate(const std::string& input, const std::string& output) {
  const auto rows = parse_raw_csv(read_text_file(input));
  write_text_file(output, aggregate_csv(aggregate_rows(rows)));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Supply-chain explanation, error-bound and fairness experiments"};
  app.require_subcommand(1);

  Common explain_opts, theory_opts, fair_opts;
  auto* explain_cmd = app.add_subcommand("explain-sweep", "end-to-end vs supply-chain explanations on tree chains");
  add_common(explain_cmd, explain_opts);
  auto* theory_cmd = app.add_subcommand("theory", "Monte Carlo checks of the error and footprint bounds");
  add_common(theory_cmd, theory_opts);
  auto* fair_cmd = app.add_subcommand("fairness-sweep", "upstream/downstream fairness regularization sweep");
  add_common(fair_cmd, fair_opts);

  std::string agg_in, agg_out = "aggregate.csv";
  auto* agg_cmd = app.add_subcommand("aggregate", "recompute aggregate.csv from a raw explanation CSV");
  agg_cmd->add_option("input", agg_in, "raw CSV")->required()->check(CLI::ExistingFile);
  agg_cmd->add_option("-o,--output", agg_out, "aggregate CSV path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kConfig;
  }

  try {
    if (*explain_cmd) return explain_sweep(explain_opts);
    if (*theory_cmd) return theory(theory_opts);
    if (*fair_cmd) return fairness_sweep(fair_opts);
    if (*agg_cmd) return aggregate(agg_in, agg_out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return kConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kCheck;
  }
  return kOk;
}
