#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "aisc/experiments.hpp"

using namespace aisc;

namespace {

ExperimentConfig tiny_explain() {
  ExperimentConfig c;
  c.depths = {1};
  c.degrees = {1};
  c.lime_samples = {50};
  c.lime_radius = {0.2};
  c.trials = 1;
  c.points = 7;
  c.seed = 3;
  return c;
}

ExplanationRow row(int trial, int point, double cos, double mse = 0, double rec = 0) {
  return {2, 1, 50, 0.2, trial, 99, point, cos, mse, rec};
}

}  // namespace

TEST(Percentile, LinearInterpolationHandValues) {
  std::vector<double> v{4, 1, 3, 2};
  EXPECT_DOUBLE_EQ(percentile(v, 10), 1.3);
  EXPECT_DOUBLE_EQ(percentile(v, 50), 2.5);
  EXPECT_DOUBLE_EQ(percentile(v, 90), 3.7);
  EXPECT_DOUBLE_EQ(percentile(v, 0), 1);
  EXPECT_DOUBLE_EQ(percentile(v, 100), 4);
  EXPECT_DOUBLE_EQ(percentile({5}, 90), 5);
  EXPECT_THROW(percentile({}, 50), ArgumentError);
  EXPECT_THROW(percentile({1}, 101), ArgumentError);
}

TEST(Percentile, ConstantSample) {
  for (int p : {10, 50, 90}) EXPECT_EQ(percentile(std::vector<double>(9, 0.25), p), 0.25);
}

TEST(MeanCi, ThreeTrialHandCase) {
  auto m = mean_ci95({1, 2, 3});
  EXPECT_DOUBLE_EQ(m.mean, 2);
  EXPECT_NEAR(m.high - m.mean, 1.96 / std::sqrt(3.0), 1e-15);
  EXPECT_NEAR(m.mean - m.low, 1.96 / std::sqrt(3.0), 1e-15);
  EXPECT_FALSE(m.single);
}

TEST(MeanCi, SingleTrialFlagged) {
  auto m = mean_ci95({0.7});
  EXPECT_TRUE(m.single);
  EXPECT_EQ(m.low, 0.7);
  EXPECT_EQ(m.high, 0.7);
}

TEST(Aggregate, HandDataset) {
  // trial 0 medians: cos 0.8; trial 1: 0.6; trial 2: 0.4
  std::vector<ExplanationRow> rows{row(0, 0, 0.7), row(0, 1, 0.9), row(1, 0, 0.6), row(1, 1, 0.5),
                                   row(1, 2, 0.9), row(2, 0, 0.4)};
  auto agg = aggregate_rows(rows);
  const auto& p50 = find_aggregate(agg, 2, 1, 50, 0.2, "cos_sim", 50);
  EXPECT_NEAR(p50.stat.mean, 0.6, 1e-15);
  EXPECT_NEAR(p50.stat.high - 0.6, 1.96 * 0.2 / std::sqrt(3.0), 1e-14);
  EXPECT_EQ(p50.stat.n, 3);
  // p10 per trial: 0.72, 0.52, 0.4
  EXPECT_NEAR(find_aggregate(agg, 2, 1, 50, 0.2, "cos_sim", 10).stat.mean, (0.72 + 0.52 + 0.4) / 3, 1e-15);
  EXPECT_EQ(agg.size(), 9u);
  EXPECT_THROW(find_aggregate(agg, 3, 1, 50, 0.2, "cos_sim", 50), LookupError);
}

TEST(Aggregate, NanValuesSkipped) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::vector<ExplanationRow> rows{row(0, 0, nan), row(0, 1, 0.5), row(1, 0, nan)};
  auto agg = aggregate_rows(rows);
  const auto& p50 = find_aggregate(agg, 2, 1, 50, 0.2, "cos_sim", 50);
  EXPECT_EQ(p50.stat.n, 1);
  EXPECT_TRUE(p50.stat.single);
  EXPECT_NE(aggregate_csv(agg).find("single_trial"), std::string::npos);
}

TEST(RawCsv, RoundTrip) {
  std::vector<ExplanationRow> rows{row(0, 0, 0.1 + 0.2, 1e-300, -3.5), row(1, 4, std::nan(""), 2, 1000)};
  const auto text = raw_csv(rows);
  EXPECT_EQ(text.substr(0, text.find('\n')), kRawHeader);
  EXPECT_EQ(text.find('\r'), std::string::npos);
  auto back = parse_raw_csv(text);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].cos_sim, 0.1 + 0.2);
  EXPECT_EQ(back[0].mse, 1e-300);
  EXPECT_TRUE(std::isnan(back[1].cos_sim));
  EXPECT_EQ(raw_csv(back), text);
}

TEST(RawCsv, ParseErrorsCarryRowNumber) {
  const std::string header = std::string(kRawHeader) + "\n";
  auto message = [](const std::string& text) {
    try {
      parse_raw_csv(text);
    } catch (const ParseError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  EXPECT_EQ(message("depth,degree\n").rfind("row 1:", 0), 0u);
  const std::string good = "explanations,1,1,50,0.2,0,7,0,1,0,0\n";
  EXPECT_EQ(message(header + good + "explanations,1,1,50,0.2,0,7,1,1,0\n").rfind("row 3:", 0), 0u);
  EXPECT_EQ(message(header + good + good + "explanations,1,x,50,0.2,0,7,0,1,0,0\n").rfind("row 4:", 0), 0u);
  EXPECT_EQ(message(header + "explanations,1,1,50,0.2,0,7,0,abc,0,0\n").rfind("row 2:", 0), 0u);
  EXPECT_EQ(message(header + good), "no error");
}

TEST(ExplanationExperiment, RowCountAndMetricRanges) {
  auto cfg = tiny_explain();
  auto res = run_explanation_experiment(cfg, 1);
  ASSERT_TRUE(res.manifest.complete());
  ASSERT_EQ(res.rows.size(), 7u);
  for (const auto& r : res.rows) {
    // A single node: both explanations are the same fit.
    EXPECT_NEAR(r.cos_sim, 1.0, 1e-12);
    EXPECT_EQ(r.mse, 0.0);
    EXPECT_EQ(r.recourse_error, 0.0);
  }
}

TEST(ExplanationExperiment, DeterministicAndReplayable) {
  auto cfg = tiny_explain();
  cfg.depths = {2};
  cfg.degrees = {2};
  cfg.trials = 2;
  cfg.points = 3;
  auto a = run_explanation_experiment(cfg, 1), b = run_explanation_experiment(cfg, 2);
  EXPECT_EQ(raw_csv(a.rows), raw_csv(b.rows));
  const auto& last = a.rows.back();
  EXPECT_EQ(last.trial_seed, trial_seed(cfg.seed, ExperimentKind::explanations, 0, 1));
  auto replay = run_explanation_trial(cfg, last.depth, last.degree, last.trial, last.trial_seed);
  EXPECT_EQ(raw_csv({replay.back()}), raw_csv({last}));
  cfg.seed = 4;
  EXPECT_NE(raw_csv(run_explanation_experiment(cfg, 1).rows), raw_csv(a.rows));
}

TEST(Config, DefaultsAndOverrides) {
  auto c = config_from_json(nlohmann::json::parse(R"({"kind": "fairness", "trials": 3, "lime_radius": [0.1],
      "fairness": {"upstream": ["demographic_parity"], "alpha_p": [0, 1.6], "seeds": [7]}})"));
  EXPECT_EQ(c.kind, ExperimentKind::fairness);
  EXPECT_EQ(c.trials, 3);
  EXPECT_EQ(c.points, 100);
  EXPECT_EQ(c.feat_dim, 12);
  EXPECT_EQ(c.lime_radius, std::vector<double>{0.1});
  EXPECT_EQ(c.fairness.upstream, std::vector<FairnessKind>{FairnessKind::demographic_parity});
  EXPECT_EQ(c.fairness.seeds, std::vector<std::uint64_t>{7});
  EXPECT_EQ(c.fairness.alpha_v.size(), 10u);
}

TEST(Config, InvalidValuesRejected) {
  using nlohmann::json;
  for (const char* bad : {R"({"trials": 0})", R"({"depths": [1, -2]})", R"({"lime_radius": [0]})",
                          R"({"kind": "plots"})", R"({"unknown": 1})", R"({"trials": "many"})",
                          R"({"fairness": {"upstream": ["parity"]}})", R"({"fairness": {"alpha_p": [-1]}})",
                          R"({"eigen_noise": {"lo": -1.5}})", R"([1, 2])"})
    EXPECT_THROW(config_from_json(json::parse(bad)), ConfigError) << bad;
}

TEST(Config, LoadFromFile) {
  const auto dir = std::filesystem::temp_directory_path() / "aisc_config_test";
  write_text_file(dir / "c.json", R"({"seed": 12, "points": 4})");
  auto c = load_config(dir / "c.json");
  EXPECT_EQ(c.seed, 12u);
  EXPECT_EQ(c.points, 4);
  write_text_file(dir / "broken.json", "{");
  EXPECT_THROW(load_config(dir / "broken.json"), ConfigError);
  EXPECT_THROW(load_config(dir / "missing.json"), ConfigError);
  std::filesystem::remove_all(dir);
}

TEST(TheorySuite, SmallGridPasses) {
  ExperimentConfig c;
  c.kind = ExperimentKind::theory1;
  c.theory_depth = 4;
  c.mc_trials = 4000;
  auto r = run_theory_suite(c, 1);
  EXPECT_TRUE(r.pass);
  EXPECT_TRUE(r.eigen.is_null());
  EXPECT_TRUE(r.footprint.is_null());
  EXPECT_EQ(r.bounds.at("validity").size(), 8u);
}

TEST(TheorySuite, ZeroNoiseGivesZeroError) {
  ExperimentConfig c;
  c.kind = ExperimentKind::theory1;
  c.theory_depth = 3;
  c.theory_sigma2 = {0.0};
  c.mc_trials = 100;
  auto r = run_theory_suite(c, 1);
  EXPECT_TRUE(r.pass);
  for (const auto& cell : r.bounds.at("validity"))
    for (const auto& d : cell.at("depths")) EXPECT_EQ(d.at("mean").get<double>(), 0.0);
}

TEST(TheorySuite, HalvedConstantIsCaught) {
  ExperimentConfig c;
  c.kind = ExperimentKind::theory1;
  c.theory_depth = 4;
  c.mc_trials = 4000;
  c.bound_c1_scale = 0.5;
  EXPECT_FALSE(run_theory_suite(c, 1).pass);
}

TEST(TheorySuite, EigenPart) {
  ExperimentConfig c;
  c.kind = ExperimentKind::eigen;
  c.eigen_depth = 5;
  c.mc_trials = 4000;
  auto r = run_theory_suite(c, 1);
  EXPECT_TRUE(r.pass);
  EXPECT_EQ(r.eigen.at("depths").size(), 5u);
}

TEST(FairnessSweep, GridCardinality) {
  FairnessSweepConfig f;
  EXPECT_EQ(sweep_units(f).size() * f.downstream.size() * f.alpha_v.size(), 4500u);
}

TEST(FairnessSweep, ZeroAlphaCollapsesKinds) {
  FairnessSweepConfig f;
  f.data.n = 1500;
  f.alpha_p = {0.0};
  f.alpha_v = {0.0};
  f.seeds = {0, 1};
  f.train.epochs = f.train.ft_epochs = 5;
  auto res = run_fairness_sweep(f, 2, 1);
  ASSERT_TRUE(res.manifest.complete());
  ASSERT_EQ(res.outcomes.size(), 18u);
  for (const auto& o : res.outcomes) {
    const auto& ref = res.outcomes[o.seed == 0 ? 0 : 9];
    EXPECT_EQ(o.accuracy, ref.accuracy);
    EXPECT_EQ(o.dp_gap, ref.dp_gap);
  }
  EXPECT_NE(res.manifest.note.find("Synthetic"), std::string::npos);
}

TEST(FairnessSweep, FailuresRecordedWithoutAborting) {
  FairnessSweepConfig f;
  f.data.n = 1500;
  f.alpha_p = {0.0};
  f.alpha_v = {0.0};
  f.seeds = {0};
  f.train.epochs = f.train.ft_epochs = 5;
  f.train.lr = 1e300;  // diverges
  auto res = run_fairness_sweep(f, 0, 1);
  EXPECT_FALSE(res.manifest.complete());
  EXPECT_EQ(res.manifest.failures.size(), 3u);
  EXPECT_EQ(res.manifest.to_json().at("complete"), false);
}

TEST(FairnessSweep, CsvAndReports) {
  FairnessSweepConfig f;
  f.data.n = 1500;
  f.alpha_p = {0.0, 3.2};
  f.alpha_v = {0.0, 3.2};
  f.seeds = {0};
  f.train.epochs = f.train.ft_epochs = 5;
  auto res = run_fairness_sweep(f, 0, 1);
  const auto csv = fairness_csv(res.outcomes);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), kFairnessHeader);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 3 * 2 * 3 * 2);
  auto fr = frontier_report(res.outcomes);
  EXPECT_EQ(fr.at("frontiers").size(), 3u * 2 * 3);
  EXPECT_EQ(fr.at("non_increasing").size(), 3u);
  auto rev = reversibility_json(res.outcomes);
  EXPECT_EQ(rev.size(), 2u * 3);
}

TEST(Pool, EveryIndexOnce) {
  std::vector<std::atomic<int>> hits(1000);
  run_pool(hits.size(), 4, [&](std::size_t i) { ++hits[i]; });
  for (const auto& h : hits) EXPECT_EQ(h.load(), 1);
}

TEST(Pool, ThreadsFromEnvironment) {
  ::setenv(kThreadsEnv, "3", 1);
  EXPECT_EQ(default_thread_count(), 3);
  ::setenv(kThreadsEnv, "zero", 1);
  EXPECT_THROW(default_thread_count(), ConfigError);
  ::unsetenv(kThreadsEnv);
  EXPECT_EQ(default_thread_count(), 1);
}
