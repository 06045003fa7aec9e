#ifndef AISC_EXPERIMENTS_HPP
#define AISC_EXPERIMENTS_HPP

// Config-driven experiment runners writing raw and aggregate CSV plus JSON
// reports. Work units run on a bounded pool; results are gathered in unit
// order, so output bytes do not depend on the thread count.

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "aisc/errors.hpp"
#include "aisc/explain.hpp"
#include "aisc/fairness.hpp"
#include "aisc/rng.hpp"
#include "aisc/theory.hpp"
#include "aisc/tree_chain.hpp"

namespace aisc {

// ---------------------------------------------------------------------------
// Worker pool

inline constexpr const char* kThreadsEnv = "AISC_THREADS";

/// AISC_THREADS when set to a positive integer, else 1.
inline int default_thread_count() {
  const char* s = std::getenv(kThreadsEnv);
  if (!s || !*s) return 1;
  int n = 0;
  auto [end, ec] = std::from_chars(s, s + std::strlen(s), n);
  if (ec != std::errc() || *end != '\0' || n < 1) throw ConfigError(std::string(kThreadsEnv) + " must be a positive integer");
  return n;
}

/// Calls work(i) for i in [0, n) on up to `threads` workers. work must not throw.
template <class F>
void run_pool(std::size_t n, int threads, F&& work) {
  std::atomic<std::size_t> next{0};
  auto loop = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) work(i);
  };
  const auto k = static_cast<std::size_t>(std::max(1, threads));
  if (k == 1 || n <= 1) {
    loop();
    return;
  }
  std::vector<std::jthread> pool;
  for (std::size_t t = 0; t < std::min(k, n); ++t) pool.emplace_back(loop);
}

// ---------------------------------------------------------------------------
// CSV

inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ArgumentError("cannot open " + path.string() + " for writing");
  f << text;
  if (!f) throw ArgumentError("failed writing " + path.string());
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ArgumentError("cannot open " + path.string());
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

// ---------------------------------------------------------------------------
// Config

enum class ExperimentKind { explanations, theory1, eigen, theorem2, fairness };

inline const char* to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::explanations: return "explanations";
    case ExperimentKind::theory1: return "theory1";
    case ExperimentKind::eigen: return "eigen";
    case ExperimentKind::theorem2: return "theorem2";
    case ExperimentKind::fairness: return "fairness";
  }
  return "?";
}

inline ExperimentKind experiment_kind_from_string(const std::string& s) {
  for (auto k : {ExperimentKind::explanations, ExperimentKind::theory1, ExperimentKind::eigen,
                 ExperimentKind::theorem2, ExperimentKind::fairness})
    if (s == to_string(k)) return k;
  throw ConfigError("unknown experiment kind '" + s + "'");
}

/// Experiment id folded into every per-trial seed.
inline std::uint64_t experiment_id(ExperimentKind k) { return static_cast<std::uint64_t>(k) + 1; }

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::explanations;
  std::uint64_t seed = 0;
  std::string out_dir = "results";

  // explanations
  std::vector<int> depths{1, 2, 3, 4};
  std::vector<int> degrees{1, 2, 3};
  std::vector<int> lime_samples{50, 100};
  std::vector<double> lime_radius{0.1, 0.2};
  int trials = 50;
  int points = 100;
  int feat_dim = 12;
  double recourse_cap = RecourseSearch::kDefaultCap;

  // error compounding
  int theory_depth = 6;
  std::vector<int> theory_dims{2, 4};
  std::vector<double> theory_sigma2{0.01, 0.04};
  int mc_trials = 10000;
  double theory_upstream = 0.0;
  /// Multiplies C1 in the bound; anything below 1 should make the suite fail.
  double bound_c1_scale = 1.0;

  // eigenvalue ratios
  int eigen_depth = 20;
  int eigen_dim = 4;
  UniformNoise eigen_noise;

  // footprint
  int footprint_instances = 20;
  int basis_count = 16;
  int z_values = 3;

  FairnessSweepConfig fairness;

  void validate() const {
    auto positive = [](const auto& v, const char* what) {
      if (v.empty()) throw ConfigError(std::string(what) + " must be non-empty");
      for (auto x : v)
        if (!(x > 0)) throw ConfigError(std::string(what) + " values must be positive");
    };
    positive(depths, "depths");
    positive(degrees, "degrees");
    positive(lime_samples, "lime_samples");
    positive(lime_radius, "lime_radius");
    positive(theory_dims, "theory_dims");
    if (trials < 1) throw ConfigError("trials must be >= 1");
    if (points < 1) throw ConfigError("points must be >= 1");
    if (feat_dim < 1) throw ConfigError("feat_dim must be >= 1");
    if (!(recourse_cap > 0)) throw ConfigError("recourse_cap must be positive");
    if (theory_depth < 1) throw ConfigError("theory_depth must be >= 1");
    for (double s : theory_sigma2)
      if (!(s >= 0)) throw ConfigError("theory_sigma2 values must be >= 0");
    if (mc_trials < 2) throw ConfigError("mc_trials must be >= 2");
    if (!(theory_upstream >= 0)) throw ConfigError("theory_upstream must be >= 0");
    if (!(bound_c1_scale > 0)) throw ConfigError("bound_c1_scale must be positive");
    if (eigen_depth < 1 || eigen_dim < 2) throw ConfigError("eigen_depth must be >= 1 and eigen_dim >= 2");
    if (footprint_instances < 1 || basis_count < 1 || z_values < 1)
      throw ConfigError("footprint grid values must be positive");
    try {
      eigen_noise.validate();
      fairness.validate();
    } catch (const ArgumentError& e) {
      throw ConfigError(e.what());
    }
  }
};

namespace detail {

template <class T>
void read_field(const nlohmann::json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config field '") + key + "': " + e.what());
  }
}

inline void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> known, const char* where) {
  if (!j.is_object()) throw ConfigError(std::string(where) + " must be a JSON object");
  for (const auto& [key, _] : j.items())
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; }))
      throw ConfigError(std::string("unknown ") + where + " field '" + key + "'");
}

inline std::vector<FairnessKind> read_kinds(const nlohmann::json& j, const char* key, std::vector<FairnessKind> dflt) {
  if (!j.contains(key)) return dflt;
  std::vector<FairnessKind> out;
  try {
    for (const auto& s : j.at(key).get<std::vector<std::string>>()) out.push_back(fairness_kind_from_string(s));
  } catch (const ArgumentError& e) {
    throw ConfigError(e.what());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config field '") + key + "': " + e.what());
  }
  return out;
}

}  // namespace detail

/// Fields absent from j keep their defaults; unknown fields are errors.
inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  using detail::read_field;
  detail::reject_unknown(j,
                         {"kind", "seed", "out_dir", "depths", "degrees", "lime_samples", "lime_radius", "trials",
                          "points", "feat_dim", "recourse_cap", "theory_depth", "theory_dims", "theory_sigma2",
                          "mc_trials", "theory_upstream", "bound_c1_scale", "eigen_depth", "eigen_dim", "eigen_noise",
                          "footprint_instances", "basis_count", "z_values", "fairness"},
                         "config");
  ExperimentConfig c;
  if (j.contains("kind")) {
    std::string k;
    read_field(j, "kind", k);
    c.kind = experiment_kind_from_string(k);
  }
  read_field(j, "seed", c.seed);
  read_field(j, "out_dir", c.out_dir);
  read_field(j, "depths", c.depths);
  read_field(j, "degrees", c.degrees);
  read_field(j, "lime_samples", c.lime_samples);
  read_field(j, "lime_radius", c.lime_radius);
  read_field(j, "trials", c.trials);
  read_field(j, "points", c.points);
  read_field(j, "feat_dim", c.feat_dim);
  read_field(j, "recourse_cap", c.recourse_cap);
  read_field(j, "theory_depth", c.theory_depth);
  read_field(j, "theory_dims", c.theory_dims);
  read_field(j, "theory_sigma2", c.theory_sigma2);
  read_field(j, "mc_trials", c.mc_trials);
  read_field(j, "theory_upstream", c.theory_upstream);
  read_field(j, "bound_c1_scale", c.bound_c1_scale);
  read_field(j, "eigen_depth", c.eigen_depth);
  read_field(j, "eigen_dim", c.eigen_dim);
  if (j.contains("eigen_noise")) {
    const auto& n = j.at("eigen_noise");
    detail::reject_unknown(n, {"lo", "hi"}, "eigen_noise");
    read_field(n, "lo", c.eigen_noise.lo);
    read_field(n, "hi", c.eigen_noise.hi);
  }
  read_field(j, "footprint_instances", c.footprint_instances);
  read_field(j, "basis_count", c.basis_count);
  read_field(j, "z_values", c.z_values);
  if (j.contains("fairness")) {
    const auto& f = j.at("fairness");
    detail::reject_unknown(f,
                           {"alpha_p", "alpha_v", "upstream", "downstream", "seeds", "n", "dim", "proportions",
                            "label_signal", "sensitive_signal", "hidden", "epochs", "batch_size", "lr", "ft_epochs",
                            "ft_batch_size", "ft_lr", "warm_start"},
                           "fairness");
    auto& fs = c.fairness;
    read_field(f, "alpha_p", fs.alpha_p);
    read_field(f, "alpha_v", fs.alpha_v);
    fs.upstream = detail::read_kinds(f, "upstream", fs.upstream);
    fs.downstream = detail::read_kinds(f, "downstream", fs.downstream);
    read_field(f, "seeds", fs.seeds);
    read_field(f, "n", fs.data.n);
    read_field(f, "dim", fs.data.dim);
    read_field(f, "proportions", fs.data.proportions);
    read_field(f, "label_signal", fs.data.label_signal);
    read_field(f, "sensitive_signal", fs.data.sensitive_signal);
    read_field(f, "hidden", fs.train.hidden);
    read_field(f, "epochs", fs.train.epochs);
    read_field(f, "batch_size", fs.train.batch_size);
    read_field(f, "lr", fs.train.lr);
    read_field(f, "ft_epochs", fs.train.ft_epochs);
    read_field(f, "ft_batch_size", fs.train.ft_batch_size);
    read_field(f, "ft_lr", fs.train.ft_lr);
    read_field(f, "warm_start", fs.train.warm_start);
  }
  c.validate();
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const ArgumentError& e) {
    throw ConfigError(e.what());
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

// ---------------------------------------------------------------------------
// Manifest

struct Manifest {
  std::string experiment;
  std::uint64_t seed = 0;
  std::size_t units_total = 0;
  std::size_t units_done = 0;
  std::vector<std::string> failures;
  std::vector<std::string> files;
  std::string note;

  bool complete() const { return failures.empty() && units_done == units_total; }

  nlohmann::json to_json() const {
    nlohmann::json j{{"experiment", experiment}, {"seed", seed},           {"complete", complete()},
                     {"units_total", units_total}, {"units_done", units_done}, {"failures", failures},
                     {"files", files}};
    if (!note.empty()) j["note"] = note;
    return j;
  }
};

// ---------------------------------------------------------------------------
// Explanation experiment

struct ExplanationRow {
  int depth = 0;
  int degree = 0;
  int lime_samples = 0;
  double lime_radius = 0;
  int trial = 0;
  std::uint64_t trial_seed = 0;
  int point = 0;
  double cos_sim = 0;
  double mse = 0;
  double recourse_error = 0;
};

inline constexpr const char* kRawHeader =
    "experiment,depth,degree,lime_samples,lime_radius,trial,trial_seed,point,cos_sim,mse,recourse_error";

namespace seed_tags {
inline constexpr std::uint64_t kQuery = 11;
inline constexpr std::uint64_t kLime = 12;
}  // namespace seed_tags

/// Seed of one (experiment, grid cell, trial) work unit.
inline std::uint64_t trial_seed(std::uint64_t master, ExperimentKind kind, std::size_t cell, int trial) {
  return derive_seed(master, {experiment_id(kind), static_cast<std::uint64_t>(cell), static_cast<std::uint64_t>(trial)});
}

/// Trains one tree chain and compares both explanations at `points` query
/// points for every LIME setting. Rows depend only on (cfg grids, depth,
/// degree, trial, seed), so any row can be replayed from its trial_seed.
inline std::vector<ExplanationRow> run_explanation_trial(const ExperimentConfig& cfg, int depth, int degree, int trial,
                                                         std::uint64_t seed) {
  TreeSpec spec;
  spec.depth = depth;
  spec.degree = degree;
  spec.feat_dim = cfg.feat_dim;
  spec.seed = seed;
  TreeChain tc = build_tree_chain(spec);
  train_tree_chain(tc);

  Rng qrng = make_rng(derive_seed(seed, {seed_tags::kQuery}));
  const Eigen::MatrixXd queries = tc.data_dist.sample(cfg.points, qrng);
  auto predict = [&tc](const Eigen::VectorXd& x) {
    return forward_composed(tc.graph, tc.models, tc.sink, Eigen::MatrixXd(x.transpose()))(0);
  };
  const double nan = std::numeric_limits<double>::quiet_NaN();

  std::vector<ExplanationRow> rows;
  std::uint64_t setting = 0;
  for (int samples : cfg.lime_samples)
    for (double radius : cfg.lime_radius) {
      for (int p = 0; p < cfg.points; ++p) {
        const Eigen::VectorXd x = queries.row(p).transpose();
        LimeConfig lc;
        lc.radius = radius;
        lc.samples = samples;
        lc.seed = derive_seed(seed, {seed_tags::kLime, setting, static_cast<std::uint64_t>(p)});
        const auto end = end_to_end_explanation(tc.graph, tc.models, tc.sink, x, lc);
        const auto sup = supply_chain_explanation(tc.graph, tc.models, tc.sink, x, lc);
        ExplanationRow r{depth, degree, samples, radius, trial, seed, p, nan, explanation_mse(sup, end), nan};
        try {
          r.cos_sim = cosine_similarity(sup, end);
        } catch (const DegenerateError&) {
        }
        try {
          r.recourse_error = recourse_error(recourse_distance(predict, x, sup, cfg.recourse_cap),
                                            recourse_distance(predict, x, end, cfg.recourse_cap));
        } catch (const DegenerateError&) {
        }
        rows.push_back(r);
      }
      ++setting;
    }
  return rows;
}

struct ExplanationResult {
  std::vector<ExplanationRow> rows;
  Manifest manifest;
};

using ProgressFn = std::function<void(std::size_t done, std::size_t total)>;

inline ExplanationResult run_explanation_experiment(const ExperimentConfig& cfg, int threads,
                                                    const ProgressFn& progress = {}) {
  cfg.validate();
  struct Unit {
    int depth, degree, trial;
    std::size_t cell;
  };
  std::vector<Unit> units;
  std::size_t cell = 0;
  for (int depth : cfg.depths)
    for (int degree : cfg.degrees) {
      for (int t = 0; t < cfg.trials; ++t) units.push_back({depth, degree, t, cell});
      ++cell;
    }

  std::vector<std::vector<ExplanationRow>> results(units.size());
  std::vector<std::string> errors(units.size());
  std::atomic<std::size_t> done{0};
  std::mutex progress_mutex;
  run_pool(units.size(), threads, [&](std::size_t i) {
    const auto& u = units[i];
    try {
      results[i] = run_explanation_trial(cfg, u.depth, u.degree, u.trial,
                                         trial_seed(cfg.seed, ExperimentKind::explanations, u.cell, u.trial));
    } catch (const std::exception& e) {
      errors[i] = "depth=" + std::to_string(u.depth) + ",degree=" + std::to_string(u.degree) +
                  ",trial=" + std::to_string(u.trial) + ": " + e.what();
    }
    const auto n = ++done;
    if (progress) {
      std::lock_guard lock(progress_mutex);
      progress(n, units.size());
    }
  });

  ExplanationResult out;
  out.manifest.experiment = to_string(ExperimentKind::explanations);
  out.manifest.seed = cfg.seed;
  out.manifest.units_total = units.size();
  for (std::size_t i = 0; i < units.size(); ++i) {
    if (!errors[i].empty()) {
      out.manifest.failures.push_back(errors[i]);
      continue;
    }
    ++out.manifest.units_done;
    out.rows.insert(out.rows.end(), results[i].begin(), results[i].end());
  }
  return out;
}

inline std::string raw_csv(const std::vector<ExplanationRow>& rows) {
  std::string s = std::string(kRawHeader) + "\n";
  for (const auto& r : rows) {
    s += std::string(to_string(ExperimentKind::explanations)) + ',' + std::to_string(r.depth) + ',' +
         std::to_string(r.degree) + ',' + std::to_string(r.lime_samples) + ',' + format_double(r.lime_radius) + ',' +
         std::to_string(r.trial) + ',' + std::to_string(r.trial_seed) + ',' + std::to_string(r.point) + ',' +
         format_double(r.cos_sim) + ',' + format_double(r.mse) + ',' + format_double(r.recourse_error) + '\n';
  }
  return s;
}

namespace detail {

template <class T>
T parse_int_field(const std::string& s, std::size_t line, const char* name) {
  T v{};
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size())
    throw ParseError("row " + std::to_string(line) + ": bad " + name + " '" + s + "'");
  return v;
}

inline double parse_double_field(const std::string& s, std::size_t line, const char* name) {
  if (s.empty()) throw ParseError("row " + std::to_string(line) + ": empty " + name);
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size()) throw ParseError("row " + std::to_string(line) + ": bad " + name + " '" + s + "'");
  return v;
}

}  // namespace detail

/// Inverse of raw_csv. Line numbers in errors count the header as row 1.
inline std::vector<ExplanationRow> parse_raw_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line != kRawHeader) throw ParseError("row 1: expected header '" + std::string(kRawHeader) + "'");
  std::vector<ExplanationRow> rows;
  std::size_t n = 1;
  while (std::getline(is, line)) {
    ++n;
    if (line.empty()) throw ParseError("row " + std::to_string(n) + ": empty line");
    auto f = split_csv_line(line);
    if (f.size() != 11) throw ParseError("row " + std::to_string(n) + ": expected 11 fields, got " + std::to_string(f.size()));
    if (f[0] != to_string(ExperimentKind::explanations))
      throw ParseError("row " + std::to_string(n) + ": unknown experiment '" + f[0] + "'");
    using detail::parse_double_field;
    using detail::parse_int_field;
    ExplanationRow r;
    r.depth = parse_int_field<int>(f[1], n, "depth");
    r.degree = parse_int_field<int>(f[2], n, "degree");
    r.lime_samples = parse_int_field<int>(f[3], n, "lime_samples");
    r.lime_radius = parse_double_field(f[4], n, "lime_radius");
    r.trial = parse_int_field<int>(f[5], n, "trial");
    r.trial_seed = parse_int_field<std::uint64_t>(f[6], n, "trial_seed");
    r.point = parse_int_field<int>(f[7], n, "point");
    r.cos_sim = parse_double_field(f[8], n, "cos_sim");
    r.mse = parse_double_field(f[9], n, "mse");
    r.recourse_error = parse_double_field(f[10], n, "recourse_error");
    rows.push_back(r);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Aggregation

/// Linear interpolation between order statistics at rank (n-1)*p/100.
inline double percentile(std::vector<double> v, double p) {
  if (v.empty()) throw ArgumentError("percentile of an empty sample");
  if (!(p >= 0 && p <= 100)) throw ArgumentError("percentile must lie in [0, 100]");
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1) * p / 100.0;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

struct MeanCi {
  double mean = 0;
  double low = 0;
  double high = 0;
  int n = 0;
  bool single = false;  // one value: no spread estimate, interval collapses to the mean
};

/// Mean and mean +- 1.96 sd / sqrt(n) with the n-1 sample sd.
inline MeanCi mean_ci95(const std::vector<double>& v) {
  if (v.empty()) throw ArgumentError("mean of an empty sample");
  MeanCi m;
  m.n = static_cast<int>(v.size());
  for (double x : v) m.mean += x;
  m.mean /= m.n;
  if (m.n == 1) {
    m.low = m.high = m.mean;
    m.single = true;
    return m;
  }
  double ss = 0;
  for (double x : v) ss += (x - m.mean) * (x - m.mean);
  const double half = 1.96 * std::sqrt(ss / (m.n - 1)) / std::sqrt(static_cast<double>(m.n));
  m.low = m.mean - half;
  m.high = m.mean + half;
  return m;
}

struct AggregateRow {
  int depth = 0;
  int degree = 0;
  int lime_samples = 0;
  double lime_radius = 0;
  std::string metric;
  int percentile = 0;
  MeanCi stat;
};

inline constexpr const char* kAggregateHeader =
    "experiment,depth,degree,lime_samples,lime_radius,metric,percentile,mean,ci95_low,ci95_high,trials,flag";
inline constexpr int kPercentiles[] = {10, 50, 90};
inline constexpr const char* kMetrics[] = {"cos_sim", "mse", "recourse_error"};

inline double metric_value(const ExplanationRow& r, const std::string& m) {
  if (m == "cos_sim") return r.cos_sim;
  if (m == "mse") return r.mse;
  if (m == "recourse_error") return r.recourse_error;
  throw ArgumentError("unknown metric '" + m + "'");
}

/// Per (depth, degree, samples, radius) cell: percentiles over each trial's
/// points, then mean and CI across trials. NaN values are skipped; a trial
/// with no finite value for a metric does not contribute to it.
inline std::vector<AggregateRow> aggregate_rows(const std::vector<ExplanationRow>& rows) {
  using Key = std::tuple<int, int, int, double>;
  std::map<Key, std::map<int, std::vector<const ExplanationRow*>>> cells;
  for (const auto& r : rows) cells[{r.depth, r.degree, r.lime_samples, r.lime_radius}][r.trial].push_back(&r);
  std::vector<AggregateRow> out;
  for (const auto& [key, trials] : cells)
    for (const char* metric : kMetrics)
      for (int pct : kPercentiles) {
        std::vector<double> per_trial;
        for (const auto& [_, rs] : trials) {
          std::vector<double> v;
          for (const auto* r : rs)
            if (double x = metric_value(*r, metric); !std::isnan(x)) v.push_back(x);
          if (!v.empty()) per_trial.push_back(percentile(v, pct));
        }
        if (per_trial.empty()) continue;
        out.push_back({std::get<0>(key), std::get<1>(key), std::get<2>(key), std::get<3>(key), metric, pct,
                       mean_ci95(per_trial)});
      }
  return out;
}

inline std::string aggregate_csv(const std::vector<AggregateRow>& rows) {
  std::string s = std::string(kAggregateHeader) + "\n";
  for (const auto& r : rows)
    s += std::string(to_string(ExperimentKind::explanations)) + ',' + std::to_string(r.depth) + ',' +
         std::to_string(r.degree) + ',' + std::to_string(r.lime_samples) + ',' + format_double(r.lime_radius) + ',' +
         r.metric + ',' + std::to_string(r.percentile) + ',' + format_double(r.stat.mean) + ',' +
         format_double(r.stat.low) + ',' + format_double(r.stat.high) + ',' + std::to_string(r.stat.n) + ',' +
         (r.stat.single ? "single_trial" : "") + '\n';
  return s;
}

/// Aggregate row lookup; throws LookupError when absent.
inline const AggregateRow& find_aggregate(const std::vector<AggregateRow>& rows, int depth, int degree,
                                          int lime_samples, double lime_radius, const std::string& metric, int pct) {
  for (const auto& r : rows)
    if (r.depth == depth && r.degree == degree && r.lime_samples == lime_samples && r.lime_radius == lime_radius &&
        r.metric == metric && r.percentile == pct)
      return r;
  throw LookupError("no aggregate for depth=" + std::to_string(depth) + ",degree=" + std::to_string(degree) + "," +
                    metric + " p" + std::to_string(pct));
}

// ---------------------------------------------------------------------------
// Theory suite

struct TheorySuiteResult {
  nlohmann::json bounds;     // error compounding: validity and tightness
  nlohmann::json eigen;      // eigenvalue-ratio floor
  nlohmann::json footprint;  // footprint sandwich
  bool pass = true;
};

inline nlohmann::json depth_stat_json(const DepthStat& s) {
  return {{"depth", s.depth}, {"mean", s.mean}, {"se", s.se}, {"bound", s.bound}, {"ratio", s.ratio()}};
}

/// Bound validity for every (dim, sigma2, map family) cell.
inline nlohmann::json run_bound_checks(const ExperimentConfig& cfg, bool& pass) {
  nlohmann::json cells = nlohmann::json::array();
  std::size_t cell = 0;
  for (int dim : cfg.theory_dims)
    for (double sigma2 : cfg.theory_sigma2)
      for (auto maps : {ChainMaps::scaled_identity, ChainMaps::random}) {
        ChainInstance inst;
        inst.depth = cfg.theory_depth;
        inst.dim = dim;
        inst.sigma2 = sigma2;
        inst.upstream = cfg.theory_upstream;
        inst.trials = cfg.mc_trials;
        inst.maps = maps;
        inst.seed = trial_seed(cfg.seed, ExperimentKind::theory1, cell++, 0);
        auto rep = simulate_error_recursion(inst);
        nlohmann::json depths = nlohmann::json::array();
        bool ok = true;
        for (auto st : rep.depths) {
          st.bound = bound_rhs(st.depth, rep.c1 * cfg.bound_c1_scale, rep.c2, dim, sigma2, rep.upstream_error);
          ok = ok && st.within_bound();
          auto j = depth_stat_json(st);
          j["within_bound"] = st.within_bound();
          depths.push_back(j);
        }
        pass = pass && ok;
        cells.push_back({{"dim", dim},
                         {"sigma2", sigma2},
                         {"maps", maps == ChainMaps::random ? "random" : "scaled_identity"},
                         {"c1", rep.c1},
                         {"c2", rep.c2},
                         {"upstream_error", rep.upstream_error},
                         {"pass", ok},
                         {"depths", depths}});
      }
  return cells;
}

inline constexpr double kTightnessFloor = 0.90;

/// Equality construction: empirical/bound ratio in [0.90, 1 + 3 SE / bound],
/// plus 1e-12 for rounding when SE is zero.
inline nlohmann::json run_tightness_checks(const ExperimentConfig& cfg, bool& pass) {
  nlohmann::json cells = nlohmann::json::array();
  std::size_t cell = 0;
  for (int dim : cfg.theory_dims)
    for (double sigma2 : cfg.theory_sigma2) {
      auto stats = tightness_check(cfg.theory_depth, 1.0, 1.0, dim, sigma2, cfg.mc_trials, 1.0,
                                   trial_seed(cfg.seed, ExperimentKind::theory1, 1000 + cell++, 0));
      nlohmann::json depths = nlohmann::json::array();
      bool ok = true;
      for (auto st : stats) {
        st.bound = bound_rhs(st.depth, cfg.bound_c1_scale, 1.0, dim, sigma2, 1.0 + dim * sigma2 * 1.0);
        const bool in = st.ratio() >= kTightnessFloor && st.ratio() <= 1.0 + 3 * st.se / st.bound + 1e-12;
        ok = ok && in;
        auto j = depth_stat_json(st);
        j["in_range"] = in;
        depths.push_back(j);
      }
      pass = pass && ok;
      cells.push_back({{"dim", dim}, {"sigma2", sigma2}, {"pass", ok}, {"depths", depths}});
    }
  return cells;
}

inline nlohmann::json run_eigen_check(const ExperimentConfig& cfg, bool& pass) {
  auto rep = eigen_ratio_growth(cfg.eigen_depth, cfg.eigen_noise, cfg.eigen_dim, cfg.mc_trials,
                                trial_seed(cfg.seed, ExperimentKind::eigen, 0, 0));
  nlohmann::json depths = nlohmann::json::array();
  bool ok = true;
  for (const auto& s : rep.depths) {
    ok = ok && s.holds();
    depths.push_back({{"depth", s.depth},
                      {"max_pair_mean", s.max_pair_mean},
                      {"se", s.se},
                      {"floor", s.floor},
                      {"floor_se", s.floor_se},
                      {"holds", s.holds()}});
  }
  pass = pass && ok;
  return {{"v", rep.v}, {"v_se", rep.v_se}, {"pass", ok}, {"depths", depths}};
}

inline nlohmann::json footprint_json(const FootprintReport& r) {
  nlohmann::json probes = nlohmann::json::array();
  for (const auto& p : r.probes)
    probes.push_back({{"coord", p.coord},
                      {"z_index", p.z_index},
                      {"value", p.value},
                      {"in_set", p.in_set},
                      {"bound", p.bound},
                      {"violations", p.violations}});
  return {{"status", to_string(r.status)},
          {"eps_p", r.eps_p},
          {"eps_v", r.eps_v},
          {"eta_v", r.eta_v},
          {"r_norm", r.r_norm},
          {"w_norm", r.w_norm},
          {"lower", r.lower_mc},
          {"upper", std::isfinite(r.upper_mc) ? nlohmann::json(r.upper_mc) : nlohmann::json("inf")},
          {"s_size", r.s_size},
          {"s_prime_size", r.s_prime_size},
          {"sandwich", r.sandwich()},
          {"probes", probes}};
}

inline nlohmann::json run_footprint_checks(const ExperimentConfig& cfg, int threads, bool& pass) {
  std::vector<FootprintReport> reports(static_cast<std::size_t>(cfg.footprint_instances));
  std::vector<std::string> errors(reports.size());
  run_pool(reports.size(), threads, [&](std::size_t i) {
    try {
      reports[i] = footprint_check(random_footprint_instance(
          cfg.basis_count, cfg.z_values, trial_seed(cfg.seed, ExperimentKind::theorem2, 0, static_cast<int>(i))));
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });
  nlohmann::json items = nlohmann::json::array();
  bool ok = true;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    if (!errors[i].empty()) {
      ok = false;
      items.push_back({{"instance", i}, {"error", errors[i]}});
      continue;
    }
    const auto& r = reports[i];
    const bool inst_ok = r.status == FootprintReport::Status::empty || (r.holds() && r.sandwich());
    ok = ok && inst_ok;
    auto j = footprint_json(r);
    j["instance"] = i;
    j["pass"] = inst_ok;
    items.push_back(j);
  }
  pass = pass && ok;
  return {{"pass", ok}, {"instances", items}};
}

/// Runs the parts selected by cfg.kind (every part unless kind is theory1,
/// eigen or theorem2).
inline TheorySuiteResult run_theory_suite(const ExperimentConfig& cfg, int threads) {
  cfg.validate();
  const bool all = cfg.kind != ExperimentKind::theory1 && cfg.kind != ExperimentKind::eigen &&
                   cfg.kind != ExperimentKind::theorem2;
  TheorySuiteResult out;
  if (all || cfg.kind == ExperimentKind::theory1) {
    bool ok = true;
    out.bounds["validity"] = run_bound_checks(cfg, ok);
    out.bounds["tightness"] = run_tightness_checks(cfg, ok);
    out.bounds["bound_c1_scale"] = cfg.bound_c1_scale;
    out.bounds["pass"] = ok;
    out.pass = out.pass && ok;
  }
  if (all || cfg.kind == ExperimentKind::eigen) {
    bool ok = true;
    out.eigen = run_eigen_check(cfg, ok);
    out.pass = out.pass && ok;
  }
  if (all || cfg.kind == ExperimentKind::theorem2) {
    bool ok = true;
    out.footprint = run_footprint_checks(cfg, threads, ok);
    out.pass = out.pass && ok;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Fairness sweep

inline constexpr const char* kFairnessHeader =
    "seed,upstream_kind,alpha_p,downstream_kind,alpha_v,accuracy,dp_gap,fpr_gap,tpr_gap,eo_gap";

inline constexpr const char* kFairnessSubstitutionNote =
    "Synthetic two-group tabular data and small MLPs stand in for the image benchmark and pretrained "
    "convolutional network; frontier-area trends are compared, not published accuracy or gap values.";

inline std::uint64_t fairness_data_seed(std::uint64_t master, std::uint64_t seed) {
  return derive_seed(master, {experiment_id(ExperimentKind::fairness), seed});
}

struct FairnessSweepResult {
  std::vector<ModelOutcome> outcomes;
  Manifest manifest;
};

inline FairnessSweepResult run_fairness_sweep(const FairnessSweepConfig& cfg, std::uint64_t master, int threads,
                                              const ProgressFn& progress = {}) {
  cfg.validate();
  std::map<std::uint64_t, GroupSplits> data;
  for (auto s : cfg.seeds) data.emplace(s, generate_group_data(cfg.data, fairness_data_seed(master, s)));
  const auto units = sweep_units(cfg);
  std::vector<std::vector<ModelOutcome>> results(units.size());
  std::vector<std::string> errors(units.size());
  std::atomic<std::size_t> done{0};
  std::mutex progress_mutex;
  run_pool(units.size(), threads, [&](std::size_t i) {
    const auto& u = units[i];
    try {
      results[i] = run_base_unit(cfg, data.at(u.seed), u, master);
    } catch (const std::exception& e) {
      errors[i] = "seed=" + std::to_string(u.seed) + ",upstream=" + to_string(u.upstream) +
                  ",alpha_p=" + format_double(cfg.alpha_p[u.alpha_index]) + ": " + e.what();
    }
    const auto n = ++done;
    if (progress) {
      std::lock_guard lock(progress_mutex);
      progress(n, units.size());
    }
  });
  FairnessSweepResult out;
  out.manifest.experiment = to_string(ExperimentKind::fairness);
  out.manifest.seed = master;
  out.manifest.units_total = units.size();
  out.manifest.note = kFairnessSubstitutionNote;
  for (std::size_t i = 0; i < units.size(); ++i) {
    if (!errors[i].empty()) {
      out.manifest.failures.push_back(errors[i]);
      continue;
    }
    ++out.manifest.units_done;
    out.outcomes.insert(out.outcomes.end(), results[i].begin(), results[i].end());
  }
  return out;
}

inline std::string fairness_csv(const std::vector<ModelOutcome>& outcomes) {
  std::string s = std::string(kFairnessHeader) + "\n";
  for (const auto& o : outcomes)
    s += std::to_string(o.seed) + ',' + to_string(o.upstream) + ',' + format_double(o.alpha_p) + ',' +
         to_string(o.downstream) + ',' + format_double(o.alpha_v) + ',' + format_double(o.accuracy) + ',' +
         format_double(o.dp_gap) + ',' + format_double(o.fpr_gap) + ',' + format_double(o.tpr_gap) + ',' +
         format_double(o.eo_gap) + '\n';
  return s;
}

/// Per-(upstream, alpha_p, seed, downstream) dp-gap frontiers with their
/// areas, the mean areas and whether they are non-increasing in alpha_p.
inline nlohmann::json frontier_report(const std::vector<ModelOutcome>& outcomes) {
  nlohmann::json j;
  if (outcomes.empty()) return j;
  double hi = 0;
  for (const auto& o : outcomes) hi = std::max(hi, o.dp_gap);
  std::map<std::tuple<FairnessKind, double, std::uint64_t, FairnessKind>, std::vector<GapAccuracy>> cells;
  for (const auto& o : outcomes) cells[{o.upstream, o.alpha_p, o.seed, o.downstream}].push_back({o.dp_gap, o.accuracy});
  nlohmann::json fr = nlohmann::json::array();
  for (const auto& [key, pts] : cells) {
    nlohmann::json points = nlohmann::json::array(), hull = nlohmann::json::array();
    for (const auto& p : pareto_frontier(pts)) points.push_back({p.gap, p.accuracy});
    for (const auto& p : pareto_hull(pts)) hull.push_back({p.gap, p.accuracy});
    fr.push_back({{"upstream", to_string(std::get<0>(key))},
                  {"alpha_p", std::get<1>(key)},
                  {"seed", std::get<2>(key)},
                  {"downstream", to_string(std::get<3>(key))},
                  {"frontier", points},
                  {"hull", hull},
                  {"area", frontier_area(pts, 0.0, hi)}});
  }
  j["metric"] = "dp_gap";
  j["interval"] = {0.0, hi};
  j["frontiers"] = fr;
  const auto areas = mean_frontier_area(outcomes, GapMetric::dp);
  nlohmann::json mean = nlohmann::json::array();
  std::map<FairnessKind, std::vector<double>> by_kind;
  for (const auto& [k, a] : areas) {
    mean.push_back({{"upstream", to_string(k.first)}, {"alpha_p", k.second}, {"mean_area", a}});
    by_kind[k.first].push_back(a);
  }
  j["mean_area"] = mean;
  nlohmann::json trend;
  for (const auto& [k, v] : by_kind)
    trend[to_string(k)] = std::is_sorted(v.rbegin(), v.rend());
  j["non_increasing"] = trend;
  return j;
}

inline nlohmann::json reversibility_json(const std::vector<ModelOutcome>& outcomes) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : reversibility_report(outcomes)) {
    nlohmann::json ranges;
    for (const auto& [k, r] : c.ranges) ranges[to_string(k)] = {r.lo, r.hi};
    cells.push_back({{"alpha_p", c.alpha_p}, {"metric", to_string(c.metric)}, {"ranges", ranges}, {"overlap", c.overlap}});
  }
  return cells;
}

}  // namespace aisc

#endif  // AISC_EXPERIMENTS_HPP
