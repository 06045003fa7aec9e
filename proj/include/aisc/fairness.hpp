#ifndef AISC_FAIRNESS_HPP
#define AISC_FAIRNESS_HPP

// Fairness-regularized base training, last-layer fine-tuning on frozen
// embeddings, group-fairness metrics and accuracy/gap Pareto frontiers.

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "aisc/data.hpp"
#include "aisc/errors.hpp"
#include "aisc/mlp.hpp"
#include "aisc/rng.hpp"

namespace aisc {

enum class FairnessKind { none, demographic_parity, equalized_fpr, equalized_odds };

inline const char* to_string(FairnessKind k) {
  switch (k) {
    case FairnessKind::none: return "none";
    case FairnessKind::demographic_parity: return "demographic_parity";
    case FairnessKind::equalized_fpr: return "equalized_fpr";
    case FairnessKind::equalized_odds: return "equalized_odds";
  }
  return "?";
}

inline FairnessKind fairness_kind_from_string(const std::string& s) {
  for (auto k : {FairnessKind::none, FairnessKind::demographic_parity, FairnessKind::equalized_fpr,
                 FairnessKind::equalized_odds})
    if (s == to_string(k)) return k;
  throw ArgumentError("unknown fairness kind '" + s + "'");
}

// ---------------------------------------------------------------------------
// Data

struct GroupDataSpec {
  int n = 6000;
  int dim = 20;
  /// Shares of (y=1,s=1), (y=1,s=0), (y=0,s=1), (y=0,s=0).
  std::array<double, 4> proportions{0.4, 0.2, 0.2, 0.2};
  double label_signal = 1.0;
  double sensitive_signal = 2.0;
  double noise_sd = 1.0;

  void validate() const {
    if (n < 10) throw ArgumentError("need at least 10 rows");
    if (dim < 2) throw ArgumentError("need at least two feature dimensions");
    double sum = 0;
    for (double p : proportions) {
      if (!(p >= 0)) throw ArgumentError("group proportions must be non-negative");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ArgumentError("group proportions must sum to 1");
    if (!(noise_sd > 0)) throw ArgumentError("noise sd must be positive");
  }
};

struct GroupSplits {
  Dataset base_train, base_test, ft_train, ft_test;
  std::array<std::vector<int>, 4> index;  // rows of the full sample in each split
};

/// Group (y, s) drawn with the given proportions; features are
/// (2y-1)*label_signal*e0 + (2s-1)*sensitive_signal*e1 + N(0, noise_sd^2 I).
/// Rows are shuffled and cut 60/10/20/10 into base-train, base-test,
/// fine-tune-train and fine-tune-test.
inline GroupSplits generate_group_data(const GroupDataSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng = make_rng(seed);
  Dataset all;
  all.features.resize(spec.n, spec.dim);
  for (int i = 0; i < spec.n; ++i) {
    const double u = uniform01(rng);
    int grp = 3;
    double acc = 0;
    for (int g = 0; g < 4; ++g) {
      acc += spec.proportions[g];
      if (u < acc) {
        grp = g;
        break;
      }
    }
    const int y = grp < 2 ? 1 : 0;
    const int s = grp % 2 == 0 ? 1 : 0;
    for (int j = 0; j < spec.dim; ++j) all.features(i, j) = spec.noise_sd * normal01(rng);
    all.features(i, 0) += (2 * y - 1) * spec.label_signal;
    all.features(i, 1) += (2 * s - 1) * spec.sensitive_signal;
    all.labels.push_back(y);
    all.sensitive.push_back(s);
    all.group.push_back(grp);
  }

  std::vector<int> perm(spec.n);
  for (int i = 0; i < spec.n; ++i) perm[i] = i;
  for (int i = spec.n; i > 1; --i) std::swap(perm[i - 1], perm[rng() % static_cast<std::uint64_t>(i)]);
  const std::array<double, 3> cuts{0.6, 0.7, 0.9};
  GroupSplits out;
  int start = 0;
  for (int k = 0; k < 4; ++k) {
    const int end = k < 3 ? static_cast<int>(std::lround(cuts[k] * spec.n)) : spec.n;
    out.index[k].assign(perm.begin() + start, perm.begin() + end);
    start = end;
  }
  out.base_train = all.subset(out.index[0]);
  out.base_test = all.subset(out.index[1]);
  out.ft_train = all.subset(out.index[2]);
  out.ft_test = all.subset(out.index[3]);
  return out;
}

// ---------------------------------------------------------------------------
// Regularizers

namespace detail {

// |mean score over rows of group 0 - over group 1|, restricted to rows whose
// label equals `label` (or all rows when label < 0). Adds the gradient to grad.
inline double group_gap(const Eigen::VectorXd& scores, std::span<const int> labels, std::span<const int> sensitive,
                        int label, Eigen::VectorXd* grad) {
  double sum[2] = {0, 0};
  int count[2] = {0, 0};
  for (Eigen::Index i = 0; i < scores.size(); ++i) {
    if (label >= 0 && labels[i] != label) continue;
    sum[sensitive[i]] += scores(i);
    ++count[sensitive[i]];
  }
  for (int g = 0; g < 2; ++g)
    if (count[g] == 0) {
      const std::string cell = "sensitive=" + std::to_string(g) + (label >= 0 ? ",label=" + std::to_string(label) : "");
      throw DegenerateCellError("no rows in cell " + cell, cell);
    }
  const double diff = sum[0] / count[0] - sum[1] / count[1];
  if (grad) {
    const double sgn = diff > 0 ? 1.0 : (diff < 0 ? -1.0 : 0.0);
    for (Eigen::Index i = 0; i < scores.size(); ++i) {
      if (label >= 0 && labels[i] != label) continue;
      const int g = sensitive[i];
      (*grad)(i) += (g == 0 ? sgn : -sgn) / count[g];
    }
  }
  return std::abs(diff);
}

}  // namespace detail

/// Smoothed fairness penalty on scores in (0,1). When grad is given it must be
/// sized like scores; the penalty's gradient is added to it.
inline double fairness_regularizer(FairnessKind kind, const Eigen::VectorXd& scores, std::span<const int> labels,
                                   std::span<const int> sensitive, Eigen::VectorXd* grad = nullptr) {
  const auto n = static_cast<std::size_t>(scores.size());
  if (sensitive.size() != n) throw ArgumentError("sensitive attribute length does not match scores");
  if (kind != FairnessKind::none && kind != FairnessKind::demographic_parity && labels.size() != n)
    throw ArgumentError("label length does not match scores");
  switch (kind) {
    case FairnessKind::none: return 0.0;
    case FairnessKind::demographic_parity: return detail::group_gap(scores, labels, sensitive, -1, grad);
    case FairnessKind::equalized_fpr: return detail::group_gap(scores, labels, sensitive, 0, grad);
    case FairnessKind::equalized_odds:
      return detail::group_gap(scores, labels, sensitive, 0, grad) + detail::group_gap(scores, labels, sensitive, 1, grad);
  }
  return 0.0;
}

/// Penalty adapter for MlpModel::train over a dataset. Batches missing a
/// required cell contribute zero and bump *degenerate.
inline ScorePenalty make_fairness_penalty(FairnessKind kind, const std::vector<int>& labels,
                                          const std::vector<int>& sensitive, long* degenerate) {
  return [kind, &labels, &sensitive, degenerate](const Eigen::VectorXd& scores, std::span<const int> rows,
                                                 Eigen::VectorXd& grad) -> double {
    std::vector<int> yb(rows.size()), sb(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      yb[i] = labels[rows[i]];
      sb[i] = sensitive[rows[i]];
    }
    grad = Eigen::VectorXd::Zero(scores.size());
    try {
      return fairness_regularizer(kind, scores, yb, sb, &grad);
    } catch (const DegenerateCellError&) {
      grad.setZero();
      if (degenerate) ++*degenerate;
      return 0.0;
    }
  };
}

// ---------------------------------------------------------------------------
// Training

struct FairTrainConfig {
  std::vector<int> hidden{32, 32};
  int epochs = 40;
  int batch_size = 256;
  double lr = 1e-3;
  int ft_epochs = 40;
  int ft_batch_size = 256;
  double ft_lr = 1e-3;
  /// Start the fine-tuned head from the base head instead of a fresh init.
  bool warm_start = false;
};

struct TrainedModel {
  MlpModel model;
  TrainTrace trace;
  long degenerate_batches = 0;
};

inline TrainedModel train_base_fair(const Dataset& data, double alpha_p, FairnessKind kind, std::uint64_t seed,
                                    const FairTrainConfig& cfg = {}) {
  data.validate();
  if (data.labels.empty() || data.sensitive.empty()) throw ArgumentError("base training needs labels and sensitive");
  if (!(alpha_p >= 0)) throw ArgumentError("alpha_p must be non-negative");
  std::vector<int> widths{data.dim()};
  widths.insert(widths.end(), cfg.hidden.begin(), cfg.hidden.end());
  widths.push_back(1);
  TrainedModel out;
  out.model = MlpModel::create(widths, false, derive_seed(seed, {1}));
  TrainOptions opt;
  opt.epochs = cfg.epochs;
  opt.batch_size = cfg.batch_size;
  opt.adam.lr = cfg.lr;
  opt.seed = derive_seed(seed, {2});
  if (kind != FairnessKind::none && alpha_p > 0) {
    opt.penalty = make_fairness_penalty(kind, data.labels, data.sensitive, &out.degenerate_batches);
    opt.penalty_weight = alpha_p;
  }
  out.trace = out.model.train(data.features, data.labels, opt);
  return out;
}

/// A frozen base embedding followed by a trainable linear head.
struct FineTunedModel {
  std::shared_ptr<const MlpModel> base;
  MlpModel head;  // widths {embedding, 1}

  Eigen::VectorXd forward(const Eigen::MatrixXd& x) const { return head.forward(base->embed(x)); }
  int input_dim() const { return base->input_dim(); }
};

/// The base's own head as a one-layer model.
inline MlpModel head_of(const MlpModel& base) {
  const int emb = base.widths()[base.widths().size() - 2];
  MlpModel h = MlpModel::create({emb, 1}, false, 0);
  h.layers()[0] = base.layers().back();
  return h;
}

struct FineTuneResult {
  FineTunedModel model;
  TrainTrace trace;
  long degenerate_batches = 0;
};

/// Trains only a linear head on frozen base embeddings of `data`.
inline FineTuneResult fine_tune_head(std::shared_ptr<const MlpModel> base, const Dataset& data, double alpha_v,
                                     FairnessKind kind, std::uint64_t seed, const FairTrainConfig& cfg = {},
                                     const Eigen::MatrixXd* embeddings = nullptr) {
  data.validate();
  if (!base) throw ArgumentError("fine-tuning needs a base model");
  if (data.labels.empty() || data.sensitive.empty()) throw ArgumentError("fine-tuning needs labels and sensitive");
  if (!(alpha_v >= 0)) throw ArgumentError("alpha_v must be non-negative");
  const int emb = base->widths()[base->widths().size() - 2];
  FineTuneResult out;
  out.model.base = base;
  out.model.head = cfg.warm_start ? head_of(*base) : MlpModel::create({emb, 1}, false, derive_seed(seed, {1}));
  TrainOptions opt;
  opt.epochs = cfg.ft_epochs;
  opt.batch_size = cfg.ft_batch_size;
  opt.adam.lr = cfg.ft_lr;
  opt.seed = derive_seed(seed, {2});
  if (kind != FairnessKind::none && alpha_v > 0) {
    opt.penalty = make_fairness_penalty(kind, data.labels, data.sensitive, &out.degenerate_batches);
    opt.penalty_weight = alpha_v;
  }
  const Eigen::MatrixXd e = embeddings ? *embeddings : base->embed(data.features);
  out.trace = out.model.head.train(e, data.labels, opt);
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation

struct ModelOutcome {
  double accuracy = 0;
  double dp_gap = 0;
  double fpr_gap = 0;
  double tpr_gap = 0;
  /// max(fpr_gap, tpr_gap), so it stays in [0, 1].
  double eo_gap = 0;
  double alpha_p = 0;
  double alpha_v = 0;
  FairnessKind upstream = FairnessKind::none;
  FairnessKind downstream = FairnessKind::none;
  std::uint64_t seed = 0;
};

/// Hard predictions at 0.5 against labels and sensitive attribute.
inline ModelOutcome evaluate_predictions(const Eigen::VectorXd& scores, std::span<const int> labels,
                                         std::span<const int> sensitive) {
  const auto n = static_cast<std::size_t>(scores.size());
  if (labels.size() != n || sensitive.size() != n) throw ArgumentError("evaluation inputs differ in length");
  if (n == 0) throw ArgumentError("empty evaluation set");
  // count[s][y], positive[s][y]
  long count[2][2] = {{0, 0}, {0, 0}}, pos[2][2] = {{0, 0}, {0, 0}};
  long correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const int p = scores(static_cast<Eigen::Index>(i)) >= 0.5 ? 1 : 0;
    ++count[sensitive[i]][labels[i]];
    pos[sensitive[i]][labels[i]] += p;
    correct += p == labels[i];
  }
  for (int s = 0; s < 2; ++s)
    for (int y = 0; y < 2; ++y)
      if (count[s][y] == 0) {
        const std::string cell = "sensitive=" + std::to_string(s) + ",label=" + std::to_string(y);
        throw DegenerateCellError("no test rows in cell " + cell, cell);
      }
  auto rate = [&](int s, int y) { return static_cast<double>(pos[s][y]) / count[s][y]; };
  auto pos_rate = [&](int s) {
    return static_cast<double>(pos[s][0] + pos[s][1]) / static_cast<double>(count[s][0] + count[s][1]);
  };
  ModelOutcome o;
  o.accuracy = static_cast<double>(correct) / static_cast<double>(n);
  o.dp_gap = std::abs(pos_rate(0) - pos_rate(1));
  o.fpr_gap = std::abs(rate(0, 0) - rate(1, 0));
  o.tpr_gap = std::abs(rate(0, 1) - rate(1, 1));
  o.eo_gap = std::max(o.fpr_gap, o.tpr_gap);
  return o;
}

template <class Model>
ModelOutcome evaluate_outcome(const Model& model, const Dataset& test) {
  test.validate();
  return evaluate_predictions(model.forward(test.features), test.labels, test.sensitive);
}

// ---------------------------------------------------------------------------
// Frontiers

struct GapAccuracy {
  double gap = 0;
  double accuracy = 0;
  bool operator==(const GapAccuracy&) const = default;
};

/// Points not dominated by another (lower-or-equal gap and higher-or-equal
/// accuracy, strictly better in one), duplicates collapsed, sorted by gap.
/// Along the result both gap and accuracy strictly increase.
inline std::vector<GapAccuracy> pareto_frontier(std::vector<GapAccuracy> pts) {
  std::sort(pts.begin(), pts.end(), [](const GapAccuracy& a, const GapAccuracy& b) {
    return a.gap != b.gap ? a.gap < b.gap : a.accuracy > b.accuracy;
  });
  std::vector<GapAccuracy> out;
  for (const auto& p : pts)
    if (out.empty() || p.accuracy > out.back().accuracy) out.push_back(p);
  return out;
}

/// Vertices of the upper-left convex hull of the points: the frontier points
/// that are not below a chord between two others.
inline std::vector<GapAccuracy> pareto_hull(const std::vector<GapAccuracy>& pts) {
  auto f = pareto_frontier(pts);
  std::vector<GapAccuracy> hull;
  for (const auto& p : f) {
    while (hull.size() >= 2) {
      const auto& a = hull[hull.size() - 2];
      const auto& b = hull.back();
      // Drop b when it lies on or below the chord a -> p.
      const double cross = (b.gap - a.gap) * (p.accuracy - a.accuracy) - (b.accuracy - a.accuracy) * (p.gap - a.gap);
      if (cross >= 0)
        hull.pop_back();
      else
        break;
    }
    hull.push_back(p);
  }
  return hull;
}

/// Integral over [lo, hi] of the best accuracy reachable at gap <= g (0
/// before the first frontier point).
inline double frontier_area(const std::vector<GapAccuracy>& frontier, double lo, double hi) {
  if (frontier.empty()) throw ArgumentError("frontier is empty");
  if (!(hi >= lo)) throw ArgumentError("gap range must satisfy lo <= hi");
  auto f = pareto_frontier(frontier);
  double area = 0;
  for (std::size_t k = 0; k < f.size(); ++k) {
    const double a = std::max(lo, f[k].gap);
    const double b = k + 1 < f.size() ? std::min(hi, f[k + 1].gap) : hi;
    if (b > a) area += f[k].accuracy * (b - a);
  }
  return area;
}

// ---------------------------------------------------------------------------
// Reversibility

enum class GapMetric { dp, fpr, eo };

inline const char* to_string(GapMetric m) {
  switch (m) {
    case GapMetric::dp: return "dp_gap";
    case GapMetric::fpr: return "fpr_gap";
    case GapMetric::eo: return "eo_gap";
  }
  return "?";
}

inline double gap_of(const ModelOutcome& o, GapMetric m) {
  switch (m) {
    case GapMetric::dp: return o.dp_gap;
    case GapMetric::fpr: return o.fpr_gap;
    case GapMetric::eo: return o.eo_gap;
  }
  return 0;
}

struct GapRange {
  double lo = 0;
  double hi = 0;
};

struct ReversibilityCell {
  double alpha_p = 0;
  GapMetric metric = GapMetric::dp;
  std::map<FairnessKind, GapRange> ranges;
  bool overlap = false;  // every pair of ranges intersects
};

inline std::vector<ReversibilityCell> reversibility_report(const std::vector<ModelOutcome>& outcomes) {
  std::map<double, std::map<FairnessKind, std::vector<const ModelOutcome*>>> by;
  std::map<FairnessKind, bool> kinds;
  for (const auto& o : outcomes) {
    by[o.alpha_p][o.upstream].push_back(&o);
    kinds[o.upstream] = true;
  }
  if (kinds.size() < 2) throw ArgumentError("reversibility needs at least two upstream kinds");
  std::vector<ReversibilityCell> out;
  for (const auto& [alpha, groups] : by)
    for (auto metric : {GapMetric::dp, GapMetric::fpr, GapMetric::eo}) {
      ReversibilityCell cell;
      cell.alpha_p = alpha;
      cell.metric = metric;
      for (const auto& [kind, os] : groups) {
        GapRange r{gap_of(*os.front(), metric), gap_of(*os.front(), metric)};
        for (const auto* o : os) {
          r.lo = std::min(r.lo, gap_of(*o, metric));
          r.hi = std::max(r.hi, gap_of(*o, metric));
        }
        cell.ranges[kind] = r;
      }
      cell.overlap = cell.ranges.size() >= 2;
      for (auto a = cell.ranges.begin(); a != cell.ranges.end(); ++a)
        for (auto b = std::next(a); b != cell.ranges.end(); ++b)
          if (a->second.hi < b->second.lo || b->second.hi < a->second.lo) cell.overlap = false;
      out.push_back(cell);
    }
  return out;
}

// ---------------------------------------------------------------------------
// Sweep

/// {0} U {0.1 * 2^k : k = 0..8}.
inline std::vector<double> default_alpha_grid() {
  std::vector<double> g{0.0};
  for (int k = 0; k <= 8; ++k) g.push_back(0.1 * std::ldexp(1.0, k));
  return g;
}

struct FairnessSweepConfig {
  std::vector<double> alpha_p = default_alpha_grid();
  std::vector<double> alpha_v = default_alpha_grid();
  std::vector<FairnessKind> upstream{FairnessKind::demographic_parity, FairnessKind::equalized_fpr,
                                     FairnessKind::equalized_odds};
  std::vector<FairnessKind> downstream{FairnessKind::demographic_parity, FairnessKind::equalized_fpr,
                                       FairnessKind::equalized_odds};
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  GroupDataSpec data;
  FairTrainConfig train;

  void validate() const {
    if (alpha_p.empty() || alpha_v.empty()) throw ArgumentError("alpha grids must be non-empty");
    for (double a : alpha_p)
      if (!(a >= 0)) throw ArgumentError("alpha values must be non-negative");
    for (double a : alpha_v)
      if (!(a >= 0)) throw ArgumentError("alpha values must be non-negative");
    if (upstream.empty() || downstream.empty()) throw ArgumentError("fairness kind lists must be non-empty");
    if (seeds.empty()) throw ArgumentError("need at least one seed");
    data.validate();
  }
};

/// One base model (seed, upstream kind, alpha_p) and every fine-tune on it.
struct BaseUnit {
  std::uint64_t seed = 0;
  FairnessKind upstream = FairnessKind::none;
  std::size_t alpha_index = 0;
};

inline std::vector<BaseUnit> sweep_units(const FairnessSweepConfig& cfg) {
  std::vector<BaseUnit> units;
  for (auto s : cfg.seeds)
    for (auto k : cfg.upstream)
      for (std::size_t a = 0; a < cfg.alpha_p.size(); ++a) units.push_back({s, k, a});
  return units;
}

inline std::vector<ModelOutcome> run_base_unit(const FairnessSweepConfig& cfg, const GroupSplits& data,
                                               const BaseUnit& u, std::uint64_t master_seed = 0) {
  const double alpha_p = cfg.alpha_p[u.alpha_index];
  // Seeds do not depend on the fairness kinds.
  const auto base_seed = derive_seed(master_seed, {u.seed, u.alpha_index, 1});
  auto base = std::make_shared<const MlpModel>(
      train_base_fair(data.base_train, alpha_p, u.upstream, base_seed, cfg.train).model);
  const Eigen::MatrixXd emb = base->embed(data.ft_train.features);
  std::vector<ModelOutcome> out;
  for (auto dk : cfg.downstream)
    for (std::size_t v = 0; v < cfg.alpha_v.size(); ++v) {
      const auto ft_seed = derive_seed(base_seed, {v, 2});
      auto ft = fine_tune_head(base, data.ft_train, cfg.alpha_v[v], dk, ft_seed, cfg.train, &emb);
      ModelOutcome o = evaluate_outcome(ft.model, data.ft_test);
      o.alpha_p = alpha_p;
      o.alpha_v = cfg.alpha_v[v];
      o.upstream = u.upstream;
      o.downstream = dk;
      o.seed = u.seed;
      out.push_back(o);
    }
  return out;
}

/// Mean over seeds and downstream kinds of the dp-gap frontier area, per
/// (upstream kind, alpha_p), over the shared interval [0, max dp_gap].
inline std::map<std::pair<FairnessKind, double>, double> mean_frontier_area(const std::vector<ModelOutcome>& outcomes,
                                                                           GapMetric metric = GapMetric::dp) {
  if (outcomes.empty()) throw ArgumentError("no outcomes");
  double hi = 0;
  for (const auto& o : outcomes) hi = std::max(hi, gap_of(o, metric));
  std::map<std::tuple<FairnessKind, double, std::uint64_t, FairnessKind>, std::vector<GapAccuracy>> frontiers;
  for (const auto& o : outcomes)
    frontiers[{o.upstream, o.alpha_p, o.seed, o.downstream}].push_back({gap_of(o, metric), o.accuracy});
  std::map<std::pair<FairnessKind, double>, std::pair<double, int>> acc;
  for (const auto& [key, pts] : frontiers) {
    auto& [sum, count] = acc[{std::get<0>(key), std::get<1>(key)}];
    sum += frontier_area(pareto_frontier(pts), 0.0, hi);
    ++count;
  }
  std::map<std::pair<FairnessKind, double>, double> out;
  for (const auto& [k, v] : acc) out[k] = v.first / v.second;
  return out;
}

}  // namespace aisc

#endif  // AISC_FAIRNESS_HPP
