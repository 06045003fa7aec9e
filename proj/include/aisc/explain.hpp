#ifndef AISC_EXPLAIN_HPP
#define AISC_EXPLAIN_HPP

// Local linear explanations fitted by perturbation sampling, their chain-rule
// composition across a supply chain, and fidelity metrics between two
// explanations of the same prediction.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>
#include <string>

#include "aisc/composition.hpp"
#include "aisc/errors.hpp"
#include "aisc/graph.hpp"
#include "aisc/rng.hpp"

namespace aisc {

/// Rows of the input map to rows of the output: (n x in) -> (n x out).
using BatchFunction = std::function<Eigen::MatrixXd(const Eigen::MatrixXd&)>;

struct LimeConfig {
  static constexpr double kRidge = 1e-10;
  static constexpr double kIllConditioned = 1e-12;

  double radius = 0.2;
  int samples = 50;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(radius > 0)) throw ArgumentError("LIME radius must be positive");
    if (samples < 1) throw ArgumentError("LIME sample count must be positive");
  }
};

struct Explanation {
  Eigen::MatrixXd weights;  // input dim x output dim, in Jacobian units
  Eigen::VectorXd anchor;
  double radius = 0;
  int sample_count = 0;
  /// Set when the perturbation design was (near) rank deficient and the
  /// ridge term dominated the solve.
  bool ill_conditioned = false;

  int input_dim() const { return static_cast<int>(weights.rows()); }
  int output_dim() const { return static_cast<int>(weights.cols()); }
};

/// n points uniform in the unit ball of R^dim: Gaussian direction scaled by U^(1/dim).
inline Eigen::MatrixXd sample_unit_ball(int n, int dim, Rng& rng) {
  Eigen::MatrixXd u(n, dim);
  for (int i = 0; i < n; ++i) {
    double norm2 = 0;
    do {
      norm2 = 0;
      for (int j = 0; j < dim; ++j) {
        u(i, j) = normal01(rng);
        norm2 += u(i, j) * u(i, j);
      }
    } while (norm2 == 0);
    const double r = std::pow(uniform01(rng), 1.0 / dim);
    u.row(i) *= r / std::sqrt(norm2);
  }
  return u;
}

/// Least-squares surrogate: minimizes sum_k |g(z + r u_k) - g(z) - W^T (r u_k)|^2
/// over n directions u_k uniform in the unit ball, without intercept. The
/// regression is on the displacement r*u so W approaches the Jacobian as r -> 0.
inline Explanation fit_local_linear(const BatchFunction& g, const Eigen::VectorXd& anchor, const LimeConfig& cfg) {
  cfg.validate();
  const int dim = static_cast<int>(anchor.size());
  if (dim < 1) throw ArgumentError("anchor must be non-empty");
  Rng rng = make_rng(cfg.seed);
  Eigen::MatrixXd u = sample_unit_ball(cfg.samples, dim, rng);

  Eigen::MatrixXd pts = (cfg.radius * u).rowwise() + anchor.transpose();
  Eigen::MatrixXd base = g(anchor.transpose());
  Eigen::MatrixXd out = g(pts);
  if (base.rows() != 1 || out.rows() != cfg.samples || out.cols() != base.cols())
    throw ArgumentError("black-box function returned an unexpected shape");
  Eigen::MatrixXd dy = out.rowwise() - base.row(0);

  // Solve in unit-ball coordinates so the ridge is scale-free, then rescale.
  Eigen::MatrixXd gram = u.transpose() * u;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
  const double lmax = eig.eigenvalues().maxCoeff();
  const double lmin = eig.eigenvalues().minCoeff();
  gram.diagonal().array() += LimeConfig::kRidge;
  Eigen::MatrixXd v = gram.ldlt().solve(u.transpose() * dy);

  Explanation e;
  e.weights = v / cfg.radius;
  e.anchor = anchor;
  e.radius = cfg.radius;
  e.sample_count = cfg.samples;
  e.ill_conditioned = !(lmax > 0) || lmin <= LimeConfig::kIllConditioned * lmax;
  return e;
}

enum class ChainRule {
  /// E(f_i) = W_i[x] + sum_j E(f_j) W_i[j]: node consumes x directly and its parents.
  block_form,
  /// E(f_i) = sum_j E(f_j) W_i[j]; sources contribute their own fit.
  parent_only,
};

template <NodeFunction M>
BatchFunction node_function(const M& model) {
  return [&model](const Eigen::MatrixXd& z) -> Eigen::MatrixXd { return model.forward(z); };
}

template <NodeFunction M>
BatchFunction composed_function(const SupplyChainGraph& g, const std::map<NodeId, M>& models, NodeId v) {
  return [&g, &models, v](const Eigen::MatrixXd& x) -> Eigen::MatrixXd { return forward_composed(g, models, v, x); };
}

/// One black-box fit of the whole composite x -> f_v(x).
template <NodeFunction M>
Explanation end_to_end_explanation(const SupplyChainGraph& g, const std::map<NodeId, M>& models, NodeId v,
                                   const Eigen::VectorXd& x, const LimeConfig& cfg) {
  return fit_local_linear(composed_function(g, models, v), x, cfg);
}

/// LIME config used by node u when explaining node v: the explained node uses
/// cfg.seed, every other node an independent stream derived from it.
inline LimeConfig node_lime_config(const LimeConfig& cfg, NodeId u, NodeId v) {
  LimeConfig c = cfg;
  if (u != v) c.seed = derive_seed(cfg.seed, {static_cast<std::uint64_t>(u)});
  return c;
}

/// Each node's own surrogate, fitted at the input it actually receives for x.
template <NodeFunction M>
std::map<NodeId, Explanation> fit_node_surrogates(const SupplyChainGraph& g, const std::map<NodeId, M>& models,
                                                  NodeId v, const Eigen::VectorXd& x, const LimeConfig& cfg) {
  Eigen::MatrixXd xr = x.transpose();
  auto outputs = evaluate_ancestry(g, models, v, xr);
  std::map<NodeId, Explanation> fits;
  for (const auto& [u, _] : outputs) {
    Eigen::VectorXd z = node_input(g, outputs, u, xr).row(0).transpose();
    fits.emplace(u, fit_local_linear(node_function(models.at(u)), z, node_lime_config(cfg, u, v)));
  }
  return fits;
}

/// Chain-rule composition of per-node surrogates into an explanation of f_v
/// with respect to x. Nodes listed in `given` use the supplied composite
/// instead of recursing further upstream.
inline Eigen::MatrixXd compose_chain_rule(const SupplyChainGraph& g, NodeId v,
                                          const std::map<NodeId, Explanation>& local, int feat_dim,
                                          ChainRule rule = ChainRule::block_form,
                                          const std::map<NodeId, Eigen::MatrixXd>& given = {}) {
  std::map<NodeId, Eigen::MatrixXd> composite;
  for (NodeId u : ancestry_order(g, v)) {
    if (auto it = given.find(u); it != given.end()) {
      composite[u] = it->second;
      continue;
    }
    auto lit = local.find(u);
    if (lit == local.end()) continue;  // not needed: upstream of a given node
    const Eigen::MatrixXd& w = lit->second.weights;
    const auto& ps = g.parent_list(u);
    if (w.rows() != feat_dim + static_cast<Eigen::Index>(ps.size()))
      throw std::logic_error("surrogate of node " + std::to_string(u) + " has " + std::to_string(w.rows()) +
                             " rows; expected " + std::to_string(feat_dim + static_cast<int>(ps.size())));
    Eigen::MatrixXd e = (rule == ChainRule::block_form || ps.empty())
                            ? Eigen::MatrixXd(w.topRows(feat_dim))
                            : Eigen::MatrixXd::Zero(feat_dim, w.cols());
    for (std::size_t k = 0; k < ps.size(); ++k) {
      auto cit = composite.find(ps[k]);
      if (cit == composite.end()) throw std::logic_error("missing upstream explanation for node " + std::to_string(ps[k]));
      e += cit->second * w.row(feat_dim + static_cast<Eigen::Index>(k));
    }
    composite[u] = std::move(e);
  }
  return composite.at(v);
}

/// Explanation assembled from per-node surrogates via the chain rule, as a
/// downstream node would without access to upstream models.
template <NodeFunction M>
Explanation supply_chain_explanation(const SupplyChainGraph& g, const std::map<NodeId, M>& models, NodeId v,
                                     const Eigen::VectorXd& x, const LimeConfig& cfg,
                                     ChainRule rule = ChainRule::block_form) {
  auto fits = fit_node_surrogates(g, models, v, x, cfg);
  Explanation e;
  e.weights = compose_chain_rule(g, v, fits, static_cast<int>(x.size()), rule);
  e.anchor = x;
  e.radius = cfg.radius;
  e.sample_count = cfg.samples;
  for (const auto& [_, f] : fits) e.ill_conditioned = e.ill_conditioned || f.ill_conditioned;
  return e;
}

inline void require_same_shape(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ArgumentError("explanation shapes differ: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                        " vs " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
}

/// <a, b>_F / (|a|_F |b|_F).
inline double cosine_similarity(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  require_same_shape(a, b);
  const double na = a.norm(), nb = b.norm();
  if (na == 0 || nb == 0) throw DegenerateError("cosine similarity of a zero explanation is undefined");
  const double c = (a.array() * b.array()).sum() / (na * nb);
  return std::clamp(c, -1.0, 1.0);
}

inline double cosine_similarity(const Explanation& a, const Explanation& b) {
  return cosine_similarity(a.weights, b.weights);
}

/// Mean over entries of (supply - end)^2.
inline double explanation_mse(const Eigen::MatrixXd& supply, const Eigen::MatrixXd& end) {
  require_same_shape(supply, end);
  if (supply.size() == 0) throw ArgumentError("empty explanation");
  return (supply - end).array().square().mean();
}

inline double explanation_mse(const Explanation& supply, const Explanation& end) {
  return explanation_mse(supply.weights, end.weights);
}

struct RecourseSearch {
  static constexpr double kDefaultCap = 1000.0;
  static constexpr double kStart = 1e-3;
  static constexpr double kGrowth = 2.0;
  static constexpr double kTolerance = 1e-6;
};

/// Distance along the explanation's direction until predict() crosses 0.5.
/// Moves against the explanation when predict(x) >= 0.5, along it otherwise.
/// Geometric bracketing from 1e-3 doubling up to cap, then bisection to 1e-6.
/// Returns cap when no flip occurs within it.
inline double recourse_distance(const std::function<double(const Eigen::VectorXd&)>& predict,
                                const Eigen::VectorXd& x, const Eigen::MatrixXd& weights,
                                double cap = RecourseSearch::kDefaultCap) {
  if (!(cap > 0)) throw ArgumentError("recourse cap must be positive");
  if (weights.cols() != 1) throw ArgumentError("recourse needs a scalar-output explanation");
  if (weights.rows() != x.size()) throw ArgumentError("explanation does not match input dimension");
  const double norm = weights.norm();
  if (norm == 0) throw DegenerateError("zero explanation gives no recourse direction");

  const bool positive = predict(x) >= 0.5;
  const Eigen::VectorXd dir = (positive ? -1.0 : 1.0) * weights.col(0) / norm;
  auto flipped = [&](double t) { return (predict(x + t * dir) >= 0.5) != positive; };

  double lo = 0.0, hi = -1.0;
  for (double t = RecourseSearch::kStart;; t *= RecourseSearch::kGrowth) {
    const double probe = std::min(t, cap);
    if (flipped(probe)) {
      hi = probe;
      break;
    }
    lo = probe;
    if (probe >= cap) break;
  }
  if (hi < 0) return cap;
  while (hi - lo > RecourseSearch::kTolerance) {
    const double mid = 0.5 * (lo + hi);
    (flipped(mid) ? hi : lo) = mid;
  }
  return hi;
}

inline double recourse_distance(const std::function<double(const Eigen::VectorXd&)>& predict,
                                const Eigen::VectorXd& x, const Explanation& e,
                                double cap = RecourseSearch::kDefaultCap) {
  return recourse_distance(predict, x, e.weights, cap);
}

/// Supply-chain recourse distance minus the end-to-end one.
inline double recourse_error(double supply_distance, double end_distance) { return supply_distance - end_distance; }

/// "shape,<rows>,<cols>" header then row-major values, LF line endings.
inline std::string explanation_to_csv(const Explanation& e) {
  std::ostringstream os;
  os << "shape," << e.weights.rows() << ',' << e.weights.cols() << '\n';
  char buf[32];
  for (Eigen::Index r = 0; r < e.weights.rows(); ++r) {
    for (Eigen::Index c = 0; c < e.weights.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", e.weights(r, c));
      os << (c ? "," : "") << buf;
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace aisc

#endif  // AISC_EXPLAIN_HPP
