#ifndef AISC_THEORY_HPP
#define AISC_THEORY_HPP

// Monte-Carlo checks of two analytic results: how surrogate error compounds
// along a linear chain of composed explanations, and how an upstream
// conditional-independence constraint on a basis model bounds the head norm
// of any model fine-tuned on the same basis.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "aisc/basis.hpp"
#include "aisc/errors.hpp"
#include "aisc/rng.hpp"

namespace aisc {

// ---------------------------------------------------------------------------
// Error compounding along a chain

enum class NoiseKind { uniform, gaussian };

/// How the true local maps E(h_i) and true composites E(f_{i+1}) are chosen.
enum class ChainMaps {
  /// E(h_i) = sqrt(C1) I; composites are the exact products from E_in.
  scaled_identity,
  /// E(h_i) random with spectral norm^2 = C1; composites are exact products.
  random,
  /// E(h_i) = sqrt(C1) I and every E(f_{i+1}) = sqrt(C2/dim) I, the equality case.
  tight,
};

struct ChainInstance {
  int depth = 4;
  int dim = 4;
  double sigma2 = 0.01;
  double c1 = 1.0;
  /// Squared Frobenius norm of the explanation entering the most upstream node.
  double c2 = 1.0;
  /// Squared Frobenius norm of the error already present upstream.
  double upstream = 0.0;
  int trials = 10000;
  NoiseKind noise = NoiseKind::uniform;
  ChainMaps maps = ChainMaps::scaled_identity;
  std::uint64_t seed = 0;

  void validate() const {
    if (depth < 1) throw ArgumentError("depth must be >= 1");
    if (dim < 1) throw ArgumentError("dim must be >= 1");
    if (!(sigma2 >= 0)) throw ArgumentError("sigma2 must be >= 0");
    if (!(c1 > 0) || !(c2 > 0)) throw ArgumentError("C1 and C2 must be positive");
    if (!(upstream >= 0)) throw ArgumentError("upstream error must be >= 0");
    if (trials < 2) throw ArgumentError("need at least two trials");
  }
};

/// C3^(d-1) * upstream + C4 * sum_{tau=1}^{d-1} C3^(tau-1),
/// C3 = C1 + dim*sigma2, C4 = C2*dim*sigma2.
inline double bound_rhs(int d, double c1, double c2, int dim, double sigma2, double upstream) {
  if (d < 1) throw ArgumentError("depth must be >= 1");
  const double c3 = c1 + dim * sigma2;
  const double c4 = c2 * dim * sigma2;
  double sum = 0, pw = 1;
  for (int tau = 1; tau <= d - 1; ++tau) {
    sum += pw;
    pw *= c3;
  }
  return pw * upstream + c4 * sum;
}

struct DepthStat {
  int depth = 0;
  double mean = 0;  // empirical E|Z|_F^2
  double se = 0;
  double bound = 0;
  double ratio() const { return mean / bound; }
  bool within_bound() const { return mean <= bound + 3 * se; }
};

struct ChainReport {
  ChainInstance instance;
  /// Constants actually satisfied by the realized maps, used in the bound.
  double c1 = 0;
  double c2 = 0;
  /// Analytic E|Z_d|^2 for the most upstream node.
  double upstream_error = 0;
  std::vector<DepthStat> depths;  // depths[k-1] covers a chain of k nodes
};

inline Eigen::MatrixXd noise_matrix(int dim, double sigma2, NoiseKind kind, Rng& rng) {
  Eigen::MatrixXd m(dim, dim);
  const double sd = std::sqrt(sigma2), a = std::sqrt(3 * sigma2);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) m(i, j) = kind == NoiseKind::uniform ? uniform(rng, -a, a) : sd * normal01(rng);
  return m;
}

/// Runs the error recursion Z_i = E(h_i)^T Z_{i+1} + Delta_i^T (E(f_{i+1}) + Z_{i+1})
/// with Z_d = s*U0 + Delta_d^T E_in (s a random sign), for chains of 1..depth nodes.
inline ChainReport simulate_error_recursion(const ChainInstance& inst) {
  inst.validate();
  using Eigen::MatrixXd;
  const int dim = inst.dim, d = inst.depth;
  const MatrixXd eye = MatrixXd::Identity(dim, dim);

  Rng map_rng = make_rng(derive_seed(inst.seed, {1}));
  std::vector<MatrixXd> eh(static_cast<std::size_t>(d));
  for (auto& m : eh) {
    if (inst.maps == ChainMaps::random) {
      m = MatrixXd(dim, dim);
      for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j) m(i, j) = normal01(map_rng);
      Eigen::JacobiSVD<MatrixXd> svd(m);
      m *= std::sqrt(inst.c1) / svd.singularValues()(0);
    } else {
      m = std::sqrt(inst.c1) * eye;
    }
  }
  // ef[s] is the true explanation entering step s (s = 0 is the most upstream node).
  std::vector<MatrixXd> ef(static_cast<std::size_t>(d));
  ef[0] = std::sqrt(inst.c2 / dim) * eye;
  for (int s = 1; s < d; ++s)
    ef[s] = inst.maps == ChainMaps::tight ? ef[0] : MatrixXd(eh[s - 1].transpose() * ef[s - 1]);

  ChainReport rep;
  rep.instance = inst;
  rep.c1 = inst.c1;  // every map is scaled to spectral norm^2 = C1 exactly
  for (const auto& m : ef) rep.c2 = std::max(rep.c2, m.squaredNorm());
  rep.upstream_error = inst.upstream + dim * inst.sigma2 * ef[0].squaredNorm();

  std::vector<double> sum(static_cast<std::size_t>(d), 0.0), sumsq(static_cast<std::size_t>(d), 0.0);
  const MatrixXd u0 = std::sqrt(inst.upstream / dim) * eye;
  Rng rng = make_rng(derive_seed(inst.seed, {2}));
  for (int t = 0; t < inst.trials; ++t) {
    const double sign = uniform01(rng) < 0.5 ? -1.0 : 1.0;
    MatrixXd z = sign * u0 + noise_matrix(dim, inst.sigma2, inst.noise, rng).transpose() * ef[0];
    for (int s = 0; s < d; ++s) {
      if (s > 0) {
        MatrixXd delta = noise_matrix(dim, inst.sigma2, inst.noise, rng);
        z = eh[s].transpose() * z + delta.transpose() * (ef[s] + z);
      }
      const double e = z.squaredNorm();
      sum[s] += e;
      sumsq[s] += e * e;
    }
  }
  const double n = inst.trials;
  for (int s = 0; s < d; ++s) {
    DepthStat st;
    st.depth = s + 1;
    st.mean = sum[s] / n;
    const double var = std::max(0.0, (sumsq[s] - n * st.mean * st.mean) / (n - 1));
    st.se = std::sqrt(var / n);
    st.bound = bound_rhs(s + 1, rep.c1, rep.c2, dim, inst.sigma2, rep.upstream_error);
    rep.depths.push_back(st);
  }
  return rep;
}

/// Empirical/bound ratio under the equality construction, for chains of 1..d nodes.
inline std::vector<DepthStat> tightness_check(int d, double c1, double c2, int dim, double sigma2, int trials,
                                              double upstream = 1.0, std::uint64_t seed = 0) {
  ChainInstance inst;
  inst.depth = d;
  inst.dim = dim;
  inst.sigma2 = sigma2;
  inst.c1 = c1;
  inst.c2 = c2;
  inst.upstream = upstream;
  inst.trials = trials;
  inst.maps = ChainMaps::tight;
  inst.seed = seed;
  return simulate_error_recursion(inst).depths;
}

// ---------------------------------------------------------------------------
// Eigenvalue-ratio growth of a product of noisy identities

/// Uniform noise on [lo, hi]; lo == hi gives a constant.
struct UniformNoise {
  double lo = -0.5;
  double hi = 0.5;

  void validate() const {
    if (!(lo <= hi)) throw ArgumentError("noise range must satisfy lo <= hi");
    if (!(lo > -1.0)) throw ArgumentError("noise support must stay above -1");
    if (!(hi <= 1.0)) throw ArgumentError("noise support must stay within [-1, 1]");
  }
  double draw(Rng& rng) const { return lo == hi ? lo : uniform(rng, lo, hi); }
};

struct EigenRatioStat {
  int depth = 0;
  double max_pair_mean = 0;  // max over k != l of E[log^2(lambda_k / lambda_l)]
  double se = 0;             // of the maximizing pair
  double floor = 0;          // depth * V
  double floor_se = 0;
  bool holds() const { return max_pair_mean >= floor - 3 * std::hypot(se, floor_se); }
};

struct EigenRatioReport {
  double v = 0;
  double v_se = 0;
  std::vector<EigenRatioStat> depths;  // depths[d-1]
};

/// For d = 1..max_depth, the eigenvalues of prod_i (I + Delta_i) with diagonal
/// Delta_i are prod_i (1 + Delta_i[k,k]); compares E[log^2] of their pairwise
/// ratios with d * V, V = Var[log((1+T)/(1+T'))] estimated from separate draws.
inline EigenRatioReport eigen_ratio_growth(int max_depth, const UniformNoise& noise, int dim, int trials,
                                           std::uint64_t seed = 0) {
  noise.validate();
  if (max_depth < 1) throw ArgumentError("depth must be >= 1");
  if (dim < 2) throw ArgumentError("need at least two eigenvalues");
  if (trials < 2) throw ArgumentError("need at least two trials");
  const double n = trials;

  EigenRatioReport rep;
  {
    Rng rng = make_rng(derive_seed(seed, {1}));
    std::vector<double> y(static_cast<std::size_t>(trials));
    double mean = 0;
    for (auto& v : y) {
      const double t = noise.draw(rng), t2 = noise.draw(rng);
      v = std::log1p(t) - std::log1p(t2);
      mean += v;
    }
    mean /= n;
    double m2 = 0, m4 = 0;
    for (double v : y) {
      const double c = (v - mean) * (v - mean);
      m2 += c;
      m4 += c * c;
    }
    rep.v = m2 / (n - 1);
    rep.v_se = std::sqrt(std::max(0.0, m4 / n - (m2 / n) * (m2 / n)) / n);
  }

  const int pairs = dim * (dim - 1) / 2;
  const auto cells = static_cast<std::size_t>(max_depth * pairs);
  std::vector<double> sum(cells, 0.0), sumsq(cells, 0.0);
  Rng rng = make_rng(derive_seed(seed, {2}));
  Eigen::VectorXd logs(dim);
  for (int t = 0; t < trials; ++t) {
    logs.setZero();
    for (int d = 0; d < max_depth; ++d) {
      for (int k = 0; k < dim; ++k) logs(k) += std::log1p(noise.draw(rng));
      int p = 0;
      for (int k = 0; k < dim; ++k)
        for (int l = k + 1; l < dim; ++l, ++p) {
          const double r = logs(k) - logs(l);
          const auto c = static_cast<std::size_t>(d * pairs + p);
          sum[c] += r * r;
          sumsq[c] += r * r * r * r;
        }
    }
  }
  for (int d = 0; d < max_depth; ++d) {
    EigenRatioStat st;
    st.depth = d + 1;
    st.max_pair_mean = -1;
    for (int p = 0; p < pairs; ++p) {
      const auto c = static_cast<std::size_t>(d * pairs + p);
      const double mean = sum[c] / n;
      if (mean > st.max_pair_mean) {
        st.max_pair_mean = mean;
        st.se = std::sqrt(std::max(0.0, (sumsq[c] - n * mean * mean) / (n - 1)) / n);
      }
    }
    st.floor = st.depth * rep.v;
    st.floor_se = st.depth * rep.v_se;
    rep.depths.push_back(st);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Footprint of an upstream conditional-independence constraint

/// X = (X1, X2, Z, rest): Z uniform on the values z_k, X1 ~ N(mu1[k], 1) and
/// X2 ~ N(mu2[k], 1) given Z = z_k, rest i.i.d. N(0, 1). X1 and X2 are
/// independent given Z, so conditioning on either is exact.
struct ConditionalSampler {
  Eigen::VectorXd z_values;
  Eigen::VectorXd mu1;
  Eigen::VectorXd mu2;
  int rest_dim = 3;

  static ConditionalSampler draw(int k, int rest_dim, Rng& rng) {
    if (k < 1) throw ArgumentError("need at least one Z value");
    ConditionalSampler s;
    s.z_values = Eigen::VectorXd::LinSpaced(k, 0.0, k - 1.0);
    s.mu1.resize(k);
    s.mu2.resize(k);
    for (int i = 0; i < k; ++i) {
      s.mu1(i) = uniform(rng, -1, 1);
      s.mu2(i) = uniform(rng, -1, 1);
    }
    s.rest_dim = rest_dim;
    return s;
  }

  int k() const { return static_cast<int>(z_values.size()); }
  int dim() const { return 3 + rest_dim; }

  /// m rows of X given X_coord = value (coord 0 for X1, 1 for X2) and Z = z_values[zi].
  Eigen::MatrixXd sample_given(int coord, double value, int zi, int m, Rng& rng) const {
    if (coord != 0 && coord != 1) throw ArgumentError("can only condition on X1 or X2");
    if (zi < 0 || zi >= k()) throw ArgumentError("Z index out of range");
    Eigen::MatrixXd x(m, dim());
    const double other_mu = coord == 0 ? mu2(zi) : mu1(zi);
    for (int i = 0; i < m; ++i) {
      x(i, coord) = value;
      x(i, 1 - coord) = other_mu + normal01(rng);
      x(i, 2) = z_values(zi);
      for (int j = 0; j < rest_dim; ++j) x(i, 3 + j) = normal01(rng);
    }
    return x;
  }
};

struct ConditionalDerivative {
  Eigen::VectorXd g;    // per-basis d/dx E[phi_i(X) | X_coord = x, Z = z]
  Eigen::MatrixXd cov;  // covariance of the estimate g
  double max_se = 0;
  bool noisy = false;   // some entry's SE exceeds the requested tolerance

  /// Standard error of a . g.
  double se(const Eigen::VectorXd& a) const { return std::sqrt(std::max(0.0, a.dot(cov * a))); }
};

/// Central difference in the conditioned coordinate of the MC conditional
/// mean of each basis function, with the same draws at +h and -h.
template <BasisFamily B>
ConditionalDerivative conditional_derivative(const B& basis, int coord, double value, int zi,
                                             const ConditionalSampler& sampler, int m, double h, Rng& rng,
                                             double tolerance = 1e-2) {
  if (m < 2) throw ArgumentError("need at least two MC samples");
  if (!(h > 0)) throw ArgumentError("finite-difference step must be positive");
  if (basis.input_dim() != sampler.dim()) throw ArgumentError("basis input dim does not match sampler");
  Eigen::MatrixXd x = sampler.sample_given(coord, value, zi, m, rng);
  Eigen::MatrixXd xp = x, xm = x;
  xp.col(coord).array() += h;
  xm.col(coord).array() -= h;
  Eigen::MatrixXd diff = (basis.evaluate(xp) - basis.evaluate(xm)) / (2 * h);

  ConditionalDerivative out;
  out.g = diff.colwise().mean().transpose();
  Eigen::MatrixXd centered = diff.rowwise() - out.g.transpose();
  out.cov = centered.transpose() * centered / (static_cast<double>(m - 1) * m);
  out.max_se = out.cov.diagonal().cwiseMax(0.0).cwiseSqrt().maxCoeff();
  out.noisy = out.max_se > tolerance;
  return out;
}

struct FootprintInstance {
  BasisModel<TanhBasis> base;  // basis Phi and base head w
  Eigen::VectorXd r;           // fine-tuned head on the same basis
  ConditionalSampler sampler;
  /// Probe offsets added to the conditional mean of the probed coordinate.
  std::vector<double> offsets{-2, -1.5, -1, -0.5, 0, 0.5, 1, 1.5, 2};
  int mc_samples = 10000;
  double fd_step = 1e-2;
  double cos_threshold = 1e-6;
  std::uint64_t seed = 0;

  void validate() const {
    base.validate();
    if (r.size() != base.basis.count()) throw ArgumentError("fine-tuned head length does not match basis");
    if (mc_samples < 10000) throw ArgumentError("need at least 1e4 MC samples");
    if (!(cos_threshold > 0)) throw ArgumentError("cosine threshold must be positive");
    if (!(fd_step > 0)) throw ArgumentError("finite-difference step must be positive");
    if (offsets.empty()) throw ArgumentError("probe grid is empty");
    if (base.basis.input_dim() != sampler.dim()) throw ArgumentError("basis input dim does not match sampler");
  }
};

/// Random instance: tanh basis of `basis_count` functions over (X1, X2, Z, 3 more),
/// base head w ~ N(0, I), fine-tuned head r = w + N(0, I).
inline FootprintInstance random_footprint_instance(int basis_count, int k, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  FootprintInstance inst;
  inst.sampler = ConditionalSampler::draw(k, 3, rng);
  inst.base.basis = TanhBasis::draw(basis_count, inst.sampler.dim(), rng, 0.7);
  inst.base.head.resize(basis_count);
  inst.r.resize(basis_count);
  for (int i = 0; i < basis_count; ++i) inst.base.head(i) = normal01(rng);
  for (int i = 0; i < basis_count; ++i) inst.r(i) = inst.base.head(i) + normal01(rng);
  inst.seed = derive_seed(seed, {1});
  return inst;
}

/// One probe point in S (coord 0) or S' (coord 1), with every quantity of the
/// inequality chain evaluated there.
struct ProbeRecord {
  int coord = 0;
  int z_index = 0;
  double value = 0;
  double g_norm = 0;
  double cos_w = 0;   // |cos(w, g)|
  double cos_r = 0;   // |cos(r, g)|
  double w_dot = 0;   // |w . g|
  double r_dot = 0;   // |r . g|
  double tol = 0;     // 3 SE allowance on the constraint at this point
  double bound = 0;   // lower-bound term (S) or upper-bound term (S')
  bool in_set = false;
  std::vector<std::string> violations;
};

struct FootprintReport {
  enum class Status { holds, violated, inconclusive, empty };

  double eps_p = 0;
  double eps_v = 0;  // max over S of eps_v(x1, z)
  double eta_v = 0;
  double r_norm = 0;
  double w_norm = 0;
  double lower = 0;
  double upper = std::numeric_limits<double>::infinity();
  // The same bounds with the 3 SE allowance folded into eps_p and eta_v.
  double lower_mc = 0;
  double upper_mc = std::numeric_limits<double>::infinity();
  double eps_p_se = 0;
  double eta_v_se = 0;
  int s_size = 0;
  int s_prime_size = 0;
  bool noisy = false;
  Status status = Status::empty;
  std::vector<ProbeRecord> probes;

  bool holds() const { return status == Status::holds; }
  bool sandwich() const { return lower_mc <= r_norm * (1 + 1e-12) && r_norm <= upper_mc * (1 + 1e-12); }
};

inline const char* to_string(FootprintReport::Status s) {
  switch (s) {
    case FootprintReport::Status::holds: return "holds";
    case FootprintReport::Status::violated: return "violated";
    case FootprintReport::Status::inconclusive: return "inconclusive";
    case FootprintReport::Status::empty: return "empty";
  }
  return "?";
}

/// Constraint levels eps_p = max |w.g| and eta_v = max |r.g'| come from one
/// set of MC draws over the probe grid; every probe-point quantity is then
/// re-estimated from independent draws and each step of the inequality chain
/// is checked there with a 3 SE allowance.
inline FootprintReport footprint_check(const FootprintInstance& inst) {
  inst.validate();
  const auto& w = inst.base.head;
  const auto& r = inst.r;
  const auto& basis = inst.base.basis;
  FootprintReport rep;
  rep.w_norm = w.norm();
  rep.r_norm = r.norm();

  auto grid_value = [&](int coord, int zi, double off) {
    return (coord == 0 ? inst.sampler.mu1(zi) : inst.sampler.mu2(zi)) + off;
  };
  const int nz = inst.sampler.k();
  const int no = static_cast<int>(inst.offsets.size());

  // Constraint levels.
  Rng level_rng = make_rng(derive_seed(inst.seed, {1}));
  for (int coord = 0; coord < 2; ++coord) {
    const Eigen::VectorXd& head = coord == 0 ? w : r;
    for (int zi = 0; zi < nz; ++zi)
      for (int o = 0; o < no; ++o) {
        auto cd = conditional_derivative(basis, coord, grid_value(coord, zi, inst.offsets[o]), zi, inst.sampler,
                                         inst.mc_samples, inst.fd_step, level_rng);
        const double v = std::abs(head.dot(cd.g));
        double& level = coord == 0 ? rep.eps_p : rep.eta_v;
        double& level_se = coord == 0 ? rep.eps_p_se : rep.eta_v_se;
        if (v > level) {
          level = v;
          level_se = cd.se(head);
        }
      }
  }

  const double rel = 1e-12;
  Rng probe_rng = make_rng(derive_seed(inst.seed, {2}));
  bool any_violation = false, inconclusive = false;
  for (int coord = 0; coord < 2; ++coord) {
    for (int zi = 0; zi < nz; ++zi)
      for (int o = 0; o < no; ++o) {
        ProbeRecord p;
        p.coord = coord;
        p.z_index = zi;
        p.value = grid_value(coord, zi, inst.offsets[o]);
        auto cd = conditional_derivative(basis, coord, p.value, zi, inst.sampler, inst.mc_samples, inst.fd_step,
                                         probe_rng);
        rep.noisy = rep.noisy || cd.noisy;
        const auto& g = cd.g;
        p.g_norm = g.norm();
        p.w_dot = std::abs(w.dot(g));
        p.r_dot = std::abs(r.dot(g));
        p.cos_w = (p.g_norm > 0 && rep.w_norm > 0) ? p.w_dot / (rep.w_norm * p.g_norm) : 0.0;
        p.cos_r = (p.g_norm > 0 && rep.r_norm > 0) ? p.r_dot / (rep.r_norm * p.g_norm) : 0.0;
        auto fail = [&](const std::string& what) { p.violations.push_back(what); };

        if (coord == 0) {
          p.in_set = p.cos_w > inst.cos_threshold && p.cos_r > inst.cos_threshold;
          p.tol = 3 * std::hypot(cd.se(w), rep.eps_p_se);
          const double eps_p = rep.eps_p + p.tol;
          // |w.g| <= eps_p everywhere.
          if (p.w_dot > eps_p) fail("|w.g| <= eps_p");
          // |w.g| = |w||g||cos(w,g)|.
          if (std::abs(rep.w_norm * p.g_norm * p.cos_w - p.w_dot) > rel * (1 + p.w_dot))
            fail("|w.g| = |w||g|cos");
          const double ev = p.r_dot;
          if (std::abs(rep.r_norm * p.g_norm * p.cos_r - ev) > rel * (1 + ev)) fail("eps_v = |r||g|cos");
          if (p.in_set) {
            ++rep.s_size;
            rep.eps_v = std::max(rep.eps_v, ev);
            // |g| <= eps_p / (|w| |cos(w,g)|)
            if (p.g_norm > eps_p / (rep.w_norm * p.cos_w) * (1 + rel)) fail("|g| <= eps_p / (|w| cos_w)");
            // eps_v <= eps_p |r| cos_r / (|w| cos_w)
            if (ev > eps_p * rep.r_norm * p.cos_r / (rep.w_norm * p.cos_w) * (1 + rel))
              fail("eps_v <= eps_p |r| cos_r / (|w| cos_w)");
            if (rep.eps_p > p.tol) {
              p.bound = ev * rep.w_norm * p.cos_w / (rep.eps_p * p.cos_r);
              rep.lower = std::max(rep.lower, p.bound);
              const double term = ev * rep.w_norm * p.cos_w / (eps_p * p.cos_r);
              rep.lower_mc = std::max(rep.lower_mc, term);
              if (term > rep.r_norm * (1 + rel)) fail("|r| >= lower term");
            } else {
              inconclusive = true;
            }
          }
        } else {
          p.in_set = p.cos_r > inst.cos_threshold;
          p.tol = 3 * std::hypot(cd.se(r), rep.eta_v_se);
          const double eta = rep.eta_v + p.tol;
          if (p.r_dot > eta) fail("|r.g'| <= eta_v");
          if (std::abs(rep.r_norm * p.g_norm * p.cos_r - p.r_dot) > rel * (1 + p.r_dot)) fail("|r.g'| = |r||g'|cos");
          if (p.in_set) {
            ++rep.s_prime_size;
            p.bound = rep.eta_v / (p.g_norm * p.cos_r);
            rep.upper = std::min(rep.upper, p.bound);
            const double term = eta / (p.g_norm * p.cos_r);
            rep.upper_mc = std::min(rep.upper_mc, term);
            if (rep.r_norm > term * (1 + rel)) fail("|r| <= upper term");
          }
        }
        any_violation = any_violation || !p.violations.empty();
        rep.probes.push_back(std::move(p));
      }
  }

  if (any_violation)
    rep.status = FootprintReport::Status::violated;
  else if (inconclusive)
    rep.status = FootprintReport::Status::inconclusive;
  else if (rep.s_size == 0 || rep.s_prime_size == 0)
    rep.status = FootprintReport::Status::empty;
  else
    rep.status = FootprintReport::Status::holds;
  return rep;
}

}  // namespace aisc

#endif  // AISC_THEORY_HPP
