#ifndef AISC_DATA_HPP
#define AISC_DATA_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <vector>

#include "aisc/errors.hpp"
#include "aisc/mlp.hpp"
#include "aisc/rng.hpp"

namespace aisc {

struct Dataset {
  Eigen::MatrixXd features;    // n x dim
  std::vector<int> labels;     // 0/1, may be empty
  std::vector<int> sensitive;  // 0/1, may be empty
  std::vector<int> group;      // generator-specific group tag, may be empty

  int rows() const { return static_cast<int>(features.rows()); }
  int dim() const { return static_cast<int>(features.cols()); }

  void validate() const {
    const auto n = static_cast<std::size_t>(features.rows());
    auto check = [&](const std::vector<int>& v, const char* name, bool binary) {
      if (v.empty()) return;
      if (v.size() != n) throw ArgumentError(std::string(name) + " length does not match feature rows");
      if (binary)
        for (int x : v)
          if (x != 0 && x != 1) throw ArgumentError(std::string(name) + " must be 0/1");
    };
    check(labels, "labels", true);
    check(sensitive, "sensitive", true);
    check(group, "group", false);
  }

  /// Rows [idx...] as a new dataset.
  Dataset subset(const std::vector<int>& idx) const {
    Dataset out;
    out.features.resize(static_cast<Eigen::Index>(idx.size()), features.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) out.features.row(static_cast<Eigen::Index>(i)) = features.row(idx[i]);
    auto pick = [&](const std::vector<int>& v, std::vector<int>& dst) {
      if (v.empty()) return;
      for (int i : idx) dst.push_back(v[i]);
    };
    pick(labels, out.labels);
    pick(sensitive, out.sensitive);
    pick(group, out.group);
    return out;
  }
};

/// Equal-weight mixture of two unit-variance isotropic Gaussians whose centers
/// lie in the unit hypercube.
struct GaussianMixture {
  Eigen::MatrixXd centers;  // 2 x dim

  static GaussianMixture draw(int dim, Rng& rng) {
    if (dim < 1) throw ArgumentError("feature dimension must be positive");
    GaussianMixture m{Eigen::MatrixXd(2, dim)};
    for (int k = 0; k < 2; ++k)
      for (int j = 0; j < dim; ++j) m.centers(k, j) = uniform01(rng);
    return m;
  }

  int dim() const { return static_cast<int>(centers.cols()); }

  /// Samples n rows; `component` receives the mixture component of each row.
  Eigen::MatrixXd sample(int n, Rng& rng, std::vector<int>* component = nullptr) const {
    if (n < 1) throw ArgumentError("sample count must be positive");
    Eigen::MatrixXd x(n, dim());
    if (component) component->assign(static_cast<std::size_t>(n), 0);
    for (int i = 0; i < n; ++i) {
      const int k = uniform01(rng) < 0.5 ? 0 : 1;
      if (component) (*component)[i] = k;
      for (int j = 0; j < dim(); ++j) x(i, j) = centers(k, j) + normal01(rng);
    }
    return x;
  }
};

/// Features drawn from a freshly sampled two-component mixture. `group` holds
/// the component index of each row.
inline Dataset generate_features(int n, int dim, std::uint64_t seed) {
  if (n < 1 || dim < 1) throw ArgumentError("generate_features needs n >= 1 and dim >= 1");
  Rng rng = make_rng(seed);
  auto mix = GaussianMixture::draw(dim, rng);
  Dataset d;
  d.features = mix.sample(n, rng, &d.group);
  return d;
}

/// Random second-order polynomial scorer: score = sigmoid(x'Ax + b'x + c + eps),
/// coefficients ~ U[-1, 1], eps ~ N(0, noise_sd^2). Label = score >= 0.5.
struct QuadraticLabeler {
  static constexpr double kDefaultNoiseSd = 0.1;

  Eigen::MatrixXd quad;
  Eigen::VectorXd lin;
  double bias = 0;
  double noise_sd = kDefaultNoiseSd;

  static QuadraticLabeler draw(int dim, Rng& rng, double noise_sd = kDefaultNoiseSd) {
    QuadraticLabeler q{Eigen::MatrixXd(dim, dim), Eigen::VectorXd(dim), 0.0, noise_sd};
    for (int i = 0; i < dim; ++i)
      for (int j = 0; j < dim; ++j) q.quad(i, j) = uniform(rng, -1, 1);
    for (int i = 0; i < dim; ++i) q.lin(i) = uniform(rng, -1, 1);
    q.bias = uniform(rng, -1, 1);
    return q;
  }

  /// Labels for every row; noise drawn from rng in row order.
  std::vector<int> label(const Eigen::MatrixXd& x, Rng& rng) const {
    if (x.rows() < 1) throw ArgumentError("cannot label an empty feature matrix");
    if (x.cols() != quad.cols()) throw ArgumentError("feature dimension does not match labeler");
    std::vector<int> y(static_cast<std::size_t>(x.rows()));
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const Eigen::VectorXd r = x.row(i).transpose();
      const double eps = noise_sd > 0 ? noise_sd * normal01(rng) : 0.0;
      const double s = sigmoid(r.dot(quad * r) + lin.dot(r) + bias + eps);
      y[static_cast<std::size_t>(i)] = s >= 0.5 ? 1 : 0;
    }
    return y;
  }
};

/// Labels from a fresh random quadratic labeler seeded by `seed`.
inline std::vector<int> generate_labels(const Eigen::MatrixXd& features, std::uint64_t seed,
                                        double noise_sd = QuadraticLabeler::kDefaultNoiseSd) {
  if (features.rows() < 1 || features.cols() < 1) throw ArgumentError("cannot label an empty feature matrix");
  Rng rng = make_rng(seed);
  auto q = QuadraticLabeler::draw(static_cast<int>(features.cols()), rng, noise_sd);
  return q.label(features, rng);
}

}  // namespace aisc

#endif  // AISC_DATA_HPP
