#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <cstdlib>
#include <sstream>

#include "aisc/basis.hpp"
#include "aisc/explain.hpp"
#include "aisc/mlp.hpp"
#include "test_util.hpp"

using namespace aisc;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MatrixXd random_matrix(int r, int c, Rng& rng) {
  MatrixXd m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = uniform(rng, -1, 1);
  return m;
}

VectorXd random_vector(int n, Rng& rng) { return random_matrix(n, 1, rng).col(0); }

double rel_err(const MatrixXd& a, const MatrixXd& b) { return (a - b).norm() / std::max(b.norm(), 1e-300); }

// Central finite-difference Jacobian (in x out) of a batch function at z.
MatrixXd fd_jacobian(const BatchFunction& g, const VectorXd& z, double h) {
  const int dim = static_cast<int>(z.size());
  const int out = static_cast<int>(g(z.transpose()).cols());
  MatrixXd jac(dim, out);
  for (int i = 0; i < dim; ++i) {
    VectorXd zp = z, zm = z;
    zp(i) += h;
    zm(i) -= h;
    jac.row(i) = (g(zp.transpose()) - g(zm.transpose())).row(0) / (2 * h);
  }
  return jac;
}

// A linear chain x -> n0 -> n1 -> ... -> n_{d-1}; every node also reads x.
struct LinearChain {
  SupplyChainGraph g;
  std::map<NodeId, LinearNode> models;
  NodeId sink = 0;
};

LinearChain linear_chain(int depth, int dim, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  LinearChain c;
  NodeId prev = -1;
  for (int k = 0; k < depth; ++k) {
    NodeId v = c.g.add_node(NodeKind::model, "o", depth - 1 - k);
    const int in = dim + (prev >= 0 ? 1 : 0);
    c.models[v] = LinearNode{random_vector(in, rng), uniform(rng, -1, 1)};
    if (prev >= 0) c.g.add_edge(prev, v);
    prev = v;
  }
  c.sink = prev;
  return c;
}

// Gradient of the composite by direct recursion over the graph.
VectorXd analytic_gradient(const SupplyChainGraph& g, const std::map<NodeId, LinearNode>& models, NodeId v, int dim,
                           bool direct_x) {
  const auto& w = models.at(v).weights;
  const auto& ps = g.parent_list(v);
  VectorXd grad = (direct_x || ps.empty()) ? VectorXd(w.head(dim)) : VectorXd::Zero(dim);
  for (std::size_t k = 0; k < ps.size(); ++k)
    grad += w(dim + static_cast<Eigen::Index>(k)) * analytic_gradient(g, models, ps[k], dim, direct_x);
  return grad;
}

}  // namespace

TEST(Lime, ConstantFunctionGivesZero) {
  BatchFunction g = [](const MatrixXd& x) { return MatrixXd::Constant(x.rows(), 2, 3.5); };
  auto e = fit_local_linear(g, VectorXd::Ones(4), {0.2, 50, 7});
  EXPECT_EQ(e.weights.rows(), 4);
  EXPECT_EQ(e.weights.cols(), 2);
  EXPECT_EQ(e.weights.norm(), 0.0);
  EXPECT_FALSE(e.ill_conditioned);
}

TEST(Lime, LinearMapRecoveredExactly) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    Rng rng = make_rng(s);
    const int in = 2 + static_cast<int>(s % 6), out = 1 + static_cast<int>(s % 3);
    MatrixXd a = random_matrix(out, in, rng);
    VectorXd b = random_vector(out, rng);
    BatchFunction g = [&](const MatrixXd& x) -> MatrixXd { return (x * a.transpose()).rowwise() + b.transpose(); };
    VectorXd z = random_vector(in, rng);
    for (double r : {0.2, 1e-3, 5.0}) {
      auto e = fit_local_linear(g, z, {r, 50, s});
      EXPECT_LE(rel_err(e.weights, a.transpose()), 1e-9) << "seed " << s << " radius " << r;
    }
  }
}

TEST(Lime, SmoothFunctionConvergesToJacobian) {
  Rng rng = make_rng(3);
  const int dim = 5;
  BasisModel<TanhBasis> m{TanhBasis::draw(8, dim, rng), random_vector(8, rng)};
  BatchFunction g = [&](const MatrixXd& x) -> MatrixXd {
    return m.evaluate(x).unaryExpr([](double t) { return sigmoid(t); });
  };
  VectorXd z = random_vector(dim, rng);
  MatrixXd jac = fd_jacobian(g, z, 1e-6);
  double prev = std::numeric_limits<double>::infinity();
  for (double r : {1e-2, 1e-3, 1e-4}) {
    auto e = fit_local_linear(g, z, {r, 200, 11});
    const double err = (e.weights - jac).cwiseAbs().maxCoeff();
    EXPECT_LT(err, prev) << "radius " << r;
    prev = err;
  }
  EXPECT_LE(prev, 1e-3);
}

TEST(Lime, SmoothPerceptronAtSmallRadius) {
  auto model = MlpModel::create({6, 8, 8, 1}, true, 5);
  BatchFunction g = [&](const MatrixXd& x) -> MatrixXd { return model.forward(x); };
  Rng rng = make_rng(9);
  VectorXd z = random_vector(6, rng);
  auto e = fit_local_linear(g, z, {1e-4, 50, 2});
  EXPECT_LE((e.weights - fd_jacobian(g, z, 1e-6)).cwiseAbs().maxCoeff(), 1e-3);
}

TEST(Lime, FewSamplesFlaggedIllConditioned) {
  BatchFunction g = [](const MatrixXd& x) -> MatrixXd { return x.rowwise().sum(); };
  auto e = fit_local_linear(g, VectorXd::Zero(6), {0.2, 3, 1});
  EXPECT_TRUE(e.ill_conditioned);
  EXPECT_TRUE(e.weights.allFinite());
}

TEST(Lime, Determinism) {
  auto model = MlpModel::create({4, 8, 8, 1}, true, 1);
  BatchFunction g = node_function(model);
  auto a = fit_local_linear(g, VectorXd::Ones(4), {0.2, 50, 42});
  auto b = fit_local_linear(g, VectorXd::Ones(4), {0.2, 50, 42});
  EXPECT_EQ(a.weights, b.weights);
}

TEST(Lime, Errors) {
  BatchFunction g = [](const MatrixXd& x) -> MatrixXd { return x.rowwise().sum(); };
  EXPECT_THROW(fit_local_linear(g, VectorXd::Ones(2), {0.0, 50, 0}), ArgumentError);
  EXPECT_THROW(fit_local_linear(g, VectorXd::Ones(2), {0.2, 0, 0}), ArgumentError);
  EXPECT_THROW(fit_local_linear(g, VectorXd(), {0.2, 50, 0}), ArgumentError);
  BatchFunction bad = [](const MatrixXd&) -> MatrixXd { return MatrixXd::Zero(1, 1); };
  EXPECT_THROW(fit_local_linear(bad, VectorXd::Ones(2), {0.2, 50, 0}), ArgumentError);
}

TEST(Lime, UnitBallSamplesInsideBall) {
  Rng rng = make_rng(0);
  MatrixXd u = sample_unit_ball(5000, 3, rng);
  EXPECT_LE(u.rowwise().norm().maxCoeff(), 1.0);
  // Radius r has CDF r^3, so mean radius is 3/4.
  EXPECT_NEAR(u.rowwise().norm().mean(), 0.75, 0.01);
  EXPECT_NEAR(u.colwise().mean().norm(), 0.0, 0.03);
}

TEST(EndToEnd, SingleNodeMatchesDirectFit) {
  SupplyChainGraph g;
  NodeId v = g.add_node(NodeKind::model, "a", 0);
  std::map<NodeId, MlpModel> models;
  models.emplace(v, MlpModel::create({5, 8, 8, 1}, true, 3));
  VectorXd x = VectorXd::LinSpaced(5, -1, 1);
  LimeConfig cfg{0.2, 50, 8};
  auto a = end_to_end_explanation(g, models, v, x, cfg);
  auto b = fit_local_linear(node_function(models.at(v)), x, cfg);
  EXPECT_EQ(a.weights, b.weights);
  auto c = supply_chain_explanation(g, models, v, x, cfg);
  EXPECT_EQ(c.weights, b.weights);
  EXPECT_DOUBLE_EQ(cosine_similarity(a, c), 1.0);
}

TEST(EndToEnd, LinearChainIsProductOfNodeMaps) {
  for (int depth = 1; depth <= 5; ++depth) {
    auto c = linear_chain(depth, 4, 100 + depth);
    Rng rng = make_rng(depth);
    VectorXd x = random_vector(4, rng);
    auto e = end_to_end_explanation(c.g, c.models, c.sink, x, {0.2, 50, 1});
    EXPECT_LE(rel_err(e.weights, analytic_gradient(c.g, c.models, c.sink, 4, true)), 1e-9);
  }
}

TEST(SupplyChain, LinearChainsMatchAnalyticJacobian) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const int dim = 3;
    auto dag = aisc::testing::random_dag(s, 6, 0.4);
    Rng rng = make_rng(s + 1000);
    std::map<NodeId, LinearNode> models;
    for (NodeId v : dag.node_ids())
      models[v] = LinearNode{random_vector(dim + static_cast<int>(dag.parent_list(v).size()), rng), 0.3};
    VectorXd x = random_vector(dim, rng);
    for (NodeId v : dag.node_ids()) {
      LimeConfig cfg{0.2, 50, s};
      auto sc = supply_chain_explanation(dag, models, v, x, cfg);
      EXPECT_LE(rel_err(sc.weights, analytic_gradient(dag, models, v, dim, true)), 1e-9);
      auto ee = end_to_end_explanation(dag, models, v, x, cfg);
      EXPECT_LE(rel_err(ee.weights, sc.weights), 1e-9);
      auto po = supply_chain_explanation(dag, models, v, x, cfg, ChainRule::parent_only);
      EXPECT_LE(rel_err(po.weights, analytic_gradient(dag, models, v, dim, false)), 1e-9);
    }
  }
}

TEST(SupplyChain, IdentitySurrogatesOnPureChain) {
  SupplyChainGraph g;
  for (int i = 0; i < 4; ++i) g.add_node(NodeKind::model, "o", 3 - i);
  for (int i = 0; i < 3; ++i) g.add_edge(i, i + 1);
  const int dim = 1;
  std::map<NodeId, Explanation> local;
  local[0].weights = MatrixXd::Identity(1, 1);
  for (int i = 1; i < 4; ++i) {
    local[i].weights = MatrixXd::Zero(dim + 1, 1);
    local[i].weights(dim, 0) = 1.0;
  }
  EXPECT_EQ(compose_chain_rule(g, 3, local, dim), MatrixXd::Identity(1, 1));
}

TEST(SupplyChain, CompositionIsAssociativeAlongChains) {
  auto c = linear_chain(6, 3, 77);
  Rng rng = make_rng(5);
  VectorXd x = random_vector(3, rng);
  auto fits = fit_node_surrogates(c.g, c.models, c.sink, x, {0.2, 50, 3});
  for (ChainRule rule : {ChainRule::block_form, ChainRule::parent_only}) {
    MatrixXd whole = compose_chain_rule(c.g, c.sink, fits, 3, rule);
    for (NodeId k = 0; k < c.sink; ++k) {
      std::map<NodeId, MatrixXd> given{{k, compose_chain_rule(c.g, k, fits, 3, rule)}};
      std::map<NodeId, Explanation> downstream;
      for (const auto& [u, f] : fits)
        if (u > k) downstream.emplace(u, f);
      EXPECT_LE(rel_err(compose_chain_rule(c.g, c.sink, downstream, 3, rule, given), whole), 1e-12);
    }
  }
}

TEST(SupplyChain, BlockMismatchIsInternalError) {
  auto c = linear_chain(2, 3, 1);
  std::map<NodeId, Explanation> local;
  local[0].weights = MatrixXd::Ones(3, 1);
  local[1].weights = MatrixXd::Ones(3, 1);  // should be 4 rows
  EXPECT_THROW(compose_chain_rule(c.g, 1, local, 3), std::logic_error);
}

TEST(SupplyChain, CyclicAncestryRejected) {
  SupplyChainGraph g;
  for (int i = 0; i < 3; ++i) g.add_node(NodeKind::model, "o", 0);
  g.add_edge(0, 1);
  g.add_edge(1, 0);
  g.add_edge(1, 2);
  std::map<NodeId, LinearNode> models;
  EXPECT_THROW(supply_chain_explanation(g, models, 2, VectorXd::Ones(2), {0.2, 50, 0}), CycleError);
}

TEST(Cosine, BasicIdentities) {
  Rng rng = make_rng(4);
  MatrixXd a = random_matrix(5, 2, rng), b = random_matrix(5, 2, rng);
  EXPECT_NEAR(cosine_similarity(a, a), 1.0, 1e-15);
  EXPECT_NEAR(cosine_similarity(a, -a), -1.0, 1e-15);
  EXPECT_NEAR(cosine_similarity(a, 3 * a), 1.0, 1e-15);
  EXPECT_DOUBLE_EQ(cosine_similarity(a, b), cosine_similarity(b, a));
  EXPECT_NEAR(cosine_similarity(2.5 * a, b), cosine_similarity(a, b), 1e-15);
  double dot = 0, na = 0, nb = 0;
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 2; ++j) {
      dot += a(i, j) * b(i, j);
      na += a(i, j) * a(i, j);
      nb += b(i, j) * b(i, j);
    }
  EXPECT_NEAR(cosine_similarity(a, b), dot / std::sqrt(na * nb), 1e-14);
}

TEST(Cosine, Errors) {
  EXPECT_THROW(cosine_similarity(MatrixXd::Zero(3, 1), MatrixXd::Ones(3, 1)), DegenerateError);
  EXPECT_THROW(cosine_similarity(MatrixXd::Ones(3, 1), MatrixXd::Ones(2, 1)), ArgumentError);
}

TEST(Mse, Cases) {
  MatrixXd a = MatrixXd::Constant(4, 1, 0.5);
  EXPECT_EQ(explanation_mse(a, a), 0.0);
  EXPECT_DOUBLE_EQ(explanation_mse(a + MatrixXd::Ones(4, 1), a), 1.0);
  Rng rng = make_rng(8);
  MatrixXd p = random_matrix(6, 3, rng), q = random_matrix(6, 3, rng);
  double sum = 0;
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 3; ++j) sum += (p(i, j) - q(i, j)) * (p(i, j) - q(i, j));
  EXPECT_NEAR(explanation_mse(p, q), sum / 18, 1e-15);
  EXPECT_THROW(explanation_mse(p, q.topRows(5)), ArgumentError);
}

TEST(Recourse, ClosedFormFlipDistance) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    Rng rng = make_rng(s);
    VectorXd w = random_vector(5, rng) * 3;
    const double b = uniform(rng, -1, 1);
    VectorXd x = random_vector(5, rng);
    auto predict = [&](const VectorXd& z) { return sigmoid(w.dot(z) + b); };
    const double expected = std::abs(w.dot(x) + b) / w.norm();
    EXPECT_NEAR(recourse_distance(predict, x, MatrixXd(w)), expected, 1e-4) << "seed " << s;
    EXPECT_NEAR(recourse_distance(predict, x, MatrixXd(7.0 * w)), recourse_distance(predict, x, MatrixXd(w)), 0.0);
  }
}

TEST(Recourse, CapWhenNoFlip) {
  auto never = [](const VectorXd&) { return 0.9; };
  EXPECT_EQ(recourse_distance(never, VectorXd::Ones(3), MatrixXd::Ones(3, 1)), 1000.0);
  EXPECT_EQ(recourse_distance(never, VectorXd::Ones(3), MatrixXd::Ones(3, 1), 5.0), 5.0);
  // Pointing the wrong way also never flips.
  VectorXd w = VectorXd::Ones(3);
  auto predict = [&](const VectorXd& z) { return sigmoid(w.dot(z)); };
  EXPECT_EQ(recourse_distance(predict, VectorXd::Ones(3), MatrixXd(-w)), 1000.0);
}

TEST(Recourse, DistanceWithinCap) {
  Rng rng = make_rng(12);
  for (int i = 0; i < 50; ++i) {
    VectorXd w = random_vector(4, rng), x = random_vector(4, rng) * 100;
    auto predict = [&](const VectorXd& z) { return sigmoid(w.dot(z)); };
    const double d = recourse_distance(predict, x, MatrixXd(random_vector(4, rng)));
    EXPECT_GT(d, 0.0);
    EXPECT_LE(d, 1000.0);
  }
}

TEST(Recourse, Errors) {
  auto p = [](const VectorXd&) { return 0.2; };
  EXPECT_THROW(recourse_distance(p, VectorXd::Ones(3), MatrixXd::Zero(3, 1)), DegenerateError);
  EXPECT_THROW(recourse_distance(p, VectorXd::Ones(3), MatrixXd::Ones(3, 2)), ArgumentError);
  EXPECT_THROW(recourse_distance(p, VectorXd::Ones(3), MatrixXd::Ones(3, 1), 0.0), ArgumentError);
  EXPECT_EQ(recourse_error(4.0, 4.0), 0.0);
  EXPECT_EQ(recourse_error(1000.0, 1.0), 999.0);
}

TEST(Csv, ShapeHeaderAndRoundTrippableValues) {
  Explanation e;
  e.weights.resize(2, 2);
  e.weights << 0.1, -2, 1e-300, 3;
  const std::string csv = explanation_to_csv(e);
  EXPECT_EQ(csv, "shape,2,2\n0.10000000000000001,-2\n1e-300,3\n");
  Rng rng = make_rng(1);
  e.weights = random_matrix(3, 2, rng) * 1e3;
  std::istringstream in(explanation_to_csv(e));
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "shape,3,2");
  for (int r = 0; r < 3; ++r) {
    std::getline(in, line);
    const auto comma = line.find(',');
    EXPECT_EQ(std::strtod(line.substr(0, comma).c_str(), nullptr), e.weights(r, 0));
    EXPECT_EQ(std::strtod(line.substr(comma + 1).c_str(), nullptr), e.weights(r, 1));
  }
}
