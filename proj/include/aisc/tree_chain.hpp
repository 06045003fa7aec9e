#ifndef AISC_TREE_CHAIN_HPP
#define AISC_TREE_CHAIN_HPP

// Supply chains whose ancestor graph is a complete inverted m-ary tree. Nodes
// further upstream get larger models, more data and more epochs.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <deque>
#include <map>

#include "aisc/composition.hpp"
#include "aisc/data.hpp"
#include "aisc/graph.hpp"
#include "aisc/mlp.hpp"
#include "aisc/rng.hpp"

namespace aisc {

struct TreeSpec {
  int degree = 1;
  int depth = 1;
  int feat_dim = 12;
  std::uint64_t seed = 0;

  void validate() const {
    if (degree < 1) throw ArgumentError("tree degree must be >= 1");
    if (depth < 1) throw ArgumentError("tree depth must be >= 1");
    if (feat_dim < 1) throw ArgumentError("feature dimension must be >= 1");
  }
};

/// Model-size level of a node: 1 at the sink, growing by one per hop upstream.
inline int size_level(const NodeRecord& n) { return n.level + 1; }

/// {input, 16*level, 32*level, 1}.
inline std::vector<int> tree_node_widths(int size_level, int input_dim) {
  return {input_dim, 16 * size_level, 32 * size_level, 1};
}

struct NodeTrainingPlan {
  int epochs = 0;
  int samples = 0;
};

/// ceil(15 sqrt(level)) epochs on ceil(1000 sqrt(level)) samples.
inline NodeTrainingPlan training_plan(int size_level) {
  if (size_level < 1) throw ArgumentError("node level must be >= 1");
  const double r = std::sqrt(static_cast<double>(size_level));
  return {static_cast<int>(std::ceil(15.0 * r - 1e-12)), static_cast<int>(std::ceil(1000.0 * r - 1e-12))};
}

struct TreeChain {
  SupplyChainGraph graph;
  std::map<NodeId, MlpModel> models;
  NodeId sink = 0;
  int feat_dim = 0;
  GaussianMixture data_dist;
  std::uint64_t seed = 0;
};

namespace seed_tags {
inline constexpr std::uint64_t kMixture = 1;
inline constexpr std::uint64_t kInit = 2;
inline constexpr std::uint64_t kSamples = 3;
inline constexpr std::uint64_t kLabeler = 4;
inline constexpr std::uint64_t kShuffle = 5;
}  // namespace seed_tags

/// Graph plus freshly initialized (untrained) node models. Node 0 is the sink;
/// ids are assigned breadth-first, so every parent has a larger id than its child.
inline TreeChain build_tree_chain(const TreeSpec& spec) {
  spec.validate();
  TreeChain tc;
  tc.feat_dim = spec.feat_dim;
  tc.seed = spec.seed;
  Rng mix_rng = make_rng(derive_seed(spec.seed, {seed_tags::kMixture}));
  tc.data_dist = GaussianMixture::draw(spec.feat_dim, mix_rng);

  tc.sink = tc.graph.add_node(NodeKind::model, "org-0", 0);
  std::deque<NodeId> frontier{tc.sink};
  while (!frontier.empty()) {
    NodeId child = frontier.front();
    frontier.pop_front();
    const int level = tc.graph.node(child).level;
    if (level + 1 >= spec.depth) continue;
    for (int k = 0; k < spec.degree; ++k) {
      NodeId p = tc.graph.add_node(NodeKind::model, "org-" + std::to_string(tc.graph.size()), level + 1);
      tc.graph.add_edge(p, child);
      frontier.push_back(p);
    }
  }
  for (NodeId v : tc.graph.node_ids()) {
    const int in = spec.feat_dim + static_cast<int>(tc.graph.parent_list(v).size());
    tc.models.emplace(v, MlpModel::create(tree_node_widths(size_level(tc.graph.node(v)), in), true,
                                          derive_seed(spec.seed, {seed_tags::kInit, static_cast<std::uint64_t>(v)})));
  }
  return tc;
}

/// Trains `model` per the level's plan on the first plan.samples rows of data.
inline TrainTrace train_node(MlpModel& model, const Dataset& data, int size_level, std::uint64_t seed) {
  if (data.labels.empty()) throw ArgumentError("training data has no labels");
  data.validate();
  if (data.dim() != model.input_dim())
    throw ArgumentError("training data has " + std::to_string(data.dim()) + " columns, model expects " +
                        std::to_string(model.input_dim()));
  const auto plan = training_plan(size_level);
  if (data.rows() < plan.samples)
    throw ArgumentError("level " + std::to_string(size_level) + " needs " + std::to_string(plan.samples) + " rows");
  TrainOptions opt;
  opt.epochs = plan.epochs;
  opt.batch_size = 32;
  opt.adam.lr = 1e-3;
  opt.seed = seed;
  Eigen::MatrixXd x = data.features.topRows(plan.samples);
  std::span<const int> y(data.labels.data(), static_cast<std::size_t>(plan.samples));
  return model.train(x, y, opt);
}

/// Trains every node parents-first. Each node draws its own sample from the
/// chain's feature distribution, its own quadratic labeler over x, and sees
/// its trained parents' outputs appended to x.
inline void train_tree_chain(TreeChain& tc) {
  for (NodeId v : topological_order(tc.graph)) {
    const auto uv = static_cast<std::uint64_t>(v);
    const int lvl = size_level(tc.graph.node(v));
    const auto plan = training_plan(lvl);
    Rng rng = make_rng(derive_seed(tc.seed, {seed_tags::kSamples, uv}));
    Eigen::MatrixXd x = tc.data_dist.sample(plan.samples, rng);
    Rng lrng = make_rng(derive_seed(tc.seed, {seed_tags::kLabeler, uv}));
    auto labeler = QuadraticLabeler::draw(tc.feat_dim, lrng);

    Dataset d;
    std::map<NodeId, Eigen::VectorXd> parent_out;
    for (NodeId p : tc.graph.parent_list(v)) parent_out[p] = forward_composed(tc.graph, tc.models, p, x);
    d.features = node_input(tc.graph, parent_out, v, x);
    d.labels = labeler.label(x, lrng);
    train_node(tc.models.at(v), d, lvl, derive_seed(tc.seed, {seed_tags::kShuffle, uv}));
  }
}

}  // namespace aisc

#endif  // AISC_TREE_CHAIN_HPP
