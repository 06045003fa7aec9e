#ifndef AISC_COMPOSITION_HPP
#define AISC_COMPOSITION_HPP

// Evaluation of composed supply chains: node v computes
//   f_v(x) = h_v(x, f_p1(x), ..., f_pn(x))
// with parents concatenated after x in ascending node-id order.

#include <Eigen/Dense>
#include <concepts>
#include <map>
#include <set>

#include "aisc/errors.hpp"
#include "aisc/graph.hpp"

namespace aisc {

/// Any scalar-output model usable as a supply-chain node.
template <class M>
concept NodeFunction = requires(const M& m, const Eigen::MatrixXd& x) {
  { m.forward(x) } -> std::convertible_to<Eigen::VectorXd>;
  { m.input_dim() } -> std::convertible_to<int>;
};

/// h(z) = weights . z + bias.
struct LinearNode {
  Eigen::VectorXd weights;
  double bias = 0;

  int input_dim() const { return static_cast<int>(weights.size()); }
  Eigen::VectorXd forward(const Eigen::MatrixXd& z) const {
    if (z.cols() != weights.size()) throw ArgumentError("linear node input dimension mismatch");
    return (z * weights).array() + bias;
  }
};

/// Acyclic evaluation order over v and its ancestors.
inline std::vector<NodeId> ancestry_order(const SupplyChainGraph& g, NodeId v) {
  std::set<NodeId> closure = ancestors(g, v);
  if (closure.count(v)) {
    // v lies on a cycle; topological_order on the closure produces the witness
    topological_order(induced_subgraph(g, closure));
  }
  closure.insert(v);
  return topological_order(induced_subgraph(g, closure));
}

/// Input matrix of node u: x followed by each parent's output column.
inline Eigen::MatrixXd node_input(const SupplyChainGraph& g, const std::map<NodeId, Eigen::VectorXd>& outputs,
                                  NodeId u, const Eigen::MatrixXd& x) {
  const auto& ps = g.parent_list(u);
  Eigen::MatrixXd z(x.rows(), x.cols() + static_cast<Eigen::Index>(ps.size()));
  z.leftCols(x.cols()) = x;
  for (std::size_t k = 0; k < ps.size(); ++k) z.col(x.cols() + static_cast<Eigen::Index>(k)) = outputs.at(ps[k]);
  return z;
}

/// Outputs of v and every ancestor for each row of x, each node evaluated once.
template <NodeFunction M>
std::map<NodeId, Eigen::VectorXd> evaluate_ancestry(const SupplyChainGraph& g, const std::map<NodeId, M>& models,
                                                    NodeId v, const Eigen::MatrixXd& x) {
  std::map<NodeId, Eigen::VectorXd> out;
  for (NodeId u : ancestry_order(g, v)) {
    auto it = models.find(u);
    if (it == models.end()) throw LookupError("no model for node " + std::to_string(u));
    Eigen::MatrixXd z = node_input(g, out, u, x);
    if (z.cols() != it->second.input_dim())
      throw ArgumentError("node " + std::to_string(u) + " expects input dim " + std::to_string(it->second.input_dim()) +
                          ", got " + std::to_string(z.cols()));
    out[u] = it->second.forward(z);
  }
  return out;
}

/// f_v for each row of x.
template <NodeFunction M>
Eigen::VectorXd forward_composed(const SupplyChainGraph& g, const std::map<NodeId, M>& models, NodeId v,
                                 const Eigen::MatrixXd& x) {
  return evaluate_ancestry(g, models, v, x).at(v);
}

template <NodeFunction M>
double forward_composed(const SupplyChainGraph& g, const std::map<NodeId, M>& models, NodeId v,
                        const Eigen::VectorXd& x) {
  return forward_composed(g, models, v, Eigen::MatrixXd(x.transpose()))(0);
}

}  // namespace aisc

#endif  // AISC_COMPOSITION_HPP
