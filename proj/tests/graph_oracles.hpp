#ifndef AISC_TESTS_GRAPH_ORACLES_HPP
#define AISC_TESTS_GRAPH_ORACLES_HPP

// Brute-force graph oracles for small graphs.

#include <algorithm>
#include <set>
#include <vector>

#include "aisc/graph.hpp"

namespace aisc::testing {

inline std::vector<std::vector<bool>> adjacency(const SupplyChainGraph& g) {
  const int n = static_cast<int>(g.size());
  std::vector<std::vector<bool>> a(n, std::vector<bool>(n, false));
  for (const auto& [s, t] : g.edges()) a[s][t] = true;
  return a;
}

// reach[u][v]: a path of length >= 1 from u to v (Warshall).
inline std::vector<std::vector<bool>> reachability(const SupplyChainGraph& g) {
  auto r = adjacency(g);
  const int n = static_cast<int>(r.size());
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (r[i][k] && r[k][j]) r[i][j] = true;
  return r;
}

// Enumerates every node sequence of distinct nodes starting at its minimum and
// keeps those closed by edges.
inline std::set<std::vector<int>> brute_force_cycles(const SupplyChainGraph& g) {
  const auto a = adjacency(g);
  const int n = static_cast<int>(a.size());
  std::set<std::vector<int>> out;
  for (int mask = 1; mask < (1 << n); ++mask) {
    std::vector<int> members;
    for (int i = 0; i < n; ++i)
      if (mask & (1 << i)) members.push_back(i);
    if (members.size() < 2) continue;
    std::vector<int> rest(members.begin() + 1, members.end());
    do {
      std::vector<int> cyc{members[0]};
      cyc.insert(cyc.end(), rest.begin(), rest.end());
      bool ok = true;
      for (std::size_t i = 0; i < cyc.size() && ok; ++i) ok = a[cyc[i]][cyc[(i + 1) % cyc.size()]];
      if (ok) out.insert(cyc);
    } while (std::next_permutation(rest.begin(), rest.end()));
  }
  return out;
}

// Counts shortest paths by enumerating every simple path and keeping the
// minimum-length ones.
inline std::vector<double> brute_force_betweenness(const SupplyChainGraph& g) {
  const auto a = adjacency(g);
  const int n = static_cast<int>(a.size());
  std::vector<double> cb(n, 0.0);
  for (int s = 0; s < n; ++s) {
    for (int t = 0; t < n; ++t) {
      if (s == t) continue;
      std::vector<std::vector<int>> paths;
      std::vector<int> path{s};
      std::vector<bool> used(n, false);
      used[s] = true;
      auto rec = [&](auto&& self, int u) -> void {
        if (u == t) {
          paths.push_back(path);
          return;
        }
        for (int w = 0; w < n; ++w)
          if (a[u][w] && !used[w]) {
            used[w] = true;
            path.push_back(w);
            self(self, w);
            path.pop_back();
            used[w] = false;
          }
      };
      rec(rec, s);
      if (paths.empty()) continue;
      std::size_t best = paths[0].size();
      for (const auto& p : paths) best = std::min(best, p.size());
      double total = 0;
      std::vector<double> through(n, 0.0);
      for (const auto& p : paths) {
        if (p.size() != best) continue;
        total += 1;
        for (std::size_t i = 1; i + 1 < p.size(); ++i) through[p[i]] += 1;
      }
      for (int v = 0; v < n; ++v) cb[v] += through[v] / total;
    }
  }
  return cb;
}

}  // namespace aisc::testing

#endif  // AISC_TESTS_GRAPH_ORACLES_HPP
