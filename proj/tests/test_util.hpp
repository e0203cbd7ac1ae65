#pragma once

#include "flowx/gnn.hpp"
#include "flowx/graph.hpp"
#include "flowx/rng.hpp"

#include <algorithm>
#include <set>
#include <utility>
#include <vector>

namespace flowx::testutil {

/// Random connected graph: a spanning tree plus extra symmetric edges,
/// encoded like the synthetic datasets (directed pairs, self-loops).
inline Graph random_graph(int n, std::uint64_t seed, bool self_loops = true,
                          int extra_edges = 2, Index feature_dim = 1) {
  SplitMix64 rng = SplitMix64::substream(seed, 0x7357);
  std::set<std::pair<int, int>> und;
  for (int v = 1; v < n; ++v) {
    const int u = static_cast<int>(rng.below(static_cast<std::uint64_t>(v)));
    und.insert({std::min(u, v), std::max(u, v)});
  }
  for (int k = 0; k < extra_edges && n > 2; ++k) {
    const int a = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
    const int b = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
    if (a != b) und.insert({std::min(a, b), std::max(a, b)});
  }
  std::vector<std::pair<int, int>> directed;
  for (const auto& [a, b] : und) {
    directed.emplace_back(a, b);
    directed.emplace_back(b, a);
  }
  Matrix x(feature_dim, n);
  for (Index c = 0; c < n; ++c)
    for (Index r = 0; r < feature_dim; ++r) x(r, c) = rng.uniform(-1.0, 1.0);
  GraphOptions opts;
  opts.add_self_loops = self_loops;
  return build_graph(n, directed, x, opts);
}

inline Graph graph_from_directed(int n, const std::vector<std::pair<int, int>>& edges,
                                 bool self_loops = true, Index feature_dim = 1) {
  GraphOptions opts;
  opts.add_self_loops = self_loops;
  return build_graph(n, edges, Matrix::Ones(feature_dim, n), opts);
}

inline GnnModel random_model(LayerKind kind, ReadoutKind readout, int T, Index input_dim,
                             Index hidden, int classes, std::uint64_t seed) {
  return init_model(kind, readout, T, input_dim, hidden, classes, 0.0, seed);
}

/// Brute-force walk enumeration by nested node loops; independent of the
/// production DFS and postings structure.
inline std::vector<std::vector<int>> brute_force_walks(const Graph& g, int T) {
  std::vector<std::vector<int>> walks;
  std::vector<int> cur(static_cast<std::size_t>(T + 1));
  auto step = [&](auto&& self, int depth) -> void {
    if (depth == T + 1) {
      walks.push_back(cur);
      return;
    }
    for (int v = 0; v < g.n; ++v) {
      if (depth > 0 && g.edge_ordinal(cur[static_cast<std::size_t>(depth - 1)], v) < 0) continue;
      cur[static_cast<std::size_t>(depth)] = v;
      self(self, depth + 1);
    }
  };
  step(step, 0);
  std::sort(walks.begin(), walks.end());
  return walks;
}

/// All walks whose step `layer` uses edge (src, dst); pattern-scan oracle
/// for flows_through and the wildcard set algebra.
inline std::vector<std::vector<int>> walks_matching(const Graph& g, int T, int layer, int src,
                                                    int dst) {
  std::vector<std::vector<int>> out;
  for (const auto& walk : brute_force_walks(g, T)) {
    if (walk[static_cast<std::size_t>(layer - 1)] == src &&
        walk[static_cast<std::size_t>(layer)] == dst)
      out.push_back(walk);
  }
  return out;
}

}  // namespace flowx::testutil
