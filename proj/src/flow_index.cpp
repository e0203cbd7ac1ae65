#include "flowx/flow_index.hpp"

#include <algorithm>
#include <limits>
#include <sstream>

namespace flowx {

namespace {

std::vector<std::vector<int>> sorted_out_neighbors(const Graph& g) {
  std::vector<std::vector<int>> out(static_cast<std::size_t>(g.n));
  for (const auto& [src, dst] : g.edges) out[static_cast<std::size_t>(src)].push_back(dst);
  for (auto& nbrs : out) std::sort(nbrs.begin(), nbrs.end());
  return out;
}

std::uint64_t checked_mul(std::uint64_t a, std::uint64_t b) {
  if (a != 0 && b > std::numeric_limits<std::uint64_t>::max() / a)
    throw NumericalError("flow count overflow");
  return a * b;
}

std::uint64_t checked_add(std::uint64_t a, std::uint64_t b) {
  if (b > std::numeric_limits<std::uint64_t>::max() - a)
    throw NumericalError("flow count overflow");
  return a + b;
}

}  // namespace

std::vector<Index> FlowIndex::carriers(const Graph& g, Index flow_id) const {
  const auto& nodes = flows[static_cast<std::size_t>(flow_id)].nodes;
  std::vector<Index> out;
  out.reserve(static_cast<std::size_t>(T));
  for (int t = 1; t <= T; ++t) {
    const int ord = g.edge_ordinal(nodes[static_cast<std::size_t>(t - 1)],
                                   nodes[static_cast<std::size_t>(t)]);
    out.push_back(static_cast<Index>(t - 1) * edges_per_layer + ord);
  }
  return out;
}

FlowIndex enumerate_flows(const Graph& g, int T, std::uint64_t cap) {
  if (T < 1) throw DataError("layer count T must be >= 1");
  const std::uint64_t total = count_flows(g, T);
  if (total > cap) {
    std::ostringstream os;
    os << "flow count " << total << " exceeds cap " << cap;
    throw NumericalError(os.str());
  }

  FlowIndex index;
  index.T = T;
  index.edges_per_layer = g.edge_count();
  index.flows.reserve(static_cast<std::size_t>(total));

  const auto out = sorted_out_neighbors(g);
  std::vector<int> walk(static_cast<std::size_t>(T + 1));
  // iterative DFS over sorted out-neighbors emits lexicographic order
  auto extend = [&](auto&& self, int depth) -> void {
    if (depth == T) {
      index.flows.push_back(MessageFlow{walk});
      return;
    }
    for (int nbr : out[static_cast<std::size_t>(walk[static_cast<std::size_t>(depth)])]) {
      walk[static_cast<std::size_t>(depth + 1)] = nbr;
      self(self, depth + 1);
    }
  };
  for (int start = 0; start < g.n; ++start) {
    walk[0] = start;
    extend(extend, 0);
  }

  index.postings.assign(static_cast<std::size_t>(index.universe_size()), {});
  for (Index k = 0; k < index.flow_count(); ++k) {
    const auto& nodes = index.flows[static_cast<std::size_t>(k)].nodes;
    for (int t = 1; t <= T; ++t) {
      const int ord = g.edge_ordinal(nodes[static_cast<std::size_t>(t - 1)],
                                     nodes[static_cast<std::size_t>(t)]);
      const Index edge = static_cast<Index>(t - 1) * index.edges_per_layer + ord;
      index.postings[static_cast<std::size_t>(edge)].push_back(k);
    }
  }
  return index;
}

const std::vector<Index>& flows_through(const FlowIndex& index, Index layer_edge) {
  if (layer_edge < 0 || layer_edge >= index.universe_size())
    throw DataError("layer edge index outside the canonical universe");
  return index.postings[static_cast<std::size_t>(layer_edge)];
}

const std::vector<Index>& flows_through(const FlowIndex& index, const Graph& g,
                                        const LayerEdgeId& id) {
  const Index canonical = layer_edge_index(g, index.T, id);
  if (canonical < 0) throw DataError("unknown layer edge");
  return flows_through(index, canonical);
}

std::vector<Index> intersect(const std::vector<Index>& a, const std::vector<Index>& b) {
  std::vector<Index> out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

std::uint64_t count_flows(const Graph& g, int T) {
  if (T < 1) throw DataError("layer count T must be >= 1");
  const std::size_t n = static_cast<std::size_t>(g.n);
  const auto out = sorted_out_neighbors(g);
  // walk counts per (start, current) pair; one adjacency step per layer
  std::vector<std::vector<std::uint64_t>> counts(n, std::vector<std::uint64_t>(n, 0));
  for (const auto& [src, dst] : g.edges)
    counts[static_cast<std::size_t>(src)][static_cast<std::size_t>(dst)] = 1;
  for (int step = 1; step < T; ++step) {
    std::vector<std::vector<std::uint64_t>> next(n, std::vector<std::uint64_t>(n, 0));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (counts[i][j] == 0) continue;
        for (int dst : out[j]) {
          next[i][static_cast<std::size_t>(dst)] =
              checked_add(next[i][static_cast<std::size_t>(dst)], counts[i][j]);
        }
      }
    }
    counts = std::move(next);
  }
  std::uint64_t total = 0;
  for (const auto& row : counts)
    for (std::uint64_t c : row) total = checked_add(total, c);
  return total;
}

std::uint64_t flow_count_upper_bound(const Graph& g, int T) {
  std::vector<std::uint64_t> out_deg(static_cast<std::size_t>(g.n), 0);
  for (const auto& [src, dst] : g.edges) ++out_deg[static_cast<std::size_t>(src)];
  std::uint64_t dmax = 0;
  for (std::uint64_t d : out_deg) dmax = std::max(dmax, d);
  std::uint64_t bound = static_cast<std::uint64_t>(g.edge_count());
  for (int t = 1; t < T; ++t) bound = checked_mul(bound, dmax);
  return bound;
}

}  // namespace flowx
