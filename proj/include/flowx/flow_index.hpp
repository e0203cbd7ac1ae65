#pragma once

#include "flowx/graph.hpp"
#include "flowx/types.hpp"

#include <cstdint>
#include <vector>

namespace flowx {

/// A T-step directed walk: the node sequence along which one message
/// travels from the input layer to the output layer. Carrier t is the
/// layer edge (t, nodes[t-1], nodes[t]).
struct MessageFlow {
  std::vector<int> nodes;  // length T + 1
};

/// All flows of a (graph, T) pair in lexicographic node order, plus the
/// incidence lists between layer edges and the flows traversing them.
/// Immutable after construction.
struct FlowIndex {
  int T = 0;
  Index edges_per_layer = 0;
  std::vector<MessageFlow> flows;
  std::vector<std::vector<Index>> postings;  // one sorted list per layer edge

  Index flow_count() const { return static_cast<Index>(flows.size()); }
  Index universe_size() const { return edges_per_layer * T; }

  /// Canonical layer-edge indices of the T carriers of one flow.
  std::vector<Index> carriers(const Graph& g, Index flow_id) const;
};

/// Depth-first enumeration of all T-step walks. Refuses (rather than
/// truncating) when the count exceeds cap.
FlowIndex enumerate_flows(const Graph& g, int T, std::uint64_t cap = 2'000'000);

/// Flows whose t-th carrier is the given layer edge.
const std::vector<Index>& flows_through(const FlowIndex& index, Index layer_edge);
const std::vector<Index>& flows_through(const FlowIndex& index, const Graph& g,
                                        const LayerEdgeId& id);

/// Sorted-set intersection of two flow id sets.
std::vector<Index> intersect(const std::vector<Index>& a, const std::vector<Index>& b);

/// Number of T-step walks, as the sum of entries of the T-th power of the
/// 0/1 adjacency. Overflow-checked.
std::uint64_t count_flows(const Graph& g, int T);

/// |E| * d_+^(T-1) with d_+ the largest out-degree.
std::uint64_t flow_count_upper_bound(const Graph& g, int T);

}  // namespace flowx
