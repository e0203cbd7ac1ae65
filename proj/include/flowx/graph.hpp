#pragma once

#include "flowx/types.hpp"

#include <json.hpp>

#include <optional>
#include <unordered_map>
#include <utility>
#include <vector>

namespace flowx {

/// Directed graph with dense node features (columns are nodes) and an
/// explicit, canonically ordered edge list. Self-loops, when requested,
/// are materialized as ordinary edges appended after the declared ones;
/// every mask and permutation downstream indexes against this order.
struct Graph {
  Index n = 0;
  std::vector<std::pair<int, int>> edges;  // canonical order
  Matrix features;                         // d x n
  std::vector<int> node_labels;            // empty when absent
  std::optional<int> graph_label;
  bool has_self_loops = false;

  /// Optional explanation ground truth: undirected edges as (min,max)
  /// pairs, self-loops as (v,v).
  std::vector<std::pair<int, int>> ground_truth;

  Index edge_count() const { return static_cast<Index>(edges.size()); }
  Index feature_dim() const { return features.rows(); }

  /// Ordinal of a directed edge in the canonical order, or -1.
  int edge_ordinal(int src, int dst) const;

  std::unordered_map<std::int64_t, int> edge_lookup;  // (src<<32|dst) -> ordinal
};

struct GraphOptions {
  bool add_self_loops = true;
};

/// Validates and builds a Graph. Appends one self-loop per node when
/// requested. Rejects duplicate edges, out-of-range endpoints, and
/// feature matrices whose column count differs from num_nodes.
Graph build_graph(Index num_nodes, const std::vector<std::pair<int, int>>& edges,
                  const Matrix& features, const GraphOptions& options = {});

/// Symmetrically normalized connectivity D^{-1/2} A D^{-1/2} over the
/// materialized edge set (self-loops included as edges), with D the
/// diagonal of row sums. Entry (i,j) is nonzero exactly where edge (i,j)
/// exists.
Matrix gcn_connectivity(const Graph& g);

/// 0/1 adjacency over the materialized edge set; self-loop entries are
/// scaled by (1 + eps) so the GIN self-weight stays attached to a
/// removable layer edge.
Matrix binary_adjacency(const Graph& g, Real self_loop_weight = 1.0);

/// One graph edge instantiated at one message-passing layer; the atomic
/// removable unit. layer is 1-based.
struct LayerEdgeId {
  int layer;
  int src;
  int dst;

  bool operator==(const LayerEdgeId&) const = default;
};

/// Ordered subset of the layer-edge universe for a (graph, T) pair, with
/// a membership bitset. Canonical index = (layer-1)*|E| + edge ordinal.
struct LayerEdgeSet {
  Index universe_size = 0;     // |E| * T
  Index edges_per_layer = 0;   // |E|
  std::vector<Index> ids;      // members, ascending canonical index
  std::vector<bool> member;    // size universe_size

  Index size() const { return static_cast<Index>(ids.size()); }
  bool contains(Index canonical) const {
    return canonical >= 0 && canonical < universe_size && member[static_cast<std::size_t>(canonical)];
  }
};

/// The full layer-edge universe, layer-major then edge insertion order.
LayerEdgeSet enumerate_layer_edges(const Graph& g, int T);

/// Empty set over the same universe.
LayerEdgeSet empty_layer_edge_set(const Graph& g, int T);

void layer_edge_set_insert(LayerEdgeSet& s, Index canonical);

LayerEdgeId layer_edge_at(const Graph& g, int T, Index canonical);
Index layer_edge_index(const Graph& g, int T, const LayerEdgeId& id);

/// Soft/binary mask over the canonical layer-edge order.
using EdgeMaskVector = Vector;

EdgeMaskVector full_mask(const Graph& g, int T);
EdgeMaskVector mask_from_kept(const LayerEdgeSet& kept);

nlohmann::json graph_to_json(const Graph& g);
Graph graph_from_json(const nlohmann::json& j);

}  // namespace flowx
