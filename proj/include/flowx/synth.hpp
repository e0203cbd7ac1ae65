#pragma once

#include "flowx/dataset.hpp"
#include "flowx/graph.hpp"

#include <cstdint>

namespace flowx {

/// Barabasi-Albert preferential-attachment graph: a clique on the first
/// attach_m nodes, then one node at a time with attach_m degree-weighted
/// distinct edges. Encoded as symmetric directed pairs with self-loops.
Graph gen_ba_graph(int n, int attach_m, std::uint64_t seed);

/// Node-classification dataset: one BA base graph with house motifs
/// attached by single edges. Labels: 0 base, 1 roof, 2 middle, 3 bottom.
/// Ground truth records the motif-internal edges.
Dataset gen_ba_shapes(int num_base_nodes, int num_motifs, std::uint64_t seed);

/// Graph-classification dataset of growing trees: class 0 attaches
/// preferentially by degree (hub-concentrated), class 1 with weight
/// inversely proportional to degree (even degrees). Balanced classes.
Dataset gen_ba_lrp(int num_graphs, int nodes_per_graph, std::uint64_t seed);

/// Graph-classification dataset with motif-count evidence: a BA base, a
/// balanced core of class-A and class-B motifs, plus 1-3 extra motifs of
/// the label class. Class A motifs: house, 5-cycle; class B: 4-star,
/// triangle-with-tail. Graphs are capped at 39 nodes. Ground truth
/// records the elements of the extra (label-evidence) motifs: their
/// undirected internal edges and node self-loops.
Dataset gen_ba_infe(int num_graphs, std::uint64_t seed);

}  // namespace flowx
