#include "flowx/synth.hpp"

#include "flowx/rng.hpp"

#include <algorithm>
#include <sstream>
#include <vector>

namespace flowx {

namespace {

using EdgeList = std::vector<std::pair<int, int>>;

/// One growth step target: weighted draw over nodes [0, count) with the
/// given per-node weights; falls back to uniform when all weights are 0.
int weighted_pick(const std::vector<Real>& weights, int count, SplitMix64& rng) {
  Real total = 0.0;
  for (int v = 0; v < count; ++v) total += weights[static_cast<std::size_t>(v)];
  if (total <= 0.0) return static_cast<int>(rng.below(static_cast<std::uint64_t>(count)));
  const Real u = rng.uniform() * total;
  Real acc = 0.0;
  for (int v = 0; v < count; ++v) {
    acc += weights[static_cast<std::size_t>(v)];
    if (u < acc) return v;
  }
  return count - 1;
}

EdgeList ba_edges(int n, int attach_m, SplitMix64& rng, bool inverse_preferential) {
  if (attach_m < 1 || n <= attach_m) throw DataError("BA generator needs n > attach_m >= 1");
  EdgeList edges;
  std::vector<int> degree(static_cast<std::size_t>(n), 0);
  auto add = [&](int a, int b) {
    edges.emplace_back(a, b);
    ++degree[static_cast<std::size_t>(a)];
    ++degree[static_cast<std::size_t>(b)];
  };
  for (int a = 0; a < attach_m; ++a)
    for (int b = a + 1; b < attach_m; ++b) add(a, b);

  std::vector<Real> weights(static_cast<std::size_t>(n), 0.0);
  for (int v = attach_m; v < n; ++v) {
    std::vector<int> targets;
    while (static_cast<int>(targets.size()) < attach_m) {
      for (int u = 0; u < v; ++u) {
        const int d = degree[static_cast<std::size_t>(u)];
        weights[static_cast<std::size_t>(u)] =
            inverse_preferential ? 1.0 / static_cast<Real>(std::max(d, 1))
                                 : static_cast<Real>(d);
      }
      for (int t : targets) weights[static_cast<std::size_t>(t)] = 0.0;
      const int pick = weighted_pick(weights, v, rng);
      if (std::find(targets.begin(), targets.end(), pick) == targets.end())
        targets.push_back(pick);
    }
    for (int t : targets) add(v, t);
  }
  return edges;
}

Graph undirected_to_graph(int n, const EdgeList& und) {
  EdgeList directed;
  directed.reserve(und.size() * 2);
  for (const auto& [a, b] : und) {
    directed.emplace_back(a, b);
    directed.emplace_back(b, a);
  }
  return build_graph(n, directed, Matrix::Ones(1, n));
}

struct MotifShape {
  int size;
  EdgeList edges;  // local node ids
};

const MotifShape kHouse{5, {{0, 1}, {0, 2}, {1, 2}, {1, 3}, {2, 4}, {3, 4}}};
const MotifShape kCycle5{5, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 0}}};
const MotifShape kStar4{4, {{0, 1}, {0, 2}, {0, 3}}};
const MotifShape kTriangleTail{4, {{0, 1}, {1, 2}, {2, 0}, {2, 3}}};

const MotifShape& class_motif(int cls, int type) {
  if (cls == 0) return type == 0 ? kHouse : kCycle5;
  return type == 0 ? kStar4 : kTriangleTail;
}

std::pair<int, int> normalized(int a, int b) { return a <= b ? std::make_pair(a, b) : std::make_pair(b, a); }

}  // namespace

Graph gen_ba_graph(int n, int attach_m, std::uint64_t seed) {
  SplitMix64 rng = SplitMix64::substream(seed, 0xBA);
  return undirected_to_graph(n, ba_edges(n, attach_m, rng, false));
}

Dataset gen_ba_shapes(int num_base_nodes, int num_motifs, std::uint64_t seed) {
  if (num_base_nodes < 3 || num_motifs < 1)
    throw DataError("ba-shapes needs at least 3 base nodes and 1 motif");
  SplitMix64 rng = SplitMix64::substream(seed, 0x5A9E5);
  const int attach_m = std::min(2, num_base_nodes - 1);
  EdgeList und = ba_edges(num_base_nodes, attach_m, rng, false);
  const int n = num_base_nodes + 5 * num_motifs;
  std::vector<int> labels(static_cast<std::size_t>(n), 0);
  std::vector<std::pair<int, int>> ground_truth;
  for (int m = 0; m < num_motifs; ++m) {
    const int base_id = num_base_nodes + 5 * m;  // [roof, mid, mid, bottom, bottom]
    labels[static_cast<std::size_t>(base_id)] = 1;
    labels[static_cast<std::size_t>(base_id + 1)] = 2;
    labels[static_cast<std::size_t>(base_id + 2)] = 2;
    labels[static_cast<std::size_t>(base_id + 3)] = 3;
    labels[static_cast<std::size_t>(base_id + 4)] = 3;
    for (const auto& [a, b] : kHouse.edges) {
      und.emplace_back(base_id + a, base_id + b);
      ground_truth.push_back(normalized(base_id + a, base_id + b));
    }
    const int anchor = static_cast<int>(rng.below(static_cast<std::uint64_t>(num_base_nodes)));
    und.emplace_back(base_id + 3, anchor);
  }
  Graph g = undirected_to_graph(n, und);
  g.node_labels = std::move(labels);
  g.ground_truth = std::move(ground_truth);

  Dataset data;
  data.name = "ba-shapes";
  data.task = Task::NodeClassification;
  data.num_classes = 4;
  data.seed = seed;
  data.params = {{"num_base_nodes", num_base_nodes}, {"num_motifs", num_motifs}};
  data.graphs.push_back(std::move(g));
  assign_splits(data, seed);
  return data;
}

Dataset gen_ba_lrp(int num_graphs, int nodes_per_graph, std::uint64_t seed) {
  if (num_graphs < 2 || nodes_per_graph < 3)
    throw DataError("ba-lrp needs at least 2 graphs of 3 nodes");
  Dataset data;
  data.name = "ba-lrp";
  data.task = Task::GraphClassification;
  data.num_classes = 2;
  data.seed = seed;
  data.params = {{"num_graphs", num_graphs}, {"nodes_per_graph", nodes_per_graph}};
  data.graphs.reserve(static_cast<std::size_t>(num_graphs));
  for (int i = 0; i < num_graphs; ++i) {
    const int cls = i % 2;
    SplitMix64 rng = SplitMix64::substream(seed, 0x1A9 + static_cast<std::uint64_t>(i));
    Graph g = undirected_to_graph(nodes_per_graph,
                                  ba_edges(nodes_per_graph, 1, rng, cls == 1));
    g.graph_label = cls;
    data.graphs.push_back(std::move(g));
  }
  assign_splits(data, seed);
  return data;
}

Dataset gen_ba_infe(int num_graphs, std::uint64_t seed) {
  if (num_graphs < 2) throw DataError("ba-infe needs at least 2 graphs");
  constexpr int kMaxNodes = 39;
  Dataset data;
  data.name = "ba-infe";
  data.task = Task::GraphClassification;
  data.num_classes = 2;
  data.seed = seed;
  data.params = {{"num_graphs", num_graphs}, {"max_nodes", kMaxNodes}};
  data.graphs.reserve(static_cast<std::size_t>(num_graphs));

  for (int i = 0; i < num_graphs; ++i) {
    SplitMix64 rng = SplitMix64::substream(seed, 0x1FE + static_cast<std::uint64_t>(i));

    struct MotifPlan {
      int cls;
      int type;
      bool evidence;  // extra motif of the label class
    };
    int label = 0, base_n = 0;
    std::vector<MotifPlan> plan;
    for (;;) {  // redraw until the node cap holds
      plan.clear();
      label = static_cast<int>(rng.below(2));
      const int core = 1 + static_cast<int>(rng.below(3));
      const int extra = 1 + static_cast<int>(rng.below(3));
      base_n = 5 + static_cast<int>(rng.below(6));
      for (int cls = 0; cls < 2; ++cls)
        for (int k = 0; k < core; ++k)
          plan.push_back({cls, static_cast<int>(rng.below(2)), false});
      for (int k = 0; k < extra; ++k)
        plan.push_back({label, static_cast<int>(rng.below(2)), true});
      int total = base_n;
      for (const auto& p : plan) total += class_motif(p.cls, p.type).size;
      if (total <= kMaxNodes) break;
    }

    SplitMix64 base_rng = SplitMix64::substream(seed, 0xBAE + static_cast<std::uint64_t>(i));
    EdgeList und = ba_edges(base_n, 1, base_rng, false);
    std::vector<std::pair<int, int>> ground_truth;
    int next_id = base_n;
    for (const auto& p : plan) {
      const MotifShape& shape = class_motif(p.cls, p.type);
      for (const auto& [a, b] : shape.edges) {
        und.emplace_back(next_id + a, next_id + b);
        if (p.evidence) ground_truth.push_back(normalized(next_id + a, next_id + b));
      }
      if (p.evidence) {
        for (int v = 0; v < shape.size; ++v) ground_truth.emplace_back(next_id + v, next_id + v);
      }
      const int anchor = static_cast<int>(rng.below(static_cast<std::uint64_t>(base_n)));
      und.emplace_back(next_id, anchor);
      next_id += shape.size;
    }
    Graph g = undirected_to_graph(next_id, und);
    g.graph_label = label;
    g.ground_truth = std::move(ground_truth);
    data.graphs.push_back(std::move(g));
  }
  assign_splits(data, seed);
  return data;
}

}  // namespace flowx
