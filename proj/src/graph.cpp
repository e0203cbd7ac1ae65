#include "flowx/graph.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace flowx {

namespace {

std::int64_t pair_key(int src, int dst) {
  return (static_cast<std::int64_t>(src) << 32) | static_cast<std::uint32_t>(dst);
}

}  // namespace

int Graph::edge_ordinal(int src, int dst) const {
  auto it = edge_lookup.find(pair_key(src, dst));
  return it == edge_lookup.end() ? -1 : it->second;
}

Graph build_graph(Index num_nodes, const std::vector<std::pair<int, int>>& edges,
                  const Matrix& features, const GraphOptions& options) {
  if (num_nodes <= 0) throw DataError("graph must have at least one node");
  if (features.size() > 0 && features.cols() != num_nodes) {
    std::ostringstream os;
    os << "feature matrix has " << features.cols() << " columns, expected " << num_nodes;
    throw DataError(os.str());
  }
  if (features.size() > 0 && features.rows() < 1) throw DataError("feature dimension must be >= 1");

  Graph g;
  g.n = num_nodes;
  g.features = features.size() > 0 ? features : Matrix::Ones(1, num_nodes);

  auto insert_edge = [&](int src, int dst) {
    if (src < 0 || src >= num_nodes || dst < 0 || dst >= num_nodes) {
      std::ostringstream os;
      os << "edge (" << src << "," << dst << ") out of range for " << num_nodes << " nodes";
      throw DataError(os.str());
    }
    const auto key = pair_key(src, dst);
    if (g.edge_lookup.count(key)) {
      std::ostringstream os;
      os << "duplicate edge (" << src << "," << dst << ")";
      throw DataError(os.str());
    }
    g.edge_lookup.emplace(key, static_cast<int>(g.edges.size()));
    g.edges.emplace_back(src, dst);
  };

  for (const auto& [src, dst] : edges) insert_edge(src, dst);

  if (options.add_self_loops) {
    for (int v = 0; v < num_nodes; ++v) {
      if (g.edge_ordinal(v, v) < 0) insert_edge(v, v);
    }
    g.has_self_loops = true;
  } else {
    g.has_self_loops = true;
    for (int v = 0; v < num_nodes; ++v) {
      if (g.edge_ordinal(v, v) < 0) {
        g.has_self_loops = false;
        break;
      }
    }
  }
  return g;
}

Matrix gcn_connectivity(const Graph& g) {
  Matrix a = Matrix::Zero(g.n, g.n);
  for (const auto& [src, dst] : g.edges) a(src, dst) = 1.0;
  Vector deg = a.rowwise().sum();
  for (Index i = 0; i < g.n; ++i) {
    if (deg(i) <= 0.0) {
      std::ostringstream os;
      os << "node " << i << " has zero out-degree; gcn connectivity undefined";
      throw DataError(os.str());
    }
  }
  const Vector dinv = deg.array().rsqrt();
  for (const auto& [src, dst] : g.edges) a(src, dst) = dinv(src) * dinv(dst);
  return a;
}

Matrix binary_adjacency(const Graph& g, Real self_loop_weight) {
  Matrix a = Matrix::Zero(g.n, g.n);
  for (const auto& [src, dst] : g.edges) a(src, dst) = src == dst ? self_loop_weight : 1.0;
  return a;
}

LayerEdgeSet enumerate_layer_edges(const Graph& g, int T) {
  if (T < 1) throw DataError("layer count T must be >= 1");
  LayerEdgeSet s;
  s.edges_per_layer = g.edge_count();
  s.universe_size = s.edges_per_layer * T;
  s.ids.resize(static_cast<std::size_t>(s.universe_size));
  for (Index i = 0; i < s.universe_size; ++i) s.ids[static_cast<std::size_t>(i)] = i;
  s.member.assign(static_cast<std::size_t>(s.universe_size), true);
  return s;
}

LayerEdgeSet empty_layer_edge_set(const Graph& g, int T) {
  if (T < 1) throw DataError("layer count T must be >= 1");
  LayerEdgeSet s;
  s.edges_per_layer = g.edge_count();
  s.universe_size = s.edges_per_layer * T;
  s.member.assign(static_cast<std::size_t>(s.universe_size), false);
  return s;
}

void layer_edge_set_insert(LayerEdgeSet& s, Index canonical) {
  if (canonical < 0 || canonical >= s.universe_size) throw DataError("layer edge index out of range");
  if (s.member[static_cast<std::size_t>(canonical)]) return;
  s.member[static_cast<std::size_t>(canonical)] = true;
  auto it = std::lower_bound(s.ids.begin(), s.ids.end(), canonical);
  s.ids.insert(it, canonical);
}

LayerEdgeId layer_edge_at(const Graph& g, int T, Index canonical) {
  const Index e = g.edge_count();
  if (canonical < 0 || canonical >= e * T) throw DataError("layer edge index out of range");
  const int layer = static_cast<int>(canonical / e) + 1;
  const auto& [src, dst] = g.edges[static_cast<std::size_t>(canonical % e)];
  return LayerEdgeId{layer, src, dst};
}

Index layer_edge_index(const Graph& g, int T, const LayerEdgeId& id) {
  if (id.layer < 1 || id.layer > T) return -1;
  const int ord = g.edge_ordinal(id.src, id.dst);
  if (ord < 0) return -1;
  return static_cast<Index>(id.layer - 1) * g.edge_count() + ord;
}

EdgeMaskVector full_mask(const Graph& g, int T) {
  return Vector::Ones(g.edge_count() * T);
}

EdgeMaskVector mask_from_kept(const LayerEdgeSet& kept) {
  Vector m = Vector::Zero(kept.universe_size);
  for (Index id : kept.ids) m(id) = 1.0;
  return m;
}

nlohmann::json graph_to_json(const Graph& g) {
  nlohmann::json j;
  j["num_nodes"] = g.n;
  auto edges = nlohmann::json::array();
  for (const auto& [src, dst] : g.edges) edges.push_back({src, dst});
  j["edges"] = std::move(edges);
  auto feats = nlohmann::json::array();
  for (Index r = 0; r < g.features.rows(); ++r) {
    auto row = nlohmann::json::array();
    for (Index c = 0; c < g.features.cols(); ++c) row.push_back(g.features(r, c));
    feats.push_back(std::move(row));
  }
  j["features"] = std::move(feats);
  if (g.graph_label) {
    j["label"] = *g.graph_label;
  } else if (!g.node_labels.empty()) {
    j["label"] = g.node_labels;
  } else {
    j["label"] = nullptr;
  }
  if (!g.ground_truth.empty()) {
    auto gt = nlohmann::json::array();
    for (const auto& [u, v] : g.ground_truth) gt.push_back({u, v});
    j["ground_truth"] = std::move(gt);
  }
  return j;
}

Graph graph_from_json(const nlohmann::json& j) {
  const Index n = j.at("num_nodes").get<Index>();
  std::vector<std::pair<int, int>> edges;
  for (const auto& e : j.at("edges")) edges.emplace_back(e.at(0).get<int>(), e.at(1).get<int>());
  const auto& feats = j.at("features");
  const Index d = static_cast<Index>(feats.size());
  if (d < 1) throw DataError("graph json has empty feature matrix");
  Matrix x(d, n);
  for (Index r = 0; r < d; ++r) {
    const auto& row = feats.at(static_cast<std::size_t>(r));
    if (static_cast<Index>(row.size()) != n) throw DataError("feature row length mismatch");
    for (Index c = 0; c < n; ++c) x(r, c) = row.at(static_cast<std::size_t>(c)).get<Real>();
  }
  GraphOptions opts;
  opts.add_self_loops = false;  // stored explicitly
  Graph g = build_graph(n, edges, x, opts);
  if (j.contains("label") && !j.at("label").is_null()) {
    const auto& label = j.at("label");
    if (label.is_array()) {
      g.node_labels = label.get<std::vector<int>>();
    } else {
      g.graph_label = label.get<int>();
    }
  }
  if (j.contains("ground_truth")) {
    for (const auto& e : j.at("ground_truth"))
      g.ground_truth.emplace_back(e.at(0).get<int>(), e.at(1).get<int>());
  }
  return g;
}

}  // namespace flowx
