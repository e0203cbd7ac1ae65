#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "flowx/synth.hpp"
#include "flowx/dataset.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <queue>
#include <set>

using namespace flowx;

namespace {

Index undirected_edge_count(const Graph& g) {
  Index count = 0;
  for (const auto& [src, dst] : g.edges)
    if (src < dst) ++count;
  return count;
}

bool connected(const Graph& g) {
  std::vector<char> seen(static_cast<std::size_t>(g.n), 0);
  std::queue<int> frontier;
  frontier.push(0);
  seen[0] = 1;
  while (!frontier.empty()) {
    const int u = frontier.front();
    frontier.pop();
    for (const auto& [src, dst] : g.edges) {
      if (src == u && !seen[static_cast<std::size_t>(dst)]) {
        seen[static_cast<std::size_t>(dst)] = 1;
        frontier.push(dst);
      }
    }
  }
  return std::all_of(seen.begin(), seen.end(), [](char c) { return c != 0; });
}

int max_degree(const Graph& g) {
  std::vector<int> deg(static_cast<std::size_t>(g.n), 0);
  for (const auto& [src, dst] : g.edges)
    if (src < dst) {
      ++deg[static_cast<std::size_t>(src)];
      ++deg[static_cast<std::size_t>(dst)];
    }
  return *std::max_element(deg.begin(), deg.end());
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_CASE("BA with attach_m=1 grows a tree") {
  Graph g = gen_ba_graph(5, 1, 3);
  CHECK(undirected_edge_count(g) == 4);
  CHECK(g.edge_count() == 2 * 4 + 5);  // directed pairs plus self-loops
  CHECK(connected(g));
}

TEST_CASE("BA edge count follows the clique-plus-attachment formula") {
  for (int m = 1; m <= 3; ++m) {
    for (int n = m + 2; n <= m + 6; ++n) {
      Graph g = gen_ba_graph(n, m, 11);
      const Index expected = static_cast<Index>(m) * (n - m) + m * (m - 1) / 2;
      CHECK(undirected_edge_count(g) == expected);
      CHECK(connected(g));
    }
  }
  CHECK_THROWS_AS(gen_ba_graph(3, 3, 0), DataError);
}

TEST_CASE("BA generation is seed-deterministic") {
  Graph a = gen_ba_graph(12, 2, 42);
  Graph b = gen_ba_graph(12, 2, 42);
  Graph c = gen_ba_graph(12, 2, 43);
  CHECK(a.edges == b.edges);
  CHECK(a.edges != c.edges);
}

TEST_CASE("ba-shapes attaches house motifs with role labels and ground truth") {
  Dataset data = gen_ba_shapes(20, 1, 7);
  const Graph& g = data.graphs.front();
  CHECK(g.n == 25);
  CHECK(data.task == Task::NodeClassification);
  CHECK(data.num_classes == 4);
  // one house: 6 internal undirected edges recorded as ground truth
  CHECK(g.ground_truth.size() == 6);
  // base tree/BA edges + 6 motif edges + 1 attachment
  const Index base_und = undirected_edge_count(gen_ba_graph(20, 2, 7));
  CHECK(undirected_edge_count(g) == base_und + 7);
  int base_count = 0, roof = 0, mid = 0, bottom = 0;
  for (int label : g.node_labels) {
    if (label == 0) ++base_count;
    if (label == 1) ++roof;
    if (label == 2) ++mid;
    if (label == 3) ++bottom;
  }
  CHECK(base_count == 20);
  CHECK(roof == 1);
  CHECK(mid == 2);
  CHECK(bottom == 2);
  CHECK(connected(g));
}

TEST_CASE("ba-shapes at paper scale has 700 nodes") {
  Dataset data = gen_ba_shapes(300, 80, 1);
  CHECK(data.graphs.front().n == 700);
  CHECK(data.graphs.front().node_labels.size() == 700);
}

TEST_CASE("ba-lrp is balanced and hub-concentration separates the classes") {
  Dataset data = gen_ba_lrp(500, 20, 5);
  REQUIRE(data.graphs.size() == 500);
  int count0 = 0;
  Real max_deg0 = 0, max_deg1 = 0;
  for (const auto& g : data.graphs) {
    REQUIRE(g.graph_label.has_value());
    CHECK(g.n == 20);
    CHECK(connected(g));
    if (*g.graph_label == 0) {
      ++count0;
      max_deg0 += max_degree(g);
    } else {
      max_deg1 += max_degree(g);
    }
  }
  CHECK(count0 == 250);
  max_deg0 /= 250.0;
  max_deg1 /= 250.0;
  CHECK(max_deg0 > max_deg1);  // preferential growth concentrates degree
}

TEST_CASE("ba-lrp generation is deterministic") {
  Dataset a = gen_ba_lrp(10, 20, 3);
  Dataset b = gen_ba_lrp(10, 20, 3);
  for (std::size_t i = 0; i < a.graphs.size(); ++i) CHECK(a.graphs[i].edges == b.graphs[i].edges);
}

TEST_CASE("ba-infe caps graphs at 39 nodes and records evidence ground truth") {
  Dataset data = gen_ba_infe(200, 9);
  REQUIRE(data.graphs.size() == 200);
  Index max_nodes = 0;
  int label1 = 0;
  for (const auto& g : data.graphs) {
    max_nodes = std::max(max_nodes, g.n);
    REQUIRE(g.graph_label.has_value());
    label1 += *g.graph_label;
    CHECK(connected(g));
    CHECK_FALSE(g.ground_truth.empty());
    for (const auto& [u, v] : g.ground_truth) {
      if (u == v) {
        CHECK(g.edge_ordinal(u, v) >= 0);  // self-loop element exists
      } else {
        CHECK(g.edge_ordinal(u, v) >= 0);
        CHECK(g.edge_ordinal(v, u) >= 0);
      }
    }
  }
  CHECK(max_nodes <= 39);
  CHECK(max_nodes >= 35);
  CHECK(label1 > 50);
  CHECK(200 - label1 > 50);
}

TEST_CASE("splits cover the samples disjointly at 80/10/10") {
  Dataset data = gen_ba_lrp(100, 10, 2);
  CHECK(data.train_idx.size() == 80);
  CHECK(data.val_idx.size() == 10);
  CHECK(data.test_idx.size() == 10);
  std::set<Index> all(data.train_idx.begin(), data.train_idx.end());
  all.insert(data.val_idx.begin(), data.val_idx.end());
  all.insert(data.test_idx.begin(), data.test_idx.end());
  CHECK(all.size() == 100);
}

TEST_CASE("dataset save/load round-trips and regeneration is byte-identical") {
  namespace fs = std::filesystem;
  const fs::path dir_a = fs::temp_directory_path() / "flowx_ds_a";
  const fs::path dir_b = fs::temp_directory_path() / "flowx_ds_b";
  fs::remove_all(dir_a);
  fs::remove_all(dir_b);

  Dataset data = gen_ba_infe(6, 4);
  save_dataset(data, dir_a.string());
  CHECK_THROWS_AS(save_dataset(data, dir_a.string()), DataError);  // non-empty, no force
  save_dataset(data, dir_a.string(), true);

  Dataset again = gen_ba_infe(6, 4);
  save_dataset(again, dir_b.string());
  CHECK(slurp(dir_a / "manifest.json") == slurp(dir_b / "manifest.json"));
  CHECK(slurp(dir_a / "graph_00003.json") == slurp(dir_b / "graph_00003.json"));

  Dataset loaded = load_dataset(dir_a.string());
  CHECK(loaded.name == data.name);
  CHECK(loaded.task == data.task);
  CHECK(loaded.num_classes == data.num_classes);
  CHECK(loaded.train_idx == data.train_idx);
  REQUIRE(loaded.graphs.size() == data.graphs.size());
  for (std::size_t i = 0; i < data.graphs.size(); ++i) {
    CHECK(loaded.graphs[i].edges == data.graphs[i].edges);
    CHECK(loaded.graphs[i].graph_label == data.graphs[i].graph_label);
    CHECK(loaded.graphs[i].ground_truth == data.graphs[i].ground_truth);
  }
  fs::remove_all(dir_a);
  fs::remove_all(dir_b);
}
