#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "flowx/flow_index.hpp"
#include "test_util.hpp"

#include <algorithm>

using namespace flowx;

namespace {

std::vector<std::vector<int>> flow_nodes(const FlowIndex& index,
                                         const std::vector<Index>& ids) {
  std::vector<std::vector<int>> out;
  for (Index k : ids) out.push_back(index.flows[static_cast<std::size_t>(k)].nodes);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST_CASE("complete 2-node graph with self-loops has 8 two-step flows") {
  Graph g = testutil::graph_from_directed(2, {{0, 1}, {1, 0}});
  FlowIndex index = enumerate_flows(g, 2);
  CHECK(index.flow_count() == 8);  // brute force: every 2-step walk exists
  CHECK(testutil::brute_force_walks(g, 2).size() == 8);
}

TEST_CASE("single self-loop node has exactly one T=3 flow") {
  Graph g = testutil::graph_from_directed(1, {});
  FlowIndex index = enumerate_flows(g, 3);
  REQUIRE(index.flow_count() == 1);
  CHECK(index.flows[0].nodes == std::vector<int>{0, 0, 0, 0});
}

TEST_CASE("directed path without self-loops has one T=2 flow") {
  Graph g = testutil::graph_from_directed(3, {{0, 1}, {1, 2}}, false);
  FlowIndex index = enumerate_flows(g, 2);
  REQUIRE(index.flow_count() == 1);
  CHECK(index.flows[0].nodes == std::vector<int>{0, 1, 2});
}

TEST_CASE("enumeration is lexicographic and deterministic") {
  Graph g = testutil::random_graph(6, 3);
  FlowIndex a = enumerate_flows(g, 3);
  FlowIndex b = enumerate_flows(g, 3);
  REQUIRE(a.flow_count() == b.flow_count());
  for (Index k = 0; k < a.flow_count(); ++k)
    CHECK(a.flows[static_cast<std::size_t>(k)].nodes == b.flows[static_cast<std::size_t>(k)].nodes);
  CHECK(std::is_sorted(a.flows.begin(), a.flows.end(),
                       [](const MessageFlow& x, const MessageFlow& y) { return x.nodes < y.nodes; }));
}

TEST_CASE("flows_through matches the pattern-scan oracle") {
  Graph g = testutil::graph_from_directed(2, {{0, 1}, {1, 0}}, true);
  // drop self-loops for the first spec example: use complete graph incl loops
  FlowIndex index = enumerate_flows(g, 2);
  const Index canonical = layer_edge_index(g, 2, LayerEdgeId{1, 0, 1});
  REQUIRE(canonical >= 0);
  const auto got = flow_nodes(index, flows_through(index, canonical));
  const auto expected = testutil::walks_matching(g, 2, 1, 0, 1);
  CHECK(got == expected);
  REQUIRE(got.size() == 2);  // (0,1,0) and (0,1,1)
  CHECK(got[0] == std::vector<int>{0, 1, 0});
  CHECK(got[1] == std::vector<int>{0, 1, 1});
}

TEST_CASE("flows_through on the path graph's last carrier") {
  Graph g = testutil::graph_from_directed(3, {{0, 1}, {1, 2}}, false);
  FlowIndex index = enumerate_flows(g, 2);
  const auto got = flow_nodes(index, flows_through(index, g, LayerEdgeId{2, 1, 2}));
  REQUIRE(got.size() == 1);
  CHECK(got[0] == std::vector<int>{0, 1, 2});
  // carriers that no complete walk can use stay empty
  CHECK(flows_through(index, g, LayerEdgeId{2, 0, 1}).empty());  // nothing feeds node 0
  CHECK(flows_through(index, g, LayerEdgeId{1, 1, 2}).empty());  // node 2 has no out-edge
}

TEST_CASE("flows_through rejects unknown layer edges") {
  Graph g = testutil::graph_from_directed(3, {{0, 1}, {1, 2}}, false);
  FlowIndex index = enumerate_flows(g, 2);
  CHECK_THROWS_AS(flows_through(index, g, LayerEdgeId{1, 2, 0}), DataError);
  CHECK_THROWS_AS(flows_through(index, 99), DataError);
}

TEST_CASE("wildcard intersection identity holds on random graphs") {
  for (std::uint64_t seed = 0; seed < 15; ++seed) {
    const int n = 3 + static_cast<int>(seed % 6);
    Graph g = testutil::random_graph(n, seed);
    const int T = 2 + static_cast<int>(seed % 2);
    FlowIndex index = enumerate_flows(g, T);
    for (Index first = 0; first < g.edge_count(); ++first) {
      for (Index last = 0; last < g.edge_count(); ++last) {
        const Index e1 = layer_edge_index(
            g, T, LayerEdgeId{1, g.edges[static_cast<std::size_t>(first)].first,
                              g.edges[static_cast<std::size_t>(first)].second});
        const Index eT = layer_edge_index(
            g, T, LayerEdgeId{T, g.edges[static_cast<std::size_t>(last)].first,
                              g.edges[static_cast<std::size_t>(last)].second});
        const auto both = intersect(flows_through(index, e1), flows_through(index, eT));
        // oracle: scan all walks for the joint pattern
        std::vector<std::vector<int>> expected;
        for (const auto& walk : testutil::brute_force_walks(g, T)) {
          if (walk[0] == g.edges[static_cast<std::size_t>(first)].first &&
              walk[1] == g.edges[static_cast<std::size_t>(first)].second &&
              walk[static_cast<std::size_t>(T - 1)] ==
                  g.edges[static_cast<std::size_t>(last)].first &&
              walk[static_cast<std::size_t>(T)] == g.edges[static_cast<std::size_t>(last)].second)
            expected.push_back(walk);
        }
        CHECK(flow_nodes(index, both) == expected);
      }
    }
  }
}

TEST_CASE("intersection basics") {
  CHECK(intersect({1, 2, 5}, {1, 2, 5}) == std::vector<Index>{1, 2, 5});
  CHECK(intersect({1, 3}, {2, 4}).empty());
}

TEST_CASE("count_flows equals enumeration size and the matrix-power oracle") {
  Graph g2 = testutil::graph_from_directed(2, {{0, 1}, {1, 0}});
  CHECK(count_flows(g2, 3) == 16);  // sum of entries of the all-ones 2x2 cubed
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const int n = 2 + static_cast<int>(seed % 9);
    Graph g = testutil::random_graph(n, seed, seed % 3 != 0);
    for (int T = 1; T <= 3; ++T) {
      const std::uint64_t counted = count_flows(g, T);
      CHECK(counted == enumerate_flows(g, T).flow_count());
      CHECK(counted == testutil::brute_force_walks(g, T).size());
      CHECK(counted <= flow_count_upper_bound(g, T));
    }
    CHECK(count_flows(g, 1) == static_cast<std::uint64_t>(g.edge_count()));
  }
}

TEST_CASE("every flow appears in exactly T postings lists") {
  Graph g = testutil::random_graph(6, 11);
  for (int T = 1; T <= 3; ++T) {
    FlowIndex index = enumerate_flows(g, T);
    std::size_t total = 0;
    for (const auto& lst : index.postings) total += lst.size();
    CHECK(total == static_cast<std::size_t>(T) * static_cast<std::size_t>(index.flow_count()));
    for (Index k = 0; k < std::min<Index>(index.flow_count(), 50); ++k) {
      const auto carriers = index.carriers(g, k);
      CHECK(carriers.size() == static_cast<std::size_t>(T));
      for (Index c : carriers) {
        const auto& lst = flows_through(index, c);
        CHECK(std::binary_search(lst.begin(), lst.end(), k));
      }
    }
  }
}

TEST_CASE("enumeration refuses to exceed the cap") {
  Graph g = testutil::random_graph(8, 5);
  CHECK_THROWS_AS(enumerate_flows(g, 3, 10), NumericalError);
}
