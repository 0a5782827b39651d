#include <doctest.h>

#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "netid/graph.hpp"
#include "test_support.hpp"

using namespace netid;
using netid::testing::TempDir;
using netid::testing::chain_graph;

TEST_SUITE("graph") {

TEST_CASE("chain adjacency") {
  const NetworkGraph g = chain_graph(3);
  CHECK(upstream_neighbors(g, 0) == std::vector<int>{0});
  CHECK(upstream_neighbors(g, 1) == std::vector<int>{0, 1});
  CHECK(upstream_neighbors(g, 2) == std::vector<int>{1, 2});
  CHECK(downstream_neighbors(g, 0) == std::vector<int>{0, 1});
  CHECK(downstream_neighbors(g, 1) == std::vector<int>{1, 2});
  CHECK(downstream_neighbors(g, 2) == std::vector<int>{2});
  CHECK(g.total_state_dim() == 3);
  CHECK(g.total_input_dim() == 3);
}

TEST_CASE("offsets and edge dedup") {
  const auto g = make_graph(3, {2, 1, 3}, {1, 0, 2}, {{0, 0}, {0, 1}, {0, 1}, {1, 2}});
  CHECK(g.edges.size() == 3);
  CHECK(g.state_offset == std::vector<int>{0, 2, 3, 6});
  CHECK(g.input_offset == std::vector<int>{0, 1, 1, 3});
  CHECK(g.total_state_dim() == 6);
  CHECK(g.total_input_dim() == 3);
}

TEST_CASE("validation rejects bad shapes") {
  CHECK_THROWS_AS(make_graph(2, {1, 0}, {0, 0}, {}), std::invalid_argument);
  CHECK_THROWS_AS(make_graph(2, {1, 1}, {0, -1}, {}), std::invalid_argument);
  CHECK_THROWS_AS(make_graph(2, {1, 1}, {0, 0}, {{0, 2}}), std::invalid_argument);
  CHECK_THROWS_AS(make_graph(2, {1, 1}, {0, 0}, {{-1, 0}}), std::invalid_argument);
  CHECK_THROWS_AS(make_graph(2, {1}, {0, 0}, {}), std::invalid_argument);
}

TEST_CASE("json round trip, one-based on disk") {
  TempDir dir;
  const auto g = make_graph(2, {1, 2}, {1, 0}, {{0, 0}, {0, 1}, {1, 1}});
  save_graph_json(g, dir.file("g.json"), "cafe01", 7);

  std::ifstream in(dir.file("g.json"));
  nlohmann::json j;
  in >> j;
  CHECK(j.at("config_hash") == "cafe01");
  CHECK(j.at("seed") == 7);
  CHECK(j.at("edges")[0] == nlohmann::json({1, 1}));

  const auto r = load_graph_json(dir.file("g.json"));
  CHECK(r.num_nodes == g.num_nodes);
  CHECK(r.state_dims == g.state_dims);
  CHECK(r.input_dims == g.input_dims);
  CHECK(r.edges == g.edges);
  CHECK(r.up == g.up);
  CHECK(r.down == g.down);
}

TEST_CASE("identical saves are byte identical") {
  TempDir dir;
  const auto g = make_graph(3, {1, 1, 1}, {1, 1, 1}, {{0, 1}, {1, 2}, {2, 0}});
  save_graph_json(g, dir.file("a.json"), "00ff", 3);
  save_graph_json(g, dir.file("b.json"), "00ff", 3);
  std::ifstream a(dir.file("a.json")), b(dir.file("b.json"));
  std::stringstream sa, sb;
  sa << a.rdbuf();
  sb << b.rdbuf();
  CHECK(sa.str() == sb.str());
  CHECK(!sa.str().empty());
}

TEST_CASE("missing file throws") {
  CHECK_THROWS_AS(load_graph_json("/nonexistent/graph.json"), std::invalid_argument);
}

}  // TEST_SUITE
