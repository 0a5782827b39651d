#include "netid/graph.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace netid {

void NetworkGraph::finalize() {
  if (num_nodes <= 0) throw std::invalid_argument("graph: num_nodes must be positive");
  if (static_cast<int>(state_dims.size()) != num_nodes ||
      static_cast<int>(input_dims.size()) != num_nodes)
    throw std::invalid_argument("graph: dimension lists must have one entry per node");
  for (int i = 0; i < num_nodes; ++i) {
    if (state_dims[i] < 1)
      throw std::invalid_argument("graph: state_dims[" + std::to_string(i) + "] must be >= 1");
    if (input_dims[i] < 0)
      throw std::invalid_argument("graph: input_dims[" + std::to_string(i) + "] must be >= 0");
  }
  for (auto [j, i] : edges) {
    if (j < 0 || j >= num_nodes || i < 0 || i >= num_nodes)
      throw std::invalid_argument("graph: edge (" + std::to_string(j) + "," + std::to_string(i) +
                                  ") out of range");
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());

  up.assign(num_nodes, {});
  down.assign(num_nodes, {});
  for (auto [j, i] : edges) {
    up[i].push_back(j);
    down[j].push_back(i);
  }
  for (auto& v : up) std::sort(v.begin(), v.end());
  for (auto& v : down) std::sort(v.begin(), v.end());

  state_offset.assign(num_nodes + 1, 0);
  input_offset.assign(num_nodes + 1, 0);
  for (int i = 0; i < num_nodes; ++i) {
    state_offset[i + 1] = state_offset[i] + state_dims[i];
    input_offset[i + 1] = input_offset[i] + input_dims[i];
  }
}

NetworkGraph make_graph(int num_nodes, std::vector<int> state_dims, std::vector<int> input_dims,
                        std::vector<std::pair<int, int>> edges) {
  NetworkGraph g;
  g.num_nodes = num_nodes;
  g.state_dims = std::move(state_dims);
  g.input_dims = std::move(input_dims);
  g.edges = std::move(edges);
  g.finalize();
  return g;
}

const std::vector<int>& upstream_neighbors(const NetworkGraph& g, int i) {
  if (i < 0 || i >= g.num_nodes) throw std::invalid_argument("upstream_neighbors: bad node index");
  return g.up[i];
}

const std::vector<int>& downstream_neighbors(const NetworkGraph& g, int i) {
  if (i < 0 || i >= g.num_nodes)
    throw std::invalid_argument("downstream_neighbors: bad node index");
  return g.down[i];
}

NetworkGraph load_graph_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open graph file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("graph file " + path + ": " + e.what());
  }
  NetworkGraph g;
  try {
    g.num_nodes = j.at("N").get<int>();
    g.state_dims = j.at("state_dims").get<std::vector<int>>();
    g.input_dims = j.at("input_dims").get<std::vector<int>>();
    for (const auto& e : j.at("edges")) {
      if (!e.is_array() || e.size() != 2)
        throw std::invalid_argument("graph file: edges must be [source, target] pairs");
      // 1-based on disk
      g.edges.emplace_back(e[0].get<int>() - 1, e[1].get<int>() - 1);
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("graph file " + path + ": " + e.what());
  }
  g.finalize();
  return g;
}

void save_graph_json(const NetworkGraph& g, const std::string& path,
                     const std::string& config_hash, std::uint64_t seed) {
  nlohmann::json j;
  if (!config_hash.empty()) {
    j["config_hash"] = config_hash;
    j["seed"] = seed;
  }
  j["N"] = g.num_nodes;
  j["state_dims"] = g.state_dims;
  j["input_dims"] = g.input_dims;
  auto& e = j["edges"] = nlohmann::json::array();
  for (auto [src, dst] : g.edges) e.push_back({src + 1, dst + 1});
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("cannot write graph file: " + path);
  out << j.dump(2) << '\n';
}

}  // namespace netid
