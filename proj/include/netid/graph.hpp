#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace netid {

// Directed influence graph over N nodes.  An edge (j, i) means node j feeds
// node i: j is upstream of i and i is downstream of j.  Self-loops are
// permitted and are the common case.  Adjacency is kept in both directions
// because both are queried on every optimizer iteration.
struct NetworkGraph {
  int num_nodes = 0;
  std::vector<int> state_dims;                 // n_i >= 1
  std::vector<int> input_dims;                 // m_i >= 0
  std::vector<std::pair<int, int>> edges;      // (source j, target i), deduplicated, sorted

  // derived by finalize()
  std::vector<std::vector<int>> up;            // up[i]: sorted sources of edges (*, i)
  std::vector<std::vector<int>> down;          // down[j]: sorted targets of edges (j, *)
  std::vector<int> state_offset;               // prefix sums, size num_nodes + 1
  std::vector<int> input_offset;

  int total_state_dim() const { return state_offset.back(); }
  int total_input_dim() const { return input_offset.back(); }

  // Sorts and dedupes edges, rebuilds adjacency and offsets.
  // Throws std::invalid_argument on out-of-range endpoints, state_dims < 1,
  // or negative input_dims.
  void finalize();
};

NetworkGraph make_graph(int num_nodes,
                        std::vector<int> state_dims,
                        std::vector<int> input_dims,
                        std::vector<std::pair<int, int>> edges);

const std::vector<int>& upstream_neighbors(const NetworkGraph& g, int i);
const std::vector<int>& downstream_neighbors(const NetworkGraph& g, int i);

// File format: JSON {"N": ..., "state_dims": [...], "input_dims": [...],
// "edges": [[j, i], ...]} with 1-based node indices.  Indices are converted
// at this boundary only; everything in memory is 0-based.
NetworkGraph load_graph_json(const std::string& path);
void save_graph_json(const NetworkGraph& g, const std::string& path,
                     const std::string& config_hash = "", std::uint64_t seed = 0);

}  // namespace netid
