#include "netid/io.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "netid/rng.hpp"

namespace netid {

namespace {

void write_meta_comment(std::FILE* f, const FileMeta& meta) {
  if (!meta.config_hash.empty() || meta.seed != 0)
    std::fprintf(f, "# config_hash=%s seed=%" PRIu64 "\n",
                 meta.config_hash.empty() ? "-" : meta.config_hash.c_str(), meta.seed);
}

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_out(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "w"));
  if (!f) throw std::invalid_argument("cannot write file: " + path);
  return f;
}

}  // namespace

void save_dataset_csv(const Dataset& ds, const std::string& path, const FileMeta& meta) {
  auto f = open_out(path);
  write_meta_comment(f.get(), meta);
  std::fprintf(f.get(), "t");
  for (int c = 0; c < ds.x.cols(); ++c) std::fprintf(f.get(), ",x%d", c + 1);
  for (int c = 0; c < ds.u.cols(); ++c) std::fprintf(f.get(), ",u%d", c + 1);
  std::fprintf(f.get(), "\n");
  for (int t = 0; t < ds.length(); ++t) {
    std::fprintf(f.get(), "%d", t + 1);
    for (int c = 0; c < ds.x.cols(); ++c) std::fprintf(f.get(), ",%.17g", ds.x(t, c));
    for (int c = 0; c < ds.u.cols(); ++c) std::fprintf(f.get(), ",%.17g", ds.u(t, c));
    std::fprintf(f.get(), "\n");
  }
}

Dataset load_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open dataset: " + path);
  std::string line;
  // skip comments, find header
  while (std::getline(in, line) && (line.empty() || line[0] == '#')) {
  }
  int n = 0, m = 0;
  {
    std::stringstream ss(line);
    std::string col;
    bool first = true;
    while (std::getline(ss, col, ',')) {
      if (first) {
        if (col != "t") throw std::invalid_argument("dataset " + path + ": header must start with t");
        first = false;
      } else if (col.size() > 1 && col[0] == 'x') {
        ++n;
      } else if (col.size() > 1 && col[0] == 'u') {
        ++m;
      } else {
        throw std::invalid_argument("dataset " + path + ": unexpected column '" + col + "'");
      }
    }
  }
  if (n == 0) throw std::invalid_argument("dataset " + path + ": no state columns");
  std::vector<double> vals;
  int rows = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::stringstream ss(line);
    std::string cell;
    int col = 0;
    while (std::getline(ss, cell, ',')) {
      if (col > 0) vals.push_back(std::stod(cell));
      ++col;
    }
    if (col != 1 + n + m)
      throw std::invalid_argument("dataset " + path + ": row " + std::to_string(rows + 1) +
                                  " has " + std::to_string(col) + " columns, expected " +
                                  std::to_string(1 + n + m));
    ++rows;
  }
  Dataset ds;
  ds.x.resize(rows, n);
  ds.u.resize(rows, m);
  for (int t = 0; t < rows; ++t) {
    for (int c = 0; c < n; ++c) ds.x(t, c) = vals[static_cast<std::size_t>(t) * (n + m) + c];
    for (int c = 0; c < m; ++c) ds.u(t, c) = vals[static_cast<std::size_t>(t) * (n + m) + n + c];
  }
  return ds;
}

void save_trajectory_csv(const Mat& x, const std::string& path, const FileMeta& meta) {
  auto f = open_out(path);
  write_meta_comment(f.get(), meta);
  std::fprintf(f.get(), "t");
  for (int c = 0; c < x.cols(); ++c) std::fprintf(f.get(), ",x%d", c + 1);
  std::fprintf(f.get(), "\n");
  for (int t = 0; t < x.rows(); ++t) {
    std::fprintf(f.get(), "%d", t + 1);
    for (int c = 0; c < x.cols(); ++c) std::fprintf(f.get(), ",%.17g", x(t, c));
    std::fprintf(f.get(), "\n");
  }
}

namespace {

nlohmann::json spec_to_json(const ModelSpec& s) {
  nlohmann::json j;
  j["deg_e"] = s.deg_e;
  j["deg_f"] = s.deg_f;
  j["include_bias"] = s.include_bias;
  j["monotone"] = s.monotone;
  j["contract_l1"] = s.contract_l1;
  j["slack_contract"] = s.slack_contract;
  j["positive"] = s.positive;
  j["alpha"] = s.alpha;
  j["delta"] = s.delta;
  auto& g = j["graph"];
  g["N"] = s.graph.num_nodes;
  g["state_dims"] = s.graph.state_dims;
  g["input_dims"] = s.graph.input_dims;
  auto& e = g["edges"] = nlohmann::json::array();
  for (auto [src, dst] : s.graph.edges) e.push_back({src + 1, dst + 1});
  return j;
}

ModelSpec spec_from_json(const nlohmann::json& j) {
  ModelSpec s;
  s.deg_e = j.at("deg_e").get<int>();
  s.deg_f = j.at("deg_f").get<int>();
  s.include_bias = j.at("include_bias").get<bool>();
  s.monotone = j.at("monotone").get<bool>();
  s.contract_l1 = j.at("contract_l1").get<bool>();
  s.slack_contract = j.at("slack_contract").get<bool>();
  s.positive = j.at("positive").get<bool>();
  s.alpha = j.at("alpha").get<double>();
  s.delta = j.at("delta").get<double>();
  const auto& g = j.at("graph");
  s.graph.num_nodes = g.at("N").get<int>();
  s.graph.state_dims = g.at("state_dims").get<std::vector<int>>();
  s.graph.input_dims = g.at("input_dims").get<std::vector<int>>();
  for (const auto& e : g.at("edges"))
    s.graph.edges.emplace_back(e[0].get<int>() - 1, e[1].get<int>() - 1);
  s.graph.finalize();
  return s;
}

nlohmann::json block_to_json(const Vec& theta, const BlockRef& blk) {
  nlohmann::json rows = nlohmann::json::array();
  for (int r = 0; r < blk.rows; ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (int c = 0; c < blk.cols; ++c) row.push_back(theta[blk.row_begin(r) + c]);
    rows.push_back(std::move(row));
  }
  return rows;
}

void block_from_json(const nlohmann::json& rows, const BlockRef& blk, Vec& theta) {
  if (static_cast<int>(rows.size()) != blk.rows)
    throw std::invalid_argument("params: block row count mismatch");
  for (int r = 0; r < blk.rows; ++r) {
    const auto& row = rows[r];
    if (static_cast<int>(row.size()) != blk.cols)
      throw std::invalid_argument("params: block column count mismatch");
    for (int c = 0; c < blk.cols; ++c) theta[blk.row_begin(r) + c] = row[c].get<double>();
  }
}

std::string edge_key(const ParamLayout::EdgeBlock& eb) {
  return std::to_string(eb.source + 1) + "->" + std::to_string(eb.target + 1);
}

}  // namespace

void save_params_json(const Model& m, const Vec& theta, const std::string& path,
                      const FileMeta& meta) {
  if (theta.size() != m.num_params())
    throw std::invalid_argument("save_params_json: parameter length mismatch");
  nlohmann::json j;
  j["format"] = "netid-params-v1";
  j["spec"] = spec_to_json(m.spec());
  auto& blocks = j["blocks"];
  auto& e = blocks["e"] = nlohmann::json::array();
  for (int i = 0; i < m.graph().num_nodes; ++i)
    e.push_back(block_to_json(theta, m.layout().e_block[i]));
  auto& f = blocks["f"] = nlohmann::json::object();
  for (const auto& eb : m.layout().edge) f[edge_key(eb)] = block_to_json(theta, eb.f);
  if (m.spec().slack_contract) {
    auto& s = blocks["s"] = nlohmann::json::object();
    for (const auto& eb : m.layout().edge) s[edge_key(eb)] = block_to_json(theta, eb.slack);
  }
  if (!meta.config_hash.empty() || meta.seed != 0)
    j["meta"] = {{"config_hash", meta.config_hash}, {"seed", meta.seed}};
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("cannot write params file: " + path);
  out << j.dump(2) << '\n';
}

ParamFile load_params_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open params file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("params file " + path + ": " + e.what());
  }
  ParamFile pf;
  try {
    pf.spec = spec_from_json(j.at("spec"));
    Model m(pf.spec);
    pf.theta = Vec::Zero(m.num_params());
    const auto& blocks = j.at("blocks");
    const auto& e = blocks.at("e");
    if (static_cast<int>(e.size()) != m.graph().num_nodes)
      throw std::invalid_argument("params: e block count mismatch");
    for (int i = 0; i < m.graph().num_nodes; ++i)
      block_from_json(e[i], m.layout().e_block[i], pf.theta);
    const auto& f = blocks.at("f");
    for (const auto& eb : m.layout().edge) block_from_json(f.at(edge_key(eb)), eb.f, pf.theta);
    if (m.spec().slack_contract) {
      const auto& s = blocks.at("s");
      for (const auto& eb : m.layout().edge)
        block_from_json(s.at(edge_key(eb)), eb.slack, pf.theta);
    }
    if (j.contains("meta")) {
      pf.meta.config_hash = j["meta"].value("config_hash", std::string{});
      pf.meta.seed = j["meta"].value("seed", std::uint64_t{0});
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("params file " + path + ": " + e.what());
  }
  return pf;
}

std::string config_hash_hex(const std::string& canonical) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, fnv1a64(canonical));
  return std::string(buf);
}

}  // namespace netid
