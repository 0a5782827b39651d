#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "netid/model.hpp"

namespace netid {

// Provenance stamp embedded in every output file.
struct FileMeta {
  std::string config_hash;  // hex FNV-1a of the canonical flag string
  std::uint64_t seed = 0;
};

// Dataset CSV: optional "# config_hash=..., seed=..." comment, then a header
// "t,x1..xn,u1..um" and one row per sample.  The header column names carry
// the state/input split, so files are self-describing.
void save_dataset_csv(const Dataset& ds, const std::string& path, const FileMeta& meta = {});
Dataset load_dataset_csv(const std::string& path);

// Trajectory CSV: header "t,x1..xn".
void save_trajectory_csv(const Mat& x, const std::string& path, const FileMeta& meta = {});

// Parameter files carry the full spec (graph included) plus per-block
// coefficients, keyed "j->i" with 1-based node ids for the f and slack
// blocks.
void save_params_json(const Model& m, const Vec& theta, const std::string& path,
                      const FileMeta& meta = {});

struct ParamFile {
  ModelSpec spec;
  Vec theta;
  FileMeta meta;
};
ParamFile load_params_json(const std::string& path);

// Canonical "key=value;" string hashed into config_hash.
std::string config_hash_hex(const std::string& canonical);

}  // namespace netid
