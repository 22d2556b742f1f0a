#pragma once

// One JSON document for a whole run. Unknown keys are rejected at every level; missing keys
// take their defaults. Hashes are FNV-1a 64 over the canonical (sorted-key) dump, rendered as
// 16 lowercase hex digits. Paths never enter a hash.

#include <cstdint>
#include <string>

#include <json.hpp>

#include "gazereg/model.hpp"
#include "gazereg/pipeline.hpp"
#include "gazereg/synth.hpp"

namespace gazereg {

struct RunPaths {
  std::string data;
  std::string targets;
  std::string out;
};

struct RunConfig {
  SceneSpec scene;
  SupervisionConfig supervision;
  ModelConfig model;
  int train_count = 200;
  int test_count = 100;
  int topk = 10;
  RunPaths paths;

  void validate() const;
};

void to_json(nlohmann::json &j, const SceneSpec &s);
void from_json(const nlohmann::json &j, SceneSpec &s);
void to_json(nlohmann::json &j, const SupervisionConfig &s);
void from_json(const nlohmann::json &j, SupervisionConfig &s);
void to_json(nlohmann::json &j, const RunConfig &c);
void from_json(const nlohmann::json &j, RunConfig &c);

RunConfig parse_run_config(const std::string &text);
std::string dump_run_config(const RunConfig &c);

std::string hash_json(const nlohmann::json &j);
/// Hash of everything that shapes the supervision targets (smoothing, window, occlusion, grid, mode).
std::string supervision_hash(const SupervisionConfig &s);
/// Hash of the whole run configuration except paths.
std::string config_hash(const RunConfig &c);

} // namespace gazereg
