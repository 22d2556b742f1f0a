#pragma once

// Synthetic splits in memory and datasets on disk.
//
//   <data>/manifest.json              {"config_hash", "seed", "count", "scene", "samples": [ids]}
//   <data>/<id>/frames/<i>.pgm        8-bit P5
//   <data>/<id>/gaze.csv              timestamp_ms,x,y
//   <data>/<id>/flow/<dst>_<src>.flo  f_{src -> dst}, timestamps in ms
//   <data>/<id>/truth.json            label, frame_ms, occlusion truth, target trajectory
//
//   <targets>/meta.json                   {"supervision", "supervision_hash", "config_hash", "samples"}
//   <targets>/<id>/targets.csv            one patch row per frame: frame_id,p_0,...,p_{P-1}
//   <targets>/<id>/heatmaps/<i>.gzhm      aggregated heatmap (absent for substituted frames)
//   <targets>/<id>/occlusion.csv          frame_id,tau_ms,observed_ratio,verdict

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "gazereg/model.hpp"
#include "gazereg/pipeline.hpp"
#include "gazereg/synth.hpp"

namespace gazereg {

namespace fs = std::filesystem;

std::string sample_id(int index);
std::uint64_t sample_seed(std::uint64_t base, std::string_view split, int index);

/// generate_scene + gaze trace for one seed; on a PlacementError the layout is redrawn from a
/// derived seed (bounded number of times).
SyntheticSample generate_sample(SceneSpec spec, std::uint64_t seed);
std::vector<SyntheticSample> generate_split(const SceneSpec &spec, std::uint64_t seed, int count,
                                            std::string_view split);

/// Frames of the sample with gaze-derived targets under `cfg`, using the sample's exact flows.
Batch supervised_batch(const SyntheticSample &s, const SupervisionConfig &cfg,
                       std::vector<std::string> *warnings = nullptr);
/// Frames of the sample with targets centred on the true target object at each frame.
Batch truth_batch(const SyntheticSample &s, const SupervisionConfig &cfg);

// --- on disk ---------------------------------------------------------------------

void write_sample(const fs::path &dir, const SyntheticSample &s);

struct StoredSample {
  std::string id;
  std::vector<Frame> frames;
  std::vector<std::int64_t> frame_ms;
  std::vector<GazeSample> gaze;
  int label = 0;
  Task task = Task::understand;
  FrameDims dims;
};

/// Frame timestamps come from truth.json when present, else frame i sits at i * 1000 ms.
StoredSample read_sample(const fs::path &dir);

nlohmann::json read_json(const fs::path &path);
void write_json(const fs::path &path, const nlohmann::json &j);
std::vector<std::string> manifest_samples(const nlohmann::json &manifest);

void write_targets(const fs::path &dir, const std::vector<FrameSupervision> &frames);
std::vector<PatchDistribution> read_targets(const fs::path &dir);

/// Frames from `data`, targets from `targets`, sample list from the data manifest.
Dataset load_dataset(const fs::path &data, const fs::path &targets);

} // namespace gazereg
