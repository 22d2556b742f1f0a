#pragma once

// Per-frame supervision targets from a gaze trace plus a source of optical flow.

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gazereg/flow.hpp"
#include "gazereg/gaze.hpp"
#include "gazereg/synth.hpp"

namespace gazereg {

enum class SupervisionMode { aggregated, singular };

std::string to_string(SupervisionMode m);
SupervisionMode mode_from_string(const std::string &s);

struct SupervisionConfig {
  SmoothingConfig smoothing;
  AggregationConfig aggregation;
  OcclusionConfig occlusion;
  int patch_px = 8;
  SupervisionMode mode = SupervisionMode::aggregated;

  void validate() const;
};

/// Forward and backward flow between the frame at t_ms and an earlier gaze time tau_ms.
struct FlowPair {
  FlowField tau_to_t; ///< f_{tau -> t}
  FlowField t_to_tau; ///< f_{t -> tau}
};

/// Returns nullopt when no flow is available for the pair.
using FlowLookup = std::function<std::optional<FlowPair>(std::int64_t t_ms, std::int64_t tau_ms)>;

FlowLookup synthetic_flow_lookup(const SyntheticSample &sample);

/// Reads `<dir>/<t>_<tau>.flo` (f_{tau->t}) and `<dir>/<tau>_<t>.flo` (f_{t->tau}); timestamps in ms.
FlowLookup directory_flow_lookup(std::filesystem::path dir);
std::string flow_file_name(std::int64_t dst_ms, std::int64_t src_ms);
/// Parses `<dst>_<src>.flo`; nullopt for names that do not follow the convention.
std::optional<std::pair<std::int64_t, std::int64_t>> parse_flow_file_name(const std::string &name);

struct OcclusionLogEntry {
  std::int64_t tau_ms = 0;
  double observed_ratio = 0.0;
  bool occluded = false;
  bool flow_missing = false;
};

struct FrameSupervision {
  Heatmap heatmap;           ///< empty when the uniform fallback was used
  PatchDistribution target;
  bool substituted = false;  ///< true when no gaze mass survived and a uniform target stands in
  std::vector<OcclusionLogEntry> occlusion_log;
  std::vector<std::string> warnings;
};

FrameSupervision supervise_frame(const std::vector<GazeSample> &trace, std::int64_t t_ms, FrameDims dims,
                                 const SupervisionConfig &cfg, const FlowLookup &flows);

} // namespace gazereg
