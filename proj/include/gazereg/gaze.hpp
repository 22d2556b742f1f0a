#pragma once

// Gaze supervision: per-sample Gaussian heatmaps, flow-warped temporal aggregation with
// occlusion gating, and patch-wise target distributions.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gazereg/bytes.hpp"
#include "gazereg/flow.hpp"
#include "gazereg/numerics.hpp"

namespace gazereg {

struct GazeSample {
  std::int64_t timestamp_ms = 0;
  double x = 0.0; ///< column, pixels
  double y = 0.0; ///< row, pixels

  bool operator==(const GazeSample &) const = default;
};

struct FrameDims {
  int width = 0;
  int height = 0;
  bool contains(double x, double y) const { return x >= 0 && y >= 0 && x < width && y < height; }
};

struct SmoothingConfig {
  double sigma = 20.0;
  void validate() const;
};

struct AggregationConfig {
  std::int64_t window_ms = 200;
  int max_points = 6;
  void validate() const;
};

/// Nonnegative mass over a frame. Producers that normalise set `normalized`.
struct Heatmap {
  Tensor mass;
  bool normalized = false;

  int width() const { return static_cast<int>(mass.cols()); }
  int height() const { return static_cast<int>(mass.rows()); }
  double total() const { return mass.sum(); }
};

/// Row-major partition of a frame into square patches; patch i = row * n_h + col.
struct PatchGrid {
  int n_h = 0;
  int n_v = 0;
  int patch_px = 0;

  int count() const { return n_h * n_v; }
  int width() const { return n_h * patch_px; }
  int height() const { return n_v * patch_px; }

  /// Grid that tiles width x height exactly, or GeometryError.
  static PatchGrid tiling(int width, int height, int patch_px);
};

using PatchDistribution = Vector;

/// Delta at the (rounded) gaze pixel convolved with gaussian_kernel_2d(sigma), cropped to
/// the frame and renormalised to unit mass.
Heatmap make_heatmap(const GazeSample &g, FrameDims dims, const SmoothingConfig &cfg);

/// The single-point baseline: the heatmap of the one gaze sample tied to the frame.
Heatmap make_singular(const GazeSample &g, FrameDims dims, const SmoothingConfig &cfg);

/// Samples with timestamp in [t - window_ms, t], keeping the most recent max_points.
std::vector<GazeSample> select_window(const std::vector<GazeSample> &trace, std::int64_t t_ms,
                                      const AggregationConfig &cfg);

/// Forward splat: each source pixel's mass moves to p + flow(p), shared bilinearly over the
/// four neighbouring pixels. Mass landing outside the frame is dropped. Not renormalised.
Heatmap warp_heatmap(const Heatmap &m, const FlowField &flow);

/// One term of the temporal sum: a gaze map, its flow to the current frame, and the
/// occlusion verdict for that pair. `current` marks the map of frame t itself, which is
/// always used with its own flow regardless of the verdict.
struct WindowEntry {
  Heatmap map;
  FlowField flow_to_t;
  OcclusionVerdict verdict;
  bool current = false;

  bool participates() const { return current || !verdict.occluded; }
};

/// H_t = normalize( sum over participating entries of warp(map, flow_to_t) ).
/// Occluded entries are skipped without being read.
Heatmap aggregate_window(const std::vector<WindowEntry> &entries);

/// Per-patch mass divided by the heatmap total.
PatchDistribution patchify(const Heatmap &h, const PatchGrid &grid);

PatchDistribution uniform_distribution(int n);

// --- persistence -----------------------------------------------------------------

/// CSV with header `timestamp_ms,x,y`. Rejects out-of-frame samples and non-increasing
/// timestamps when `dims` is given.
std::vector<GazeSample> parse_gaze_csv(const std::string &text, std::optional<FrameDims> dims = {});
std::string format_gaze_csv(const std::vector<GazeSample> &trace);

/// "GZHM", u32 version (1), u32 width, u32 height, then float32 mass row-major. LE.
Bytes encode_heatmap(const Heatmap &h);
Heatmap decode_heatmap(const Bytes &bytes);

/// One CSV row `frame_id,p_0,...,p_{P-1}` with round-trip precision.
std::string format_patch_row(const std::string &frame_id, const PatchDistribution &p);
std::pair<std::string, PatchDistribution> parse_patch_row(const std::string &line);

} // namespace gazereg
