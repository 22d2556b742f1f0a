#pragma once

// Synthetic egocentric clips with exact ground truth.
//
// Time is measured in ticks of the gaze clock (gaze_hz). The "native" video runs at the
// gaze rate; only frames at frame_hz are rendered for the model. Everything moves by whole
// pixels per tick, so the flow between any two ticks is known exactly:
//   * background: a toroidal texture shifted by the camera offset c(k),
//   * objects: fixed world anchors (the gaze target additionally wanders), drawn at
//     anchor + wander(k) - c(k),
//   * occluders: sprites that exist at a single tick and sweep away by a scripted
//     displacement before the next rendered frame.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gazereg/flow.hpp"
#include "gazereg/gaze.hpp"
#include "gazereg/image.hpp"
#include "gazereg/numerics.hpp"

namespace gazereg {

enum class Task { understand, predict };

std::string to_string(Task t);
Task task_from_string(const std::string &s);

struct SceneSpec {
  int width = 64;
  int height = 64;
  int n_objects = 3;
  int n_classes = 4;
  int duration_s = 5;        ///< observed seconds (one model frame per 1/frame_hz)
  int frame_hz = 1;
  int gaze_hz = 30;
  int motion_px_per_frame = 1; ///< per-axis camera/target step bound between native (gaze-rate) frames
  double occlusion_rate = 0.0; ///< probability that a non-current window tick carries a major occluder
  double minor_occlusion_rate = 0.1;
  double noise_sigma = 0.04;
  std::uint64_t seed = 0;

  // Gaze behaviour.
  int fixation_ms = 200;
  int jitter_px = 2;
  int saccade_samples = 2;   ///< upper bound; 0 disables saccades
  double glance_rate = 0.35; ///< chance that a fixation is followed by a fleeting off-target glance

  // Layout and appearance.
  int camera_amplitude_px = 4;
  int target_wander_px = 2;
  int target_size = 14;
  int distractor_size = 12;
  /// Base intensity of distractors (plus a small per-class step); negative draws them in their
  /// class intensity like the target.
  double clutter_intensity = 0.1;
  std::int64_t flow_window_ms = 200; ///< window offsets for which flows/occlusion truth are kept

  Task task = Task::understand;
  int anticipate_s = 2;

  void validate() const;
  int ticks_per_frame() const { return gaze_hz / frame_hz; }
  int n_frames() const { return duration_s * frame_hz; }
};

/// Size of the class catalogue; n_classes may not exceed it.
inline constexpr int kCatalogueSize = 8;
const std::string &class_name(int cls);
/// Mean fill intensity of an object of class `cls`; the same for the target and for clutter.
double class_intensity(int cls, int n_classes);

enum class Shape { square, disc };

struct SceneObject {
  int cls = 0;
  Shape shape = Shape::square;
  int size = 0;
  double intensity = 0.0;
  int anchor_x = 0; ///< world position of the top-left corner
  int anchor_y = 0;
  bool is_target = false;
  Tensor texture; ///< size x size additive texture, moves with the object
};

struct Occluder {
  int x0 = 0, y0 = 0, w = 0, h = 0;
  int dx = 0, dy = 0; ///< displacement between its tick and the next rendered frame
  double intensity = 0.15;
  bool major = false;

  bool covers(int x, int y) const { return x >= x0 && y >= y0 && x < x0 + w && y < y0 + h; }
};

struct Offset {
  int x = 0, y = 0;
  bool operator==(const Offset &) const = default;
};

struct SceneScript {
  int width = 0, height = 0;
  std::vector<Offset> camera;        ///< c(k) per tick
  std::vector<Offset> target_wander; ///< extra per-tick displacement of the gaze target
  std::vector<SceneObject> objects;  ///< draw order; the target is drawn last
  std::map<int, Occluder> occluders; ///< tick -> sprite
  Tensor background;                 ///< toroidal texture, height x width

  int n_ticks() const { return static_cast<int>(camera.size()); }
  int target_index() const;
  /// Top-left corner of object j in image coordinates at tick k.
  Offset object_position(int j, int k) const;
  Offset object_centroid(int j, int k) const;
  /// Index of the topmost object covering (x, y) at tick k, or -1.
  int object_at(int x, int y, int k) const;
  bool object_covers(int j, int x, int y, int k) const;

  Frame render(int k) const;
  /// Exact displacement of every pixel of tick `from` to its position at tick `to`.
  FlowField flow(int from, int to) const;
};

enum class GazeKind { target_fixation, glance, saccade };

struct WindowTruth {
  std::int64_t tau_ms = 0;
  int tick = 0;
  bool occluded = false;
  double covered_fraction = 0.0;
};

struct SyntheticSample {
  SceneSpec spec;
  SceneScript script;
  std::vector<Frame> frames;
  std::vector<int> frame_ticks;
  std::vector<GazeSample> gaze;
  std::vector<GazeKind> gaze_kind;
  std::vector<int> gaze_object; ///< object index the sample was aimed at (-1: none)
  /// Per frame, every non-current tick of the flow window with its occlusion truth.
  std::vector<std::vector<WindowTruth>> window_truth;
  int label = 0;
  std::string label_text;

  std::int64_t frame_ms(int i) const;
  /// Tick whose timestamp equals `ms`, if any.
  std::optional<int> tick_at_ms(std::int64_t ms) const;
  /// f_{from -> to} between two gaze timestamps.
  FlowField true_flow(std::int64_t from_ms, std::int64_t to_ms) const;
};

std::int64_t tick_ms(int tick, int gaze_hz);

/// Covered fraction above which an occluder is flagged as major in the truth.
inline constexpr double kTruthEta = 0.60;

/// Deterministic given (spec, rng seed). Throws PlacementError when the objects cannot be
/// laid out without overlap.
SyntheticSample generate_scene(const SceneSpec &spec, RngState &rng);

/// Fixation / glance / saccade trace over ticks [0, n_ticks). Fills gaze, gaze_kind and
/// gaze_object of `sample` from its script.
void generate_gaze_trace(SyntheticSample &sample, RngState &rng);

/// Cover the gaze target with a major occluder at each listed tick (frames rendered at those
/// ticks are re-rendered) and refresh the occlusion truth.
SyntheticSample inject_occlusion(SyntheticSample sample, const std::vector<int> &ticks);

/// Recompute window_truth from the script's occluders.
void refresh_window_truth(SyntheticSample &sample);

} // namespace gazereg
