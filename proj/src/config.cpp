#include "gazereg/config.hpp"

#include <cstdio>
#include <initializer_list>

namespace gazereg {

namespace {

using nlohmann::json;

void check_keys(const json &j, std::initializer_list<const char *> known, const std::string &where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto &[key, _] : j.items()) {
    bool ok = false;
    for (const char *k : known) ok = ok || key == k;
    if (!ok) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <typename T> void field(const json &j, const char *key, T &out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

} // namespace

void to_json(json &j, const SceneSpec &s) {
  j = json{{"width", s.width},
           {"height", s.height},
           {"n_objects", s.n_objects},
           {"n_classes", s.n_classes},
           {"duration_s", s.duration_s},
           {"frame_hz", s.frame_hz},
           {"gaze_hz", s.gaze_hz},
           {"motion_px_per_frame", s.motion_px_per_frame},
           {"occlusion_rate", s.occlusion_rate},
           {"minor_occlusion_rate", s.minor_occlusion_rate},
           {"noise_sigma", s.noise_sigma},
           {"seed", s.seed},
           {"fixation_ms", s.fixation_ms},
           {"jitter_px", s.jitter_px},
           {"saccade_samples", s.saccade_samples},
           {"glance_rate", s.glance_rate},
           {"camera_amplitude_px", s.camera_amplitude_px},
           {"target_wander_px", s.target_wander_px},
           {"target_size", s.target_size},
           {"distractor_size", s.distractor_size},
           {"clutter_intensity", s.clutter_intensity},
           {"flow_window_ms", s.flow_window_ms},
           {"task", to_string(s.task)},
           {"anticipate_s", s.anticipate_s}};
}

void from_json(const json &j, SceneSpec &s) {
  check_keys(j,
             {"width", "height", "n_objects", "n_classes", "duration_s", "frame_hz", "gaze_hz", "motion_px_per_frame",
              "occlusion_rate", "minor_occlusion_rate", "noise_sigma", "seed", "fixation_ms", "jitter_px",
              "saccade_samples", "glance_rate", "camera_amplitude_px", "target_wander_px", "target_size",
              "distractor_size", "clutter_intensity", "flow_window_ms", "task", "anticipate_s"},
             "scene");
  s = SceneSpec{};
  field(j, "width", s.width);
  field(j, "height", s.height);
  field(j, "n_objects", s.n_objects);
  field(j, "n_classes", s.n_classes);
  field(j, "duration_s", s.duration_s);
  field(j, "frame_hz", s.frame_hz);
  field(j, "gaze_hz", s.gaze_hz);
  field(j, "motion_px_per_frame", s.motion_px_per_frame);
  field(j, "occlusion_rate", s.occlusion_rate);
  field(j, "minor_occlusion_rate", s.minor_occlusion_rate);
  field(j, "noise_sigma", s.noise_sigma);
  field(j, "seed", s.seed);
  field(j, "fixation_ms", s.fixation_ms);
  field(j, "jitter_px", s.jitter_px);
  field(j, "saccade_samples", s.saccade_samples);
  field(j, "glance_rate", s.glance_rate);
  field(j, "camera_amplitude_px", s.camera_amplitude_px);
  field(j, "target_wander_px", s.target_wander_px);
  field(j, "target_size", s.target_size);
  field(j, "distractor_size", s.distractor_size);
  field(j, "clutter_intensity", s.clutter_intensity);
  field(j, "flow_window_ms", s.flow_window_ms);
  if (j.contains("task")) s.task = task_from_string(j.at("task").get<std::string>());
  field(j, "anticipate_s", s.anticipate_s);
}

void to_json(json &j, const SupervisionConfig &s) {
  j = json{{"sigma", s.smoothing.sigma},   {"window_ms", s.aggregation.window_ms},
           {"max_points", s.aggregation.max_points}, {"eps", s.occlusion.eps},
           {"eta", s.occlusion.eta},       {"patch_px", s.patch_px},
           {"mode", to_string(s.mode)}};
}

void from_json(const json &j, SupervisionConfig &s) {
  check_keys(j, {"sigma", "window_ms", "max_points", "eps", "eta", "patch_px", "mode"}, "supervision");
  s = SupervisionConfig{};
  field(j, "sigma", s.smoothing.sigma);
  field(j, "window_ms", s.aggregation.window_ms);
  field(j, "max_points", s.aggregation.max_points);
  field(j, "eps", s.occlusion.eps);
  field(j, "eta", s.occlusion.eta);
  field(j, "patch_px", s.patch_px);
  if (j.contains("mode")) s.mode = mode_from_string(j.at("mode").get<std::string>());
}

void to_json(json &j, const RunConfig &c) {
  j = json{{"scene", c.scene},
           {"supervision", c.supervision},
           {"model", c.model},
           {"train_count", c.train_count},
           {"test_count", c.test_count},
           {"topk", c.topk},
           {"paths", json{{"data", c.paths.data}, {"targets", c.paths.targets}, {"out", c.paths.out}}}};
}

void from_json(const json &j, RunConfig &c) {
  check_keys(j, {"scene", "supervision", "model", "train_count", "test_count", "topk", "paths"}, "run config");
  c = RunConfig{};
  field(j, "scene", c.scene);
  field(j, "supervision", c.supervision);
  field(j, "model", c.model);
  field(j, "train_count", c.train_count);
  field(j, "test_count", c.test_count);
  field(j, "topk", c.topk);
  if (j.contains("paths")) {
    const json &p = j.at("paths");
    check_keys(p, {"data", "targets", "out"}, "paths");
    field(p, "data", c.paths.data);
    field(p, "targets", c.paths.targets);
    field(p, "out", c.paths.out);
  }
}

void RunConfig::validate() const {
  scene.validate();
  supervision.validate();
  model.validate();
  if (model.patch_px != supervision.patch_px) throw ConfigError("model.patch_px must equal supervision.patch_px");
  if (model.n_classes != scene.n_classes) throw ConfigError("model.n_classes must equal scene.n_classes");
  if (train_count < 0 || test_count < 0) throw ConfigError("sample counts must be nonnegative");
  if (topk < 1) throw ConfigError("topk must be >= 1");
}

RunConfig parse_run_config(const std::string &text) {
  try {
    return json::parse(text).get<RunConfig>();
  } catch (const json::exception &e) {
    throw ConfigError(std::string("run config: ") + e.what());
  }
}

std::string dump_run_config(const RunConfig &c) { return json(c).dump(2) + "\n"; }

std::string hash_json(const json &j) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(j.dump())));
  return buf;
}

std::string supervision_hash(const SupervisionConfig &s) { return hash_json(json(s)); }

std::string config_hash(const RunConfig &c) {
  json j = c;
  j.erase("paths");
  return hash_json(j);
}

} // namespace gazereg
