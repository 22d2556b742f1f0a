#include "gazereg/dataset_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "gazereg/image.hpp"

namespace gazereg {

using nlohmann::json;

std::string sample_id(int index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "s%05d", index);
  return buf;
}

std::uint64_t sample_seed(std::uint64_t base, std::string_view split, int index) {
  return RngState(base).fork(std::string(split) + "/" + std::to_string(index)).seed();
}

SyntheticSample generate_sample(SceneSpec spec, std::uint64_t seed) {
  for (int attempt = 0;; ++attempt) {
    spec.seed = attempt == 0 ? seed : RngState(seed).fork("relayout/" + std::to_string(attempt)).seed();
    RngState rng(spec.seed);
    try {
      return generate_scene(spec, rng);
    } catch (const PlacementError &) {
      if (attempt >= 16) throw;
    }
  }
}

std::vector<SyntheticSample> generate_split(const SceneSpec &spec, std::uint64_t seed, int count,
                                            std::string_view split) {
  std::vector<SyntheticSample> out;
  out.reserve(static_cast<std::size_t>(std::max(count, 0)));
  for (int i = 0; i < count; ++i) out.push_back(generate_sample(spec, sample_seed(seed, split, i)));
  return out;
}

Batch supervised_batch(const SyntheticSample &s, const SupervisionConfig &cfg, std::vector<std::string> *warnings) {
  Batch b;
  b.frames = s.frames;
  b.label = s.label;
  b.task = s.spec.task;
  const FrameDims dims{s.spec.width, s.spec.height};
  const FlowLookup flows = synthetic_flow_lookup(s);
  for (std::size_t i = 0; i < s.frames.size(); ++i) {
    FrameSupervision sup = supervise_frame(s.gaze, s.frame_ms(static_cast<int>(i)), dims, cfg, flows);
    if (warnings) warnings->insert(warnings->end(), sup.warnings.begin(), sup.warnings.end());
    b.targets.push_back(std::move(sup.target));
  }
  return b;
}

Batch truth_batch(const SyntheticSample &s, const SupervisionConfig &cfg) {
  Batch b;
  b.frames = s.frames;
  b.label = s.label;
  b.task = s.spec.task;
  const FrameDims dims{s.spec.width, s.spec.height};
  const PatchGrid grid = PatchGrid::tiling(dims.width, dims.height, cfg.patch_px);
  const int target = s.script.target_index();
  for (const int t : s.frame_ticks) {
    const Offset c = s.script.object_centroid(target, t);
    const GazeSample g{tick_ms(t, s.spec.gaze_hz), std::clamp(double(c.x), 0.0, dims.width - 1.0),
                       std::clamp(double(c.y), 0.0, dims.height - 1.0)};
    b.targets.push_back(patchify(make_heatmap(g, dims, cfg.smoothing), grid));
  }
  return b;
}

// --- on disk ---------------------------------------------------------------------

json read_json(const fs::path &path) {
  const std::string text = read_text(path);
  try {
    return json::parse(text);
  } catch (const json::exception &e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_json(const fs::path &path, const json &j) { write_text(path, j.dump(2) + "\n"); }

std::vector<std::string> manifest_samples(const json &manifest) {
  if (!manifest.contains("samples") || !manifest.at("samples").is_array()) {
    throw FormatError("manifest has no 'samples' array");
  }
  return manifest.at("samples").get<std::vector<std::string>>();
}

namespace {

const char *kind_name(GazeKind k) {
  switch (k) {
  case GazeKind::target_fixation: return "fixation";
  case GazeKind::glance: return "glance";
  case GazeKind::saccade: return "saccade";
  }
  return "?";
}

} // namespace

void write_sample(const fs::path &dir, const SyntheticSample &s) {
  fs::create_directories(dir / "frames");
  fs::create_directories(dir / "flow");
  for (std::size_t i = 0; i < s.frames.size(); ++i) {
    write_file(dir / "frames" / (std::to_string(i) + ".pgm"), encode_pgm(s.frames[i]));
  }
  write_text(dir / "gaze.csv", format_gaze_csv(s.gaze));

  // Flow for every window offset of every frame, plus consecutive frame pairs, both directions.
  std::set<std::pair<int, int>> pairs;
  for (std::size_t i = 0; i < s.frame_ticks.size(); ++i) {
    const int t = s.frame_ticks[i];
    for (const auto &w : s.window_truth[i]) {
      pairs.insert({w.tick, t});
      pairs.insert({t, w.tick});
    }
    if (i > 0) {
      pairs.insert({s.frame_ticks[i - 1], t});
      pairs.insert({t, s.frame_ticks[i - 1]});
    }
  }
  for (const auto &[from, to] : pairs) {
    const auto name = flow_file_name(tick_ms(to, s.spec.gaze_hz), tick_ms(from, s.spec.gaze_hz));
    write_file(dir / "flow" / name, write_flo(s.script.flow(from, to)));
  }

  json truth;
  truth["label"] = s.label;
  truth["label_text"] = s.label_text;
  truth["task"] = to_string(s.spec.task);
  truth["seed"] = s.spec.seed;
  json frame_ms = json::array(), windows = json::array();
  for (std::size_t i = 0; i < s.frame_ticks.size(); ++i) {
    frame_ms.push_back(s.frame_ms(static_cast<int>(i)));
    json win = json::array();
    for (const auto &w : s.window_truth[i]) {
      win.push_back({{"tau_ms", w.tau_ms}, {"occluded", w.occluded}, {"covered_fraction", w.covered_fraction}});
    }
    windows.push_back(std::move(win));
  }
  truth["frame_ms"] = std::move(frame_ms);
  truth["window_truth"] = std::move(windows);
  const int target = s.script.target_index();
  json traj = json::array();
  for (int k = 0; k < s.script.n_ticks(); ++k) {
    const Offset c = s.script.object_centroid(target, k);
    traj.push_back({tick_ms(k, s.spec.gaze_hz), c.x, c.y});
  }
  truth["target_trajectory"] = std::move(traj);
  json kinds = json::array();
  for (const auto k : s.gaze_kind) kinds.push_back(kind_name(k));
  truth["gaze_kind"] = std::move(kinds);
  write_json(dir / "truth.json", truth);
}

StoredSample read_sample(const fs::path &dir) {
  StoredSample out;
  out.id = dir.filename().string();
  std::vector<int> indices;
  if (!fs::is_directory(dir / "frames")) throw IoError(dir.string() + ": missing frames/ directory");
  for (const auto &e : fs::directory_iterator(dir / "frames")) {
    if (e.path().extension() != ".pgm") continue;
    const std::string stem = e.path().stem().string();
    if (stem.empty() || !std::all_of(stem.begin(), stem.end(), [](char c) { return c >= '0' && c <= '9'; })) {
      throw FormatError(e.path().string() + ": frame files must be named <index>.pgm");
    }
    indices.push_back(std::stoi(stem));
  }
  std::sort(indices.begin(), indices.end());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] != static_cast<int>(i)) throw FormatError(dir.string() + ": frame indices are not 0..n-1");
    out.frames.push_back(decode_pgm(read_file(dir / "frames" / (std::to_string(i) + ".pgm"))));
  }
  if (out.frames.empty()) throw FormatError(dir.string() + ": no frames");
  out.dims = FrameDims{static_cast<int>(out.frames[0].cols()), static_cast<int>(out.frames[0].rows())};
  for (const auto &f : out.frames) {
    if (f.cols() != out.dims.width || f.rows() != out.dims.height) throw GeometryError(dir.string() + ": frames differ in size");
  }
  out.gaze = parse_gaze_csv(read_text(dir / "gaze.csv"), out.dims);

  if (fs::exists(dir / "truth.json")) {
    const json truth = read_json(dir / "truth.json");
    try {
      out.label = truth.value("label", 0);
      if (truth.contains("task")) out.task = task_from_string(truth.at("task").get<std::string>());
      if (truth.contains("frame_ms")) out.frame_ms = truth.at("frame_ms").get<std::vector<std::int64_t>>();
    } catch (const json::exception &e) {
      throw FormatError(dir.string() + "/truth.json: " + e.what());
    }
  }
  if (out.frame_ms.empty()) {
    for (std::size_t i = 0; i < out.frames.size(); ++i) out.frame_ms.push_back(static_cast<std::int64_t>(i) * 1000);
  }
  if (out.frame_ms.size() != out.frames.size()) throw FormatError(dir.string() + ": frame_ms does not match frame count");
  return out;
}

void write_targets(const fs::path &dir, const std::vector<FrameSupervision> &frames) {
  fs::create_directories(dir / "heatmaps");
  std::string rows, occ = "frame_id,tau_ms,observed_ratio,verdict\n";
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const std::string id = std::to_string(i);
    rows += format_patch_row(id, frames[i].target) + "\n";
    if (!frames[i].substituted) write_file(dir / "heatmaps" / (id + ".gzhm"), encode_heatmap(frames[i].heatmap));
    for (const auto &e : frames[i].occlusion_log) {
      char ratio[32];
      std::snprintf(ratio, sizeof ratio, "%.6f", e.observed_ratio);
      occ += id + "," + std::to_string(e.tau_ms) + "," + ratio + "," +
             (e.flow_missing ? "missing" : e.occluded ? "occluded" : "valid") + "\n";
    }
  }
  write_text(dir / "targets.csv", rows);
  write_text(dir / "occlusion.csv", occ);
}

std::vector<PatchDistribution> read_targets(const fs::path &dir) {
  std::istringstream in(read_text(dir / "targets.csv"));
  std::vector<PatchDistribution> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto [id, p] = parse_patch_row(line);
    if (id != std::to_string(out.size())) throw FormatError(dir.string() + "/targets.csv: rows out of order at '" + id + "'");
    out.push_back(std::move(p));
  }
  return out;
}

Dataset load_dataset(const fs::path &data, const fs::path &targets) {
  const auto ids = manifest_samples(read_json(data / "manifest.json"));
  Dataset out;
  out.reserve(ids.size());
  for (const auto &id : ids) {
    StoredSample s = read_sample(data / id);
    Batch b;
    b.id = id;
    b.frames = std::move(s.frames);
    b.label = s.label;
    b.task = s.task;
    b.targets = read_targets(targets / id);
    if (b.targets.size() != b.frames.size()) {
      throw FormatError(id + ": " + std::to_string(b.targets.size()) + " target rows for " +
                        std::to_string(b.frames.size()) + " frames");
    }
    out.push_back(std::move(b));
  }
  return out;
}

} // namespace gazereg
