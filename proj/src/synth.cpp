#include "gazereg/synth.hpp"

#include <algorithm>
#include <array>

namespace gazereg {

std::string to_string(Task t) { return t == Task::understand ? "understand" : "predict"; }

Task task_from_string(const std::string &s) {
  if (s == "understand") return Task::understand;
  if (s == "predict") return Task::predict;
  throw ConfigError("unknown task '" + s + "' (expected understand|predict)");
}

void SceneSpec::validate() const {
  if (width <= 0 || height <= 0) throw ConfigError("scene dims must be positive");
  if (n_objects < 1) throw ConfigError("scene needs at least one object");
  if (n_classes < 1 || n_classes > kCatalogueSize) {
    throw ConfigError("n_classes must lie in [1, " + std::to_string(kCatalogueSize) + "]");
  }
  if (duration_s < 1 || frame_hz < 1) throw ConfigError("duration_s and frame_hz must be >= 1");
  if (gaze_hz < frame_hz || gaze_hz > 1000 || gaze_hz % frame_hz != 0) {
    throw ConfigError("gaze_hz must be a multiple of frame_hz and at most 1000");
  }
  if (motion_px_per_frame < 0 || camera_amplitude_px < 0 || target_wander_px < 0 || jitter_px < 0 ||
      saccade_samples < 0) {
    throw ConfigError("motion, amplitude, jitter and saccade counts must be nonnegative");
  }
  for (double r : {occlusion_rate, minor_occlusion_rate, glance_rate}) {
    if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("rates must lie in [0, 1]");
  }
  if (noise_sigma < 0.0) throw ConfigError("noise_sigma must be nonnegative");
  if (fixation_ms <= 0 || flow_window_ms < 0 || anticipate_s < 0) throw ConfigError("durations must be positive");
  if (target_size < 2 || distractor_size < 2) throw ConfigError("object sizes must be >= 2");
}

const std::string &class_name(int cls) {
  static const std::array<std::string, kCatalogueSize> names = {"mug",  "knife",  "bowl",  "phone",
                                                                "book", "bottle", "plate", "spoon"};
  return names.at(static_cast<std::size_t>(cls));
}

double class_intensity(int cls, int n_classes) {
  return n_classes == 1 ? 0.75 : 0.55 + 0.4 * double(cls) / double(n_classes - 1);
}

std::int64_t tick_ms(int tick, int gaze_hz) {
  return (2 * std::int64_t(tick) * 1000 + gaze_hz) / (2 * std::int64_t(gaze_hz));
}

// --- script geometry -------------------------------------------------------------

int SceneScript::target_index() const {
  for (std::size_t j = 0; j < objects.size(); ++j) {
    if (objects[j].is_target) return static_cast<int>(j);
  }
  return -1;
}

Offset SceneScript::object_position(int j, int k) const {
  const auto &o = objects[static_cast<std::size_t>(j)];
  const Offset c = camera[static_cast<std::size_t>(k)];
  Offset p{o.anchor_x - c.x, o.anchor_y - c.y};
  if (o.is_target) {
    p.x += target_wander[static_cast<std::size_t>(k)].x;
    p.y += target_wander[static_cast<std::size_t>(k)].y;
  }
  return p;
}

Offset SceneScript::object_centroid(int j, int k) const {
  const Offset p = object_position(j, k);
  const int s = objects[static_cast<std::size_t>(j)].size;
  return {p.x + s / 2, p.y + s / 2};
}

bool SceneScript::object_covers(int j, int x, int y, int k) const {
  const auto &o = objects[static_cast<std::size_t>(j)];
  const Offset p = object_position(j, k);
  const int lx = x - p.x, ly = y - p.y;
  if (lx < 0 || ly < 0 || lx >= o.size || ly >= o.size) return false;
  if (o.shape == Shape::square) return true;
  const double c = (o.size - 1) / 2.0, r = o.size / 2.0;
  return (lx - c) * (lx - c) + (ly - c) * (ly - c) <= r * r;
}

int SceneScript::object_at(int x, int y, int k) const {
  for (int j = static_cast<int>(objects.size()) - 1; j >= 0; --j) {
    if (object_covers(j, x, y, k)) return j;
  }
  return -1;
}

Frame SceneScript::render(int k) const {
  const Offset c = camera[static_cast<std::size_t>(k)];
  Frame f(height, width);
  const auto occ = occluders.find(k);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      if (occ != occluders.end() && occ->second.covers(x, y)) {
        f(y, x) = occ->second.intensity;
        continue;
      }
      const int j = object_at(x, y, k);
      if (j >= 0) {
        const auto &o = objects[static_cast<std::size_t>(j)];
        const Offset p = object_position(j, k);
        f(y, x) = o.intensity + o.texture(y - p.y, x - p.x);
      } else {
        const int wx = ((x + c.x) % width + width) % width;
        const int wy = ((y + c.y) % height + height) % height;
        f(y, x) = background(wy, wx);
      }
    }
  }
  return quantize8(f);
}

FlowField SceneScript::flow(int from, int to) const {
  FlowField out = FlowField::zeros(width, height);
  const Offset cf = camera[static_cast<std::size_t>(from)], ct = camera[static_cast<std::size_t>(to)];
  const auto occ = occluders.find(from);
  std::vector<Offset> obj_disp(objects.size());
  for (std::size_t j = 0; j < objects.size(); ++j) {
    const Offset a = object_position(static_cast<int>(j), from), b = object_position(static_cast<int>(j), to);
    obj_disp[j] = {b.x - a.x, b.y - a.y};
  }
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      Offset d{-(ct.x - cf.x), -(ct.y - cf.y)};
      if (occ != occluders.end() && occ->second.covers(x, y)) {
        d = {occ->second.dx, occ->second.dy};
      } else if (const int j = object_at(x, y, from); j >= 0) {
        d = obj_disp[static_cast<std::size_t>(j)];
      }
      out.u(y, x) = d.x;
      out.v(y, x) = d.y;
    }
  }
  return out;
}

// --- sample helpers ----------------------------------------------------------------

std::int64_t SyntheticSample::frame_ms(int i) const {
  return tick_ms(frame_ticks[static_cast<std::size_t>(i)], spec.gaze_hz);
}

std::optional<int> SyntheticSample::tick_at_ms(std::int64_t ms) const {
  // tick_ms is monotone, so a binary search over ticks is exact.
  int lo = 0, hi = script.n_ticks() - 1;
  while (lo <= hi) {
    const int mid = (lo + hi) / 2;
    const std::int64_t m = tick_ms(mid, spec.gaze_hz);
    if (m == ms) return mid;
    if (m < ms) lo = mid + 1;
    else hi = mid - 1;
  }
  return std::nullopt;
}

FlowField SyntheticSample::true_flow(std::int64_t from_ms, std::int64_t to_ms) const {
  const auto a = tick_at_ms(from_ms), b = tick_at_ms(to_ms);
  if (!a || !b) throw DomainError("true_flow: timestamp does not fall on a scene tick");
  return script.flow(*a, *b);
}

namespace {

Tensor toroidal_texture(int width, int height, double mean, double sigma, RngStream &rng) {
  Tensor white(height, width);
  for (Eigen::Index i = 0; i < white.size(); ++i) white.data()[i] = rng.normal();
  // Separable circular blur so the texture has low-frequency structure block matching can lock onto.
  const std::array<double, 5> k = {0.0625, 0.25, 0.375, 0.25, 0.0625};
  Tensor tmp(height, width), out(height, width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      double s = 0;
      for (int d = -2; d <= 2; ++d) s += k[std::size_t(d + 2)] * white(y, ((x + d) % width + width) % width);
      tmp(y, x) = s;
    }
  }
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      double s = 0;
      for (int d = -2; d <= 2; ++d) s += k[std::size_t(d + 2)] * tmp(((y + d) % height + height) % height, x);
      out(y, x) = s;
    }
  }
  const double sd = std::sqrt((out.array() - out.mean()).square().mean());
  const double scale = sd > 0 ? sigma / sd : 0.0;
  return ((out.array() - out.mean()) * scale + mean).matrix();
}

/// Bounded walk with persistent velocity, reflected at +-amplitude.
std::vector<Offset> bounded_walk(int n, int step, int amplitude, RngStream &rng) {
  std::vector<Offset> out(static_cast<std::size_t>(n));
  if (step == 0 || amplitude == 0) return out;
  Offset pos{static_cast<int>(rng.integer(-amplitude, amplitude)), static_cast<int>(rng.integer(-amplitude, amplitude))};
  Offset vel{static_cast<int>(rng.integer(-step, step)), static_cast<int>(rng.integer(-step, step))};
  for (int k = 0; k < n; ++k) {
    out[static_cast<std::size_t>(k)] = pos;
    if (rng.bernoulli(0.2)) vel = {static_cast<int>(rng.integer(-step, step)), static_cast<int>(rng.integer(-step, step))};
    auto advance = [&](int &p, int &v) {
      if (p + v > amplitude || p + v < -amplitude) v = -v;
      p += v;
    };
    advance(pos.x, vel.x);
    advance(pos.y, vel.y);
  }
  return out;
}

struct Box {
  int x0, y0, x1, y1; // inclusive-exclusive
  bool overlaps(const Box &o, int gap) const {
    return !(x1 + gap <= o.x0 || o.x1 + gap <= x0 || y1 + gap <= o.y0 || o.y1 + gap <= y0);
  }
};

Occluder major_occluder_over_target(const SceneScript &s, int tick, RngStream *rng) {
  const int ti = s.target_index();
  const Offset p = s.object_position(ti, tick);
  const int size = s.objects[static_cast<std::size_t>(ti)].size;
  const int band = (3 * s.height + 3) / 4;
  const int lo = std::clamp(p.y + size - band, 0, s.height - band);
  const int hi = std::clamp(p.y, 0, s.height - band);
  const int y0 = rng ? static_cast<int>(rng->integer(lo, std::max(lo, hi))) : (lo + std::max(lo, hi)) / 2;
  Occluder o;
  o.x0 = 0;
  o.y0 = y0;
  o.w = s.width;
  o.h = band;
  o.dx = 0;
  o.dy = (y0 + band / 2 < s.height / 2) ? -band : band;
  o.major = true;
  return o;
}

std::optional<Occluder> minor_occluder(const SceneScript &s, int tick, RngStream &rng) {
  const int ti = s.target_index();
  const Offset p = s.object_position(ti, tick);
  const int size = s.objects[static_cast<std::size_t>(ti)].size;
  const Box target{p.x, p.y, p.x + size, p.y + size};
  const int side = std::max(4, s.width / 5);
  for (int attempt = 0; attempt < 50; ++attempt) {
    const int x0 = static_cast<int>(rng.integer(0, s.width - side));
    const int y0 = static_cast<int>(rng.integer(0, s.height - side));
    if (Box{x0, y0, x0 + side, y0 + side}.overlaps(target, 2)) continue;
    Occluder o;
    o.x0 = x0;
    o.y0 = y0;
    o.w = o.h = side;
    o.dx = (x0 + side / 2 < s.width / 2) ? -s.width / 2 : s.width / 2;
    o.major = false;
    return o;
  }
  return std::nullopt;
}

} // namespace

void refresh_window_truth(SyntheticSample &sample) {
  const auto &spec = sample.spec;
  sample.window_truth.assign(sample.frame_ticks.size(), {});
  const double area = double(spec.width) * spec.height;
  for (std::size_t i = 0; i < sample.frame_ticks.size(); ++i) {
    const int t = sample.frame_ticks[i];
    const std::int64_t t_ms = tick_ms(t, spec.gaze_hz);
    for (int k = t - 1; k >= 0 && tick_ms(k, spec.gaze_hz) >= t_ms - spec.flow_window_ms; --k) {
      WindowTruth w;
      w.tick = k;
      w.tau_ms = tick_ms(k, spec.gaze_hz);
      if (const auto it = sample.script.occluders.find(k); it != sample.script.occluders.end()) {
        w.covered_fraction = double(it->second.w) * it->second.h / area;
        w.occluded = w.covered_fraction > kTruthEta;
      }
      sample.window_truth[i].push_back(w);
    }
    std::reverse(sample.window_truth[i].begin(), sample.window_truth[i].end());
  }
}

void generate_gaze_trace(SyntheticSample &sample, RngState &rng) {
  const auto &spec = sample.spec;
  const auto &script = sample.script;
  auto &jit = rng.stream("gaze/jitter");
  auto &plan = rng.stream("gaze/plan");
  const int n = script.n_ticks();
  const int target = script.target_index();
  std::vector<int> others;
  for (int j = 0; j < static_cast<int>(script.objects.size()); ++j) {
    if (j != target) others.push_back(j);
  }
  const int fix_len = std::max(1, static_cast<int>(std::lround(spec.fixation_ms * spec.gaze_hz / 1000.0)));
  // In the prediction task the wearer keeps working on another object until the last observed
  // second, then the gaze converges on the object of the upcoming interaction.
  const int converge_tick = (spec.n_frames() - 1) * spec.ticks_per_frame();

  sample.gaze.clear();
  sample.gaze_kind.clear();
  sample.gaze_object.clear();
  auto clamp_point = [&](double x, double y) {
    return std::pair<double, double>{std::clamp(x, 0.0, spec.width - 1.0), std::clamp(y, 0.0, spec.height - 1.0)};
  };
  auto emit = [&](int k, double x, double y, GazeKind kind, int obj) {
    const auto [cx, cy] = clamp_point(x, y);
    sample.gaze.push_back({tick_ms(k, spec.gaze_hz), cx, cy});
    sample.gaze_kind.push_back(kind);
    sample.gaze_object.push_back(obj);
  };
  auto jittered = [&](int obj, int k) {
    const Offset c = script.object_centroid(obj, k);
    return std::pair<double, double>{double(c.x + jit.integer(-spec.jitter_px, spec.jitter_px)),
                                     double(c.y + jit.integer(-spec.jitter_px, spec.jitter_px))};
  };
  auto saccade = [&](int &k, std::pair<double, double> from, std::pair<double, double> to, int count) {
    for (int i = 1; i <= count && k < n; ++i, ++k) {
      const double f = double(i) / double(count + 1);
      emit(k, from.first + f * (to.first - from.first), from.second + f * (to.second - from.second),
           GazeKind::saccade, -1);
    }
  };

  int k = 0;
  std::pair<double, double> last = jittered(target, 0);
  while (k < n) {
    int focus = target;
    if (spec.task == Task::predict && !others.empty() && k < converge_tick && plan.bernoulli(0.6)) {
      focus = others.front();
    }
    const GazeKind kind = focus == target ? GazeKind::target_fixation : GazeKind::glance;
    for (int i = 0; i < fix_len && k < n; ++i, ++k) {
      last = jittered(focus, k);
      emit(k, last.first, last.second, kind, focus);
    }
    if (k >= n) break;
    const int sacc = spec.saccade_samples > 0 ? static_cast<int>(plan.integer(1, spec.saccade_samples)) : 0;
    if (!others.empty() && plan.bernoulli(spec.glance_rate)) {
      const int d = others[static_cast<std::size_t>(plan.below(others.size()))];
      const auto at = jittered(d, std::min(k + sacc, n - 1));
      saccade(k, last, at, sacc);
      const int dwell = static_cast<int>(plan.integer(1, 2));
      for (int i = 0; i < dwell && k < n; ++i, ++k) {
        last = jittered(d, k);
        emit(k, last.first, last.second, GazeKind::glance, d);
      }
      const auto back = jittered(target, std::min(k + sacc, n - 1));
      saccade(k, last, back, sacc);
    } else {
      const auto next = jittered(target, std::min(k + sacc, n - 1));
      saccade(k, last, next, sacc);
    }
  }
}

SyntheticSample generate_scene(const SceneSpec &spec, RngState &rng) {
  spec.validate();
  if (spec.n_objects > 1 + 2 * kCatalogueSize) throw ConfigError("too many objects");
  SyntheticSample s;
  s.spec = spec;
  auto &layout = rng.stream("scene/layout");
  auto &motion = rng.stream("scene/motion");
  auto &texture = rng.stream("scene/texture");
  auto &occlusion = rng.stream("scene/occlusion");

  const int tpf = spec.ticks_per_frame();
  const int observed_ticks = (spec.n_frames() - 1) * tpf + 1;
  const int n_ticks = spec.task == Task::predict ? observed_ticks + spec.anticipate_s * spec.gaze_hz : observed_ticks;

  SceneScript &script = s.script;
  script.width = spec.width;
  script.height = spec.height;
  script.camera = bounded_walk(n_ticks, spec.motion_px_per_frame, spec.camera_amplitude_px, motion);
  script.target_wander = bounded_walk(n_ticks, spec.motion_px_per_frame, spec.target_wander_px, motion);
  script.background = toroidal_texture(spec.width, spec.height, 0.4, std::max(spec.noise_sigma, 0.02), texture);

  // Layout: distractors first, the target last so it is drawn on top.
  const int label = static_cast<int>(layout.below(static_cast<std::uint64_t>(spec.n_classes)));
  const int margin = spec.camera_amplitude_px + spec.target_wander_px;
  std::vector<Box> placed;
  for (int j = 0; j < spec.n_objects; ++j) {
    const bool is_target = j == spec.n_objects - 1;
    SceneObject o;
    o.is_target = is_target;
    o.cls = is_target ? label : static_cast<int>(layout.below(static_cast<std::uint64_t>(spec.n_classes)));
    o.shape = (o.cls % 2 == 0) ? Shape::square : Shape::disc;
    o.size = is_target ? spec.target_size : spec.distractor_size;
    o.intensity = is_target || spec.clutter_intensity < 0.0 ? class_intensity(o.cls, spec.n_classes)
                                                            : spec.clutter_intensity + 0.1 * double(o.cls) / std::max(1, spec.n_classes - 1);
    const int lo = margin, hi_x = spec.width - o.size - margin, hi_y = spec.height - o.size - margin;
    if (hi_x < lo || hi_y < lo) throw PlacementError("objects do not fit inside the frame margins");
    bool ok = false;
    for (int attempt = 0; attempt < 1000 && !ok; ++attempt) {
      const int x = static_cast<int>(layout.integer(lo, hi_x)), y = static_cast<int>(layout.integer(lo, hi_y));
      const Box b{x, y, x + o.size, y + o.size};
      const int gap = 2 + 2 * spec.target_wander_px;
      if (std::none_of(placed.begin(), placed.end(), [&](const Box &p) { return p.overlaps(b, gap); })) {
        placed.push_back(b);
        o.anchor_x = x;
        o.anchor_y = y;
        ok = true;
      }
    }
    if (!ok) throw PlacementError("could not place " + std::to_string(spec.n_objects) + " objects without overlap");
    o.texture.resize(o.size, o.size);
    for (Eigen::Index i = 0; i < o.texture.size(); ++i) o.texture.data()[i] = spec.noise_sigma * texture.normal();
    script.objects.push_back(std::move(o));
  }

  for (int i = 0; i < spec.n_frames(); ++i) s.frame_ticks.push_back(i * tpf);

  // Occluders live on non-current ticks inside each frame's flow window.
  for (const int t : s.frame_ticks) {
    const std::int64_t t_ms = tick_ms(t, spec.gaze_hz);
    for (int k = t - 1; k >= 0 && tick_ms(k, spec.gaze_hz) >= t_ms - spec.flow_window_ms; --k) {
      if (occlusion.bernoulli(spec.occlusion_rate)) {
        script.occluders[k] = major_occluder_over_target(script, k, &occlusion);
      } else if (occlusion.bernoulli(spec.minor_occlusion_rate)) {
        if (auto o = minor_occluder(script, k, occlusion)) script.occluders[k] = *o;
      }
    }
  }

  for (const int t : s.frame_ticks) s.frames.push_back(script.render(t));
  s.label = label;
  s.label_text = "looking at the " + class_name(label);
  refresh_window_truth(s);
  generate_gaze_trace(s, rng);
  return s;
}

SyntheticSample inject_occlusion(SyntheticSample sample, const std::vector<int> &ticks) {
  for (const int k : ticks) {
    if (k < 0 || k >= sample.script.n_ticks()) throw DomainError("inject_occlusion: tick out of range");
    sample.script.occluders[k] = major_occluder_over_target(sample.script, k, nullptr);
  }
  for (std::size_t i = 0; i < sample.frame_ticks.size(); ++i) {
    if (std::find(ticks.begin(), ticks.end(), sample.frame_ticks[i]) != ticks.end()) {
      sample.frames[i] = sample.script.render(sample.frame_ticks[i]);
    }
  }
  refresh_window_truth(sample);
  return sample;
}

} // namespace gazereg
