#include "gazereg/gaze.hpp"

#include <charconv>
#include <cstdio>
#include <sstream>

namespace gazereg {

void SmoothingConfig::validate() const {
  if (!(sigma > 0.0)) throw DomainError("smoothing sigma must be positive");
}

void AggregationConfig::validate() const {
  if (window_ms <= 0) throw DomainError("aggregation window_ms must be positive");
  if (max_points < 1) throw DomainError("aggregation max_points must be >= 1");
}

PatchGrid PatchGrid::tiling(int width, int height, int patch_px) {
  if (patch_px <= 0 || width <= 0 || height <= 0 || width % patch_px != 0 || height % patch_px != 0) {
    throw GeometryError("patch size " + std::to_string(patch_px) + " does not tile a " + std::to_string(width) +
                        "x" + std::to_string(height) + " frame");
  }
  return {width / patch_px, height / patch_px, patch_px};
}

Heatmap make_heatmap(const GazeSample &g, FrameDims dims, const SmoothingConfig &cfg) {
  cfg.validate();
  if (!dims.contains(g.x, g.y)) {
    throw BoundsError("gaze (" + std::to_string(g.x) + ", " + std::to_string(g.y) + ") outside " +
                      std::to_string(dims.width) + "x" + std::to_string(dims.height) + " frame");
  }
  const Tensor kernel = gaussian_kernel_2d(cfg.sigma);
  const int r = static_cast<int>(kernel.rows() / 2);
  const int gx = std::min(static_cast<int>(std::lround(g.x)), dims.width - 1);
  const int gy = std::min(static_cast<int>(std::lround(g.y)), dims.height - 1);

  // Overlap of the kernel footprint with the frame.
  const int x0 = std::max(0, gx - r), x1 = std::min(dims.width - 1, gx + r);
  const int y0 = std::max(0, gy - r), y1 = std::min(dims.height - 1, gy + r);

  Heatmap h;
  h.mass = Tensor::Zero(dims.height, dims.width);
  h.mass.block(y0, x0, y1 - y0 + 1, x1 - x0 + 1) =
      kernel.block(y0 - gy + r, x0 - gx + r, y1 - y0 + 1, x1 - x0 + 1);
  h.mass = normalize_nonneg(h.mass);
  h.normalized = true;
  return h;
}

Heatmap make_singular(const GazeSample &g, FrameDims dims, const SmoothingConfig &cfg) {
  return make_heatmap(g, dims, cfg);
}

std::vector<GazeSample> select_window(const std::vector<GazeSample> &trace, std::int64_t t_ms,
                                      const AggregationConfig &cfg) {
  cfg.validate();
  std::vector<GazeSample> out;
  for (const auto &s : trace) {
    if (s.timestamp_ms >= t_ms - cfg.window_ms && s.timestamp_ms <= t_ms) out.push_back(s);
  }
  if (out.size() > static_cast<std::size_t>(cfg.max_points)) {
    out.erase(out.begin(), out.end() - cfg.max_points);
  }
  return out;
}

Heatmap warp_heatmap(const Heatmap &m, const FlowField &flow) {
  if (flow.width() != m.width() || flow.height() != m.height()) {
    throw DimensionError("warp_heatmap: heatmap is " + detail::shape_str(m.height(), m.width()) +
                         ", flow is " + detail::shape_str(flow.height(), flow.width()));
  }
  const int h = m.height(), w = m.width();
  Heatmap out;
  out.mass = Tensor::Zero(h, w);
  auto deposit = [&](long x, long y, double amount) {
    if (x >= 0 && y >= 0 && x < w && y < h) out.mass(y, x) += amount;
  };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double mass = m.mass(y, x);
      if (mass == 0.0) continue;
      const double tx = x + flow.u(y, x), ty = y + flow.v(y, x);
      const double fx0 = std::floor(tx), fy0 = std::floor(ty);
      const double ax = tx - fx0, ay = ty - fy0;
      const long ix = static_cast<long>(fx0), iy = static_cast<long>(fy0);
      deposit(ix, iy, mass * (1.0 - ax) * (1.0 - ay));
      if (ax > 0.0) deposit(ix + 1, iy, mass * ax * (1.0 - ay));
      if (ay > 0.0) deposit(ix, iy + 1, mass * (1.0 - ax) * ay);
      if (ax > 0.0 && ay > 0.0) deposit(ix + 1, iy + 1, mass * ax * ay);
    }
  }
  return out;
}

Heatmap aggregate_window(const std::vector<WindowEntry> &entries) {
  if (entries.empty()) throw EmptyInputError("aggregate_window: no entries");
  Tensor sum;
  for (const auto &e : entries) {
    if (!e.participates()) continue;
    const Heatmap warped = warp_heatmap(e.map, e.flow_to_t);
    if (sum.size() == 0) {
      sum = warped.mass;
    } else {
      if (sum.rows() != warped.mass.rows() || sum.cols() != warped.mass.cols()) {
        throw DimensionError("aggregate_window: entries disagree on frame size");
      }
      sum += warped.mass;
    }
  }
  if (sum.size() == 0) throw ZeroMassError("aggregate_window: every entry is occluded");
  Heatmap out;
  out.mass = normalize_nonneg(sum);
  out.normalized = true;
  return out;
}

PatchDistribution patchify(const Heatmap &h, const PatchGrid &grid) {
  if (grid.patch_px <= 0 || grid.width() != h.width() || grid.height() != h.height()) {
    throw GeometryError("patchify: " + std::to_string(grid.n_h) + "x" + std::to_string(grid.n_v) + " grid of " +
                        std::to_string(grid.patch_px) + " px does not tile a " + std::to_string(h.width()) + "x" +
                        std::to_string(h.height()) + " heatmap");
  }
  const double z = h.total();
  if (!(z > 0.0)) throw ZeroMassError("patchify: heatmap has no mass");
  PatchDistribution p(grid.count());
  for (int r = 0; r < grid.n_v; ++r) {
    for (int c = 0; c < grid.n_h; ++c) {
      p[r * grid.n_h + c] = h.mass.block(r * grid.patch_px, c * grid.patch_px, grid.patch_px, grid.patch_px).sum() / z;
    }
  }
  return p;
}

PatchDistribution uniform_distribution(int n) {
  if (n <= 0) throw DomainError("uniform_distribution: n must be positive");
  return PatchDistribution::Constant(n, 1.0 / n);
}

// --- persistence -----------------------------------------------------------------

namespace {

std::vector<std::string> split(const std::string &line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(sep, start);
    out.push_back(line.substr(start, pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

template <typename T> T parse_number(const std::string &field, const char *what) {
  T value{};
  const char *first = field.data();
  const char *last = field.data() + field.size();
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) throw FormatError(std::string("cannot parse ") + what + " '" + field + "'");
  return value;
}

std::string format_double(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

} // namespace

std::vector<GazeSample> parse_gaze_csv(const std::string &text, std::optional<FrameDims> dims) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "timestamp_ms,x,y") {
    throw FormatError("gaze csv: expected header 'timestamp_ms,x,y'");
  }
  std::vector<GazeSample> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto fields = split(line, ',');
    if (fields.size() != 3) throw FormatError("gaze csv line " + std::to_string(lineno) + ": expected 3 fields");
    GazeSample s{parse_number<std::int64_t>(fields[0], "timestamp"), parse_number<double>(fields[1], "x"),
                 parse_number<double>(fields[2], "y")};
    if (dims && !dims->contains(s.x, s.y)) {
      throw BoundsError("gaze csv line " + std::to_string(lineno) + ": sample outside frame");
    }
    if (!out.empty() && s.timestamp_ms <= out.back().timestamp_ms) {
      throw FormatError("gaze csv line " + std::to_string(lineno) + ": timestamps must strictly increase");
    }
    out.push_back(s);
  }
  return out;
}

std::string format_gaze_csv(const std::vector<GazeSample> &trace) {
  std::string out = "timestamp_ms,x,y\n";
  for (const auto &s : trace) {
    out += std::to_string(s.timestamp_ms) + "," + format_double(s.x) + "," + format_double(s.y) + "\n";
  }
  return out;
}

Bytes encode_heatmap(const Heatmap &h) {
  Bytes out;
  put_raw(out, "GZHM");
  put_u32(out, 1);
  put_u32(out, static_cast<std::uint32_t>(h.width()));
  put_u32(out, static_cast<std::uint32_t>(h.height()));
  for (Eigen::Index i = 0; i < h.mass.size(); ++i) put_f32(out, static_cast<float>(h.mass.data()[i]));
  return out;
}

Heatmap decode_heatmap(const Bytes &bytes) {
  ByteReader in(bytes);
  if (bytes.size() < 4 || in.raw(4) != "GZHM") throw FormatError("heatmap: bad magic (expected GZHM)");
  const std::uint32_t version = in.u32();
  if (version != 1) throw FormatError("heatmap: unsupported version " + std::to_string(version));
  const std::uint32_t w = in.u32(), h = in.u32();
  if (in.remaining() != std::size_t(w) * h * 4) throw LengthError("heatmap: payload length does not match header");
  Heatmap out;
  out.mass.resize(h, w);
  for (Eigen::Index i = 0; i < out.mass.size(); ++i) out.mass.data()[i] = in.f32();
  if ((out.mass.array() < 0).any() || !out.mass.allFinite()) throw FormatError("heatmap: negative or non-finite mass");
  out.normalized = std::abs(out.mass.sum() - 1.0) < 1e-6;
  return out;
}

std::string format_patch_row(const std::string &frame_id, const PatchDistribution &p) {
  std::string out = frame_id;
  for (Eigen::Index i = 0; i < p.size(); ++i) out += "," + format_double(p[i]);
  return out;
}

std::pair<std::string, PatchDistribution> parse_patch_row(const std::string &line) {
  const auto fields = split(line, ',');
  if (fields.size() < 2) throw FormatError("patch row: expected frame_id and at least one probability");
  PatchDistribution p(static_cast<Eigen::Index>(fields.size() - 1));
  for (std::size_t i = 1; i < fields.size(); ++i) p[Eigen::Index(i - 1)] = parse_number<double>(fields[i], "probability");
  return {fields[0], p};
}

} // namespace gazereg
