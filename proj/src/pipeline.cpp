#include "gazereg/pipeline.hpp"

#include <charconv>

namespace gazereg {

std::string to_string(SupervisionMode m) { return m == SupervisionMode::aggregated ? "aggregated" : "singular"; }

SupervisionMode mode_from_string(const std::string &s) {
  if (s == "aggregated") return SupervisionMode::aggregated;
  if (s == "singular") return SupervisionMode::singular;
  throw ConfigError("unknown supervision mode '" + s + "' (expected aggregated|singular)");
}

void SupervisionConfig::validate() const {
  smoothing.validate();
  aggregation.validate();
  occlusion.validate();
  if (patch_px <= 0) throw ConfigError("patch_px must be positive");
}

FlowLookup synthetic_flow_lookup(const SyntheticSample &sample) {
  return [&sample](std::int64_t t_ms, std::int64_t tau_ms) -> std::optional<FlowPair> {
    const auto t = sample.tick_at_ms(t_ms), tau = sample.tick_at_ms(tau_ms);
    if (!t || !tau) return std::nullopt;
    return FlowPair{sample.script.flow(*tau, *t), sample.script.flow(*t, *tau)};
  };
}

std::string flow_file_name(std::int64_t dst_ms, std::int64_t src_ms) {
  return std::to_string(dst_ms) + "_" + std::to_string(src_ms) + ".flo";
}

std::optional<std::pair<std::int64_t, std::int64_t>> parse_flow_file_name(const std::string &name) {
  constexpr std::string_view ext = ".flo";
  if (name.size() <= ext.size() || name.compare(name.size() - ext.size(), ext.size(), ext) != 0) return std::nullopt;
  const std::string stem = name.substr(0, name.size() - ext.size());
  const auto us = stem.find('_');
  if (us == std::string::npos || us == 0 || us + 1 == stem.size()) return std::nullopt;
  std::int64_t a = 0, b = 0;
  const auto r1 = std::from_chars(stem.data(), stem.data() + us, a);
  const auto r2 = std::from_chars(stem.data() + us + 1, stem.data() + stem.size(), b);
  if (r1.ec != std::errc() || r1.ptr != stem.data() + us || r2.ec != std::errc() ||
      r2.ptr != stem.data() + stem.size() || a < 0 || b < 0) {
    return std::nullopt;
  }
  return std::pair{a, b};
}

FlowLookup directory_flow_lookup(std::filesystem::path dir) {
  return [dir = std::move(dir)](std::int64_t t_ms, std::int64_t tau_ms) -> std::optional<FlowPair> {
    const auto fwd = dir / flow_file_name(t_ms, tau_ms);
    const auto bwd = dir / flow_file_name(tau_ms, t_ms);
    if (!std::filesystem::exists(fwd) || !std::filesystem::exists(bwd)) return std::nullopt;
    return FlowPair{read_flo(read_file(fwd)), read_flo(read_file(bwd))};
  };
}

FrameSupervision supervise_frame(const std::vector<GazeSample> &trace, std::int64_t t_ms, FrameDims dims,
                                 const SupervisionConfig &cfg, const FlowLookup &flows) {
  cfg.validate();
  const PatchGrid grid = PatchGrid::tiling(dims.width, dims.height, cfg.patch_px);
  const auto window = select_window(trace, t_ms, cfg.aggregation);
  FrameSupervision out;

  auto fallback = [&](const std::string &why) {
    out.heatmap = Heatmap{};
    out.target = uniform_distribution(grid.count());
    out.substituted = true;
    out.warnings.push_back("frame at " + std::to_string(t_ms) + " ms: " + why + "; using a uniform target");
  };

  if (window.empty()) {
    fallback("no gaze samples in window");
    return out;
  }

  if (cfg.mode == SupervisionMode::singular) {
    out.heatmap = make_singular(window.back(), dims, cfg.smoothing);
    out.target = patchify(out.heatmap, grid);
    return out;
  }

  std::vector<WindowEntry> entries;
  entries.reserve(window.size());
  for (const auto &g : window) {
    WindowEntry e;
    e.map = make_heatmap(g, dims, cfg.smoothing);
    if (g.timestamp_ms == t_ms) {
      e.current = true;
      e.flow_to_t = FlowField::zeros(dims.width, dims.height);
      e.verdict = OcclusionVerdict::valid();
    } else if (auto pair = flows(t_ms, g.timestamp_ms)) {
      e.verdict = occlusion_check(pair->tau_to_t, pair->t_to_tau, cfg.occlusion);
      e.flow_to_t = std::move(pair->tau_to_t);
      e.verdict.discrepancy.resize(0, 0);
      out.occlusion_log.push_back({g.timestamp_ms, e.verdict.observed_ratio, e.verdict.occluded, false});
    } else {
      e.verdict = OcclusionVerdict::rejected();
      out.occlusion_log.push_back({g.timestamp_ms, 1.0, true, true});
      out.warnings.push_back("missing flow " + flow_file_name(t_ms, g.timestamp_ms) + "; treating " +
                             std::to_string(g.timestamp_ms) + " ms as occluded");
    }
    entries.push_back(std::move(e));
  }

  try {
    out.heatmap = aggregate_window(entries);
    out.target = patchify(out.heatmap, grid);
  } catch (const ZeroMassError &) {
    fallback("no valid gaze mass after occlusion filtering");
  }
  return out;
}

} // namespace gazereg
