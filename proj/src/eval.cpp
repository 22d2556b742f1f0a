#include "gazereg/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>

#include "gazereg/dataset_io.hpp"

namespace gazereg {

using nlohmann::json;

std::vector<int> topk_indices(const Vector &v, int k) {
  if (k < 1 || k > v.size()) {
    throw DomainError("top-k: k=" + std::to_string(k) + " outside [1, " + std::to_string(v.size()) + "]");
  }
  std::vector<int> idx(static_cast<std::size_t>(v.size()));
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return v[a] > v[b]; });
  idx.resize(static_cast<std::size_t>(k));
  return idx;
}

double topk_overlap(const Vector &a, const Vector &b, int k) {
  if (a.size() != b.size()) throw DimensionError("topk_overlap: lengths differ");
  auto ta = topk_indices(a, k), tb = topk_indices(b, k);
  std::sort(ta.begin(), ta.end());
  std::sort(tb.begin(), tb.end());
  std::vector<int> common;
  std::set_intersection(ta.begin(), ta.end(), tb.begin(), tb.end(), std::back_inserter(common));
  return double(common.size()) / double(k);
}

EvalReport evaluate(const ModelParams &params, const ModelConfig &cfg, const Dataset &data, int k,
                    const EvalOptions &opts) {
  check_dataset(data, cfg);
  EvalReport r;
  r.overlap.k = k;
  r.n_samples = static_cast<int>(data.size());
  int correct = 0;
  double kl_sum = 0.0;
  for (const auto &b : data) {
    AttentionRecord rec;
    const LossBreakdown loss = total_loss(b, params, cfg, &rec);
    correct += loss.predicted == b.label;
    for (std::size_t t = 0; t < b.frames.size(); ++t) {
      const Vector &a = opts.oracle_attention ? b.targets[t] : rec.weights[t];
      r.overlap.per_frame.push_back(topk_overlap(a, b.targets[t], k));
      kl_sum += kl_regularizer(a, b.targets[t], cfg.kl_floor);
    }
  }
  r.overlap.n_frames = static_cast<int>(r.overlap.per_frame.size());
  r.accuracy = double(correct) / double(data.size());
  r.overlap.mean = std::accumulate(r.overlap.per_frame.begin(), r.overlap.per_frame.end(), 0.0) / r.overlap.n_frames;
  r.mean_kl = kl_sum / r.overlap.n_frames;
  return r;
}

json report_json(const EvalReport &r, const std::string &config_hash) {
  return json{{"accuracy", r.accuracy}, {"mean_overlap", r.overlap.mean}, {"k", r.overlap.k},
              {"mean_kl", r.mean_kl},   {"n_samples", r.n_samples},     {"config_hash", config_hash}};
}

// --- ablation --------------------------------------------------------------------

std::vector<Variant> parse_variants(const std::string &text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0 || eq + 1 == text.size()) {
    throw ConfigError("variant axis '" + text + "' must look like axis=v1,v2");
  }
  std::string axis = text.substr(0, eq);
  if (axis == "λ") axis = "lambda";
  if (axis != "lambda" && axis != "mode" && axis != "points") {
    throw ConfigError("unknown variant axis '" + axis + "' (expected lambda|mode|points)");
  }
  std::vector<Variant> out;
  std::size_t start = eq + 1;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const std::string value = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    if (value.empty()) throw ConfigError("empty value in variant axis '" + text + "'");
    out.push_back({axis, value});
    apply_variant(RunConfig{}, out.back()); // validates the value
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

RunConfig apply_variant(RunConfig base, const Variant &v) {
  const ConfigError bad("bad variant value '" + v.label() + "'");
  std::size_t used = 0;
  try {
    if (v.axis == "lambda") {
      base.model.lambda = std::stod(v.value, &used);
      if (used != v.value.size() || !(base.model.lambda >= 0.0) || !std::isfinite(base.model.lambda)) throw bad;
    } else if (v.axis == "mode") {
      base.supervision.mode = mode_from_string(v.value);
    } else if (v.axis == "points") {
      const int n = std::stoi(v.value, &used);
      if (used != v.value.size() || n < 1) throw bad;
      base.supervision.aggregation.max_points = n;
      base.supervision.aggregation.window_ms = std::llround(double(n) * 1000.0 / double(base.scene.gaze_hz));
    } else {
      throw ConfigError("unknown variant axis '" + v.axis + "'");
    }
  } catch (const std::logic_error &) {
    throw bad;
  }
  return base;
}

std::vector<AblationResult> run_ablation(const RunConfig &base, const std::vector<Variant> &variants,
                                         const std::vector<std::uint64_t> &seeds,
                                         const std::function<void(const AblationResult &)> &progress) {
  if (variants.empty()) throw ConfigError("ablation needs at least one variant");
  if (seeds.empty()) throw ConfigError("ablation needs at least one seed");
  base.validate();
  std::vector<AblationResult> out;
  for (const auto seed : seeds) {
    const auto train_samples = generate_split(base.scene, seed, base.train_count, "train");
    const auto test = generate_split(base.scene, seed, base.test_count, "test");
    Dataset test_data;
    for (const auto &s : test) test_data.push_back(truth_batch(s, base.supervision));

    // Targets depend only on the supervision config; λ cells share them.
    std::map<std::string, Dataset> train_cache;
    for (const auto &v : variants) {
      const RunConfig cell = apply_variant(base, v);
      AblationResult r;
      r.variant = v.label();
      r.seed = seed;
      try {
        cell.validate();
        const std::string key = supervision_hash(cell.supervision);
        auto it = train_cache.find(key);
        if (it == train_cache.end()) {
          Dataset d;
          for (const auto &s : train_samples) d.push_back(supervised_batch(s, cell.supervision));
          it = train_cache.emplace(key, std::move(d)).first;
        }
        ModelConfig mc = cell.model;
        mc.seed = seed;
        const TrainResult tr = train(it->second, mc);
        const EvalReport rep = evaluate(tr.params, mc, test_data, cell.topk);
        r.ok = true;
        r.accuracy = rep.accuracy;
        r.mean_overlap = rep.overlap.mean;
        r.mean_kl = rep.mean_kl;
        r.log = tr.log;
      } catch (const TrainingDiverged &e) {
        r.error = std::string(e.what()) + " (last finite epoch " + std::to_string(e.last_finite_epoch()) + ")";
      } catch (const Error &e) {
        r.error = e.what();
      }
      if (progress) progress(r);
      out.push_back(std::move(r));
    }
  }
  return out;
}

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

} // namespace

std::string ablation_csv(const std::vector<AblationResult> &results) {
  std::string out = "variant,seed,accuracy,mean_overlap,mean_kl\n";
  for (const auto &r : results) {
    out += r.variant + "," + std::to_string(r.seed) + ",";
    out += r.ok ? num(r.accuracy) + "," + num(r.mean_overlap) + "," + num(r.mean_kl) : std::string("nan,nan,nan");
    out += "\n";
  }
  return out;
}

json ablation_json(const std::vector<AblationResult> &results, const std::string &config_hash) {
  json cells = json::array();
  for (const auto &r : results) {
    json c{{"variant", r.variant}, {"seed", r.seed}, {"ok", r.ok}};
    if (r.ok) {
      c["accuracy"] = r.accuracy;
      c["mean_overlap"] = r.mean_overlap;
      c["mean_kl"] = r.mean_kl;
    } else {
      c["error"] = r.error;
    }
    cells.push_back(std::move(c));
  }
  json summary = json::array();
  for (const auto &s : summarize(results)) {
    summary.push_back({{"variant", s.variant},
                       {"n_ok", s.n_ok},
                       {"accuracy", s.accuracy},
                       {"mean_overlap", s.mean_overlap},
                       {"mean_kl", s.mean_kl}});
  }
  return json{{"config_hash", config_hash}, {"cells", std::move(cells)}, {"summary", std::move(summary)}};
}

std::vector<VariantSummary> summarize(const std::vector<AblationResult> &results) {
  std::vector<VariantSummary> out;
  for (const auto &r : results) {
    auto it = std::find_if(out.begin(), out.end(), [&](const VariantSummary &s) { return s.variant == r.variant; });
    if (it == out.end()) {
      out.push_back({r.variant});
      it = std::prev(out.end());
    }
    if (!r.ok) continue;
    ++it->n_ok;
    it->accuracy += r.accuracy;
    it->mean_overlap += r.mean_overlap;
    it->mean_kl += r.mean_kl;
  }
  for (auto &s : out) {
    if (s.n_ok == 0) {
      s.accuracy = s.mean_overlap = s.mean_kl = std::nan("");
      continue;
    }
    s.accuracy /= s.n_ok;
    s.mean_overlap /= s.n_ok;
    s.mean_kl /= s.n_ok;
  }
  return out;
}

// --- render ----------------------------------------------------------------------

Tensor patch_grid_image(const Vector &probs, const PatchGrid &grid) {
  if (probs.size() != grid.count()) throw GeometryError("patch vector length does not match the grid");
  Tensor out(grid.n_v, grid.n_h);
  for (int i = 0; i < grid.count(); ++i) out(i / grid.n_h, i % grid.n_h) = probs[i];
  return out;
}

Bytes render_heatmap_pgm(const Frame &frame, const Tensor &overlay) {
  if (overlay.rows() == 0 || overlay.cols() == 0 || frame.rows() % overlay.rows() != 0 ||
      frame.cols() % overlay.cols() != 0 || frame.rows() / overlay.rows() != frame.cols() / overlay.cols()) {
    throw GeometryError("overlay " + detail::shape_str(overlay.rows(), overlay.cols()) + " does not fit frame " +
                        detail::shape_str(frame.rows(), frame.cols()));
  }
  if ((overlay.array() < 0.0).any() || !overlay.allFinite()) throw DomainError("overlay must be finite and nonnegative");
  const Eigen::Index cell = frame.rows() / overlay.rows();
  const double peak = overlay.maxCoeff();
  MatrixX<std::uint8_t> px(frame.rows(), frame.cols());
  for (Eigen::Index y = 0; y < frame.rows(); ++y) {
    for (Eigen::Index x = 0; x < frame.cols(); ++x) {
      const double o = peak > 0.0 ? overlay(y / cell, x / cell) / peak : 0.0;
      const double v = 0.5 * std::clamp(frame(y, x), 0.0, 1.0) + 0.5 * o;
      px(y, x) = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
  }
  return encode_pgm8(px);
}

} // namespace gazereg
