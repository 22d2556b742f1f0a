#pragma once

// Alignment and task metrics, the ablation harness, and heatmap renders.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "gazereg/bytes.hpp"
#include "gazereg/config.hpp"
#include "gazereg/image.hpp"
#include "gazereg/model.hpp"

namespace gazereg {

/// Indices of the k largest entries, largest first; equal values keep ascending index order.
std::vector<int> topk_indices(const Vector &v, int k);

/// |top-k(a) ∩ top-k(b)| / k. DomainError unless 1 <= k <= P; DimensionError on length mismatch.
double topk_overlap(const Vector &a, const Vector &b, int k);

struct OverlapReport {
  int k = 10;
  std::vector<double> per_frame; ///< (sample, frame) pairs in dataset order
  double mean = 0.0;
  int n_frames = 0;
};

struct EvalReport {
  double accuracy = 0.0;
  OverlapReport overlap;
  double mean_kl = 0.0; ///< mean over (sample, frame) pairs of KL(A_t || target_t)
  int n_samples = 0;
};

struct EvalOptions {
  /// Replace every A_t by its target when scoring overlap and KL (accuracy is unaffected).
  bool oracle_attention = false;
};

EvalReport evaluate(const ModelParams &params, const ModelConfig &cfg, const Dataset &data, int k,
                    const EvalOptions &opts = {});

/// {accuracy, mean_overlap, k, mean_kl, n_samples, config_hash}
nlohmann::json report_json(const EvalReport &r, const std::string &config_hash);

// --- ablation --------------------------------------------------------------------

struct Variant {
  std::string axis;  ///< lambda | mode | points
  std::string value;
  std::string label() const { return axis + "=" + value; }
};

/// "lambda=0,100,1000", "mode=singular,aggregated", "points=6,12" ("λ" is accepted for lambda).
std::vector<Variant> parse_variants(const std::string &text);

/// The run configuration of one ablation cell. points=N also widens the window to N gaze ticks.
RunConfig apply_variant(RunConfig base, const Variant &v);

struct AblationResult {
  std::string variant;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  double accuracy = 0.0;
  double mean_overlap = 0.0;
  double mean_kl = 0.0;
  std::vector<EpochLog> log;
};

/// Trains and evaluates every (variant, seed) cell. Train data carries gaze-derived targets under
/// the cell's supervision config; test data carries ground-truth target distributions, so overlap
/// and KL measure alignment with where the target object really is. A diverging cell is recorded
/// with ok = false and the sweep continues.
std::vector<AblationResult> run_ablation(const RunConfig &base, const std::vector<Variant> &variants,
                                         const std::vector<std::uint64_t> &seeds,
                                         const std::function<void(const AblationResult &)> &progress = {});

std::string ablation_csv(const std::vector<AblationResult> &results);
nlohmann::json ablation_json(const std::vector<AblationResult> &results, const std::string &config_hash);

struct VariantSummary {
  std::string variant;
  int n_ok = 0;
  double accuracy = 0.0;
  double mean_overlap = 0.0;
  double mean_kl = 0.0;
};

/// Seed-averaged means per variant, in first-appearance order.
std::vector<VariantSummary> summarize(const std::vector<AblationResult> &results);

// --- render ----------------------------------------------------------------------

/// 8-bit P5 image: 0.5 * frame + 0.5 * overlay / max(overlay). The overlay is either frame-sized or
/// a patch grid whose cells are upsampled by nearest neighbour. GeometryError otherwise.
Bytes render_heatmap_pgm(const Frame &frame, const Tensor &overlay);

/// A length-P patch vector laid out on its n_v x n_h grid.
Tensor patch_grid_image(const Vector &probs, const PatchGrid &grid);

} // namespace gazereg
