#pragma once

#include "gazereg/bytes.hpp"
#include "gazereg/image.hpp"
#include "gazereg/numerics.hpp"

namespace gazereg {

/// Dense displacement field. `u` is horizontal (columns), `v` vertical (rows), in pixels.
struct FlowField {
  Tensor u;
  Tensor v;

  FlowField() = default;
  FlowField(Tensor u_, Tensor v_);

  static FlowField zeros(Eigen::Index width, Eigen::Index height);
  static FlowField uniform(Eigen::Index width, Eigen::Index height, double du, double dv);

  Eigen::Index width() const { return u.cols(); }
  Eigen::Index height() const { return u.rows(); }
  bool same_dims(const FlowField &o) const { return width() == o.width() && height() == o.height(); }
};

struct OcclusionConfig {
  double eps = 20.0; ///< pixel distance above which a pixel counts as inconsistent
  double eta = 0.60; ///< fraction of inconsistent pixels above which the frame is occluded

  void validate() const;
};

struct OcclusionVerdict {
  bool occluded = false;
  double observed_ratio = 0.0;
  Tensor discrepancy; ///< per-pixel forward/backward mismatch

  static OcclusionVerdict valid() { return {}; }
  static OcclusionVerdict rejected() { return {true, 1.0, Tensor()}; }
};

/// Middlebury .flo: float 202021.25 ("PIEH"), int32 width, int32 height, then
/// interleaved (u, v) float32 pairs in row-major order. All little-endian.
Bytes write_flo(const FlowField &f);
FlowField read_flo(const Bytes &bytes);

/// Exhaustive SAD block matching from `a` to `b`. For each block the displacement in
/// [-radius, radius]^2 (restricted to candidates that keep the block inside `b`) with the
/// lowest sum of absolute differences wins; ties go to the smaller |d|^2, then to the
/// first candidate in row-major (dy, dx) scan order. The block's vector fills its pixels.
FlowField estimate_flow_blockmatch(const Frame &a, const Frame &b, int block, int radius);

/// Forward/backward consistency check between frame tau and frame t.
///   p_hat = p + fwd(p);  delta(p) = || fwd(p) + bwd(p_hat) ||_2
/// `bwd` is sampled bilinearly; out-of-frame p_hat samples a zero vector.
/// observed_ratio = #{delta > eps} / (H*W); occluded iff observed_ratio > eta.
OcclusionVerdict occlusion_check(const FlowField &fwd, const FlowField &bwd, const OcclusionConfig &cfg);

} // namespace gazereg
