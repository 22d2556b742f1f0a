#pragma once

// Dense arithmetic shared by every other module.
//
// All matrices are row-major Eigen types so that `data()` walks the same order as the
// on-disk formats (heatmaps, checkpoints). Products go through Eigen's single-threaded
// GEMM kernels; for a given build the summation order is fixed, so results are
// bit-reproducible run to run.

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <string_view>

#include <Eigen/Core>

#include "gazereg/errors.hpp"

namespace gazereg {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar> using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar> using RowVectorX = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using Tensor = MatrixX<double>;
using Vector = VectorX<double>;
using RowVector = RowVectorX<double>;

namespace detail {
inline std::string shape_str(Eigen::Index r, Eigen::Index c) {
  std::ostringstream os;
  os << r << "x" << c;
  return os.str();
}
} // namespace detail

template <typename Derived> bool all_finite(const Eigen::DenseBase<Derived> &x) {
  return x.derived().allFinite();
}

/// Matrix product with an explicit shape check and a finiteness check on the result.
template <typename A, typename B>
MatrixX<typename A::Scalar> matmul(const Eigen::MatrixBase<A> &a, const Eigen::MatrixBase<B> &b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions differ (" + detail::shape_str(a.rows(), a.cols()) +
                         " x " + detail::shape_str(b.rows(), b.cols()) + ")");
  }
  MatrixX<typename A::Scalar> out = a * b;
  if (!out.allFinite()) throw NumericError("matmul: non-finite result");
  return out;
}

/// Row-wise softmax with per-row max subtraction.
template <typename Derived>
MatrixX<typename Derived::Scalar> softmax_rows(const Eigen::MatrixBase<Derived> &x) {
  using Scalar = typename Derived::Scalar;
  MatrixX<Scalar> out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const Scalar m = x.row(r).maxCoeff();
    out.row(r) = (x.row(r).array() - m).exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

/// Softmax of a single vector, same stabilisation as softmax_rows.
template <typename Derived>
VectorX<typename Derived::Scalar> softmax(const Eigen::MatrixBase<Derived> &x) {
  using Scalar = typename Derived::Scalar;
  const Scalar m = x.maxCoeff();
  VectorX<Scalar> e = (x.array() - m).exp().matrix();
  return e / e.sum();
}

/// Isotropic Gaussian kernel of radius ceil(3 sigma), normalised to unit sum.
template <typename Scalar = double> MatrixX<Scalar> gaussian_kernel_2d(double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw DomainError("gaussian_kernel_2d: sigma must be positive, got " + std::to_string(sigma));
  }
  const auto r = static_cast<Eigen::Index>(std::ceil(3.0 * sigma));
  const Eigen::Index n = 2 * r + 1;
  MatrixX<Scalar> k(n, n);
  const Scalar denom = Scalar(2) * Scalar(sigma) * Scalar(sigma);
  for (Eigen::Index y = 0; y < n; ++y) {
    for (Eigen::Index x = 0; x < n; ++x) {
      const Scalar dx = Scalar(x - r), dy = Scalar(y - r);
      k(y, x) = std::exp(-(dx * dx + dy * dy) / denom);
    }
  }
  return k / k.sum();
}

/// Scale a nonnegative array to unit sum. Throws ZeroMassError when the total is zero.
template <typename Derived>
typename Derived::PlainObject normalize_nonneg(const Eigen::DenseBase<Derived> &x) {
  if ((x.derived().array() < 0).any()) throw DomainError("normalize_nonneg: negative entry");
  const auto total = x.sum();
  if (!(total > 0)) throw ZeroMassError("normalize_nonneg: total mass is zero");
  return x.derived() / total;
}

/// Bilinear interpolation of `field` at continuous (x, y), x along columns.
/// Points outside [0, w-1] x [0, h-1] sample as zero.
template <typename Derived>
typename Derived::Scalar bilinear_sample(const Eigen::MatrixBase<Derived> &field, double x, double y) {
  using Scalar = typename Derived::Scalar;
  const auto h = field.rows(), w = field.cols();
  if (!(x >= 0.0 && y >= 0.0 && x <= double(w - 1) && y <= double(h - 1))) return Scalar(0);
  const auto x0 = static_cast<Eigen::Index>(std::floor(x));
  const auto y0 = static_cast<Eigen::Index>(std::floor(y));
  const Scalar fx = Scalar(x - double(x0)), fy = Scalar(y - double(y0));
  const auto x1 = std::min<Eigen::Index>(x0 + 1, w - 1);
  const auto y1 = std::min<Eigen::Index>(y0 + 1, h - 1);
  const Scalar top = (Scalar(1) - fx) * field(y0, x0) + fx * field(y0, x1);
  const Scalar bottom = (Scalar(1) - fx) * field(y1, x0) + fx * field(y1, x1);
  return (Scalar(1) - fy) * top + fy * bottom;
}

/// Central-difference gradient: (f(p + h e_i) - f(p - h e_i)) / 2h.
Vector finite_diff_gradient(const std::function<double(const Vector &)> &loss, const Vector &params,
                            double h);

// ---------------------------------------------------------------------------
// Deterministic randomness.
//
// Counter-based SplitMix64: the n-th draw of stream `label` is
// splitmix64(key(seed, label) + n * 0x9E3779B97F4A7C15). The label key is FNV-1a 64 of the
// label bytes mixed with the seed. No platform randomness is involved, so a given
// (seed, label, call sequence) reproduces bit-identical draws everywhere.
// ---------------------------------------------------------------------------

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL);

class RngStream {
public:
  explicit RngStream(std::uint64_t key) : key_(key) {}

  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n) by rejection; n > 0.
  std::uint64_t below(std::uint64_t n);
  /// Uniform integer in [lo, hi] inclusive.
  long long integer(long long lo, long long hi);
  /// Standard normal via Box-Muller (one draw per call, the partner is discarded).
  double normal();
  bool bernoulli(double p) { return uniform() < p; }

  std::uint64_t draws() const { return counter_; }

private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

class RngState {
public:
  explicit RngState(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t seed() const { return seed_; }

  /// The stream for `label`; repeated calls continue the same sequence.
  RngStream &stream(std::string_view label);

  /// An independent state whose seed is derived from this seed and `label`.
  RngState fork(std::string_view label) const;

private:
  std::uint64_t seed_;
  std::map<std::string, RngStream, std::less<>> streams_;
};

/// Fisher-Yates shuffle driven by an RngStream.
template <typename Container> void shuffle(Container &c, RngStream &rng) {
  for (std::size_t i = c.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(c[i - 1], c[j]);
  }
}

} // namespace gazereg
