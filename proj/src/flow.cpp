#include "gazereg/flow.hpp"

#include <limits>

namespace gazereg {

namespace {
constexpr float kFloMagic = 202021.25f;
constexpr std::uint32_t kMaxFloSide = 1u << 15;
} // namespace

FlowField::FlowField(Tensor u_, Tensor v_) : u(std::move(u_)), v(std::move(v_)) {
  if (u.rows() != v.rows() || u.cols() != v.cols()) {
    throw DimensionError("FlowField: u is " + detail::shape_str(u.rows(), u.cols()) + " but v is " +
                         detail::shape_str(v.rows(), v.cols()));
  }
  if (!u.allFinite() || !v.allFinite()) throw NumericError("FlowField: non-finite displacement");
}

FlowField FlowField::zeros(Eigen::Index width, Eigen::Index height) {
  return {Tensor::Zero(height, width), Tensor::Zero(height, width)};
}

FlowField FlowField::uniform(Eigen::Index width, Eigen::Index height, double du, double dv) {
  return {Tensor::Constant(height, width, du), Tensor::Constant(height, width, dv)};
}

void OcclusionConfig::validate() const {
  if (!(eps > 0.0)) throw DomainError("occlusion eps must be positive");
  if (!(eta > 0.0 && eta <= 1.0)) throw DomainError("occlusion eta must lie in (0, 1]");
}

Bytes write_flo(const FlowField &f) {
  Bytes out;
  out.reserve(12 + 8 * static_cast<std::size_t>(f.u.size()));
  put_f32(out, kFloMagic);
  put_u32(out, static_cast<std::uint32_t>(f.width()));
  put_u32(out, static_cast<std::uint32_t>(f.height()));
  for (Eigen::Index y = 0; y < f.height(); ++y) {
    for (Eigen::Index x = 0; x < f.width(); ++x) {
      put_f32(out, static_cast<float>(f.u(y, x)));
      put_f32(out, static_cast<float>(f.v(y, x)));
    }
  }
  return out;
}

FlowField read_flo(const Bytes &bytes) {
  ByteReader in(bytes);
  if (bytes.size() < 4 || in.f32() != kFloMagic) throw FormatError("flo: bad magic (expected PIEH)");
  const std::uint32_t w = in.u32(), h = in.u32();
  if (w == 0 || h == 0 || w > kMaxFloSide || h > kMaxFloSide) {
    throw FormatError("flo: implausible dimensions " + std::to_string(w) + "x" + std::to_string(h));
  }
  const std::size_t payload = std::size_t(w) * h * 8;
  if (in.remaining() != payload) {
    throw LengthError("flo: payload is " + std::to_string(in.remaining()) + " bytes, header implies " +
                      std::to_string(payload));
  }
  Tensor u(h, w), v(h, w);
  for (std::uint32_t y = 0; y < h; ++y) {
    for (std::uint32_t x = 0; x < w; ++x) {
      u(y, x) = in.f32();
      v(y, x) = in.f32();
    }
  }
  return {std::move(u), std::move(v)};
}

FlowField estimate_flow_blockmatch(const Frame &a, const Frame &b, int block, int radius) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError("blockmatch: frames are " + detail::shape_str(a.rows(), a.cols()) + " and " +
                         detail::shape_str(b.rows(), b.cols()));
  }
  if (block <= 0 || a.rows() % block != 0 || a.cols() % block != 0) {
    throw GeometryError("blockmatch: block size must divide the frame");
  }
  if (radius < 1) throw DomainError("blockmatch: radius must be >= 1");

  const auto h = a.rows(), w = a.cols();
  FlowField flow = FlowField::zeros(w, h);
  for (Eigen::Index by = 0; by < h; by += block) {
    for (Eigen::Index bx = 0; bx < w; bx += block) {
      const auto src = a.block(by, bx, block, block);
      double best_sad = std::numeric_limits<double>::infinity();
      int best_mag = std::numeric_limits<int>::max();
      int best_dx = 0, best_dy = 0;
      for (int dy = -radius; dy <= radius; ++dy) {
        if (by + dy < 0 || by + dy + block > h) continue;
        for (int dx = -radius; dx <= radius; ++dx) {
          if (bx + dx < 0 || bx + dx + block > w) continue;
          const double sad = (src - b.block(by + dy, bx + dx, block, block)).cwiseAbs().sum();
          const int mag = dx * dx + dy * dy;
          if (sad < best_sad || (sad == best_sad && mag < best_mag)) {
            best_sad = sad;
            best_mag = mag;
            best_dx = dx;
            best_dy = dy;
          }
        }
      }
      flow.u.block(by, bx, block, block).setConstant(best_dx);
      flow.v.block(by, bx, block, block).setConstant(best_dy);
    }
  }
  return flow;
}

OcclusionVerdict occlusion_check(const FlowField &fwd, const FlowField &bwd, const OcclusionConfig &cfg) {
  cfg.validate();
  if (!fwd.same_dims(bwd)) {
    throw DimensionError("occlusion_check: forward flow is " + detail::shape_str(fwd.height(), fwd.width()) +
                         ", backward flow is " + detail::shape_str(bwd.height(), bwd.width()));
  }
  const auto h = fwd.height(), w = fwd.width();
  OcclusionVerdict out;
  out.discrepancy.resize(h, w);
  Eigen::Index exceeded = 0;
  for (Eigen::Index y = 0; y < h; ++y) {
    for (Eigen::Index x = 0; x < w; ++x) {
      const double fu = fwd.u(y, x), fv = fwd.v(y, x);
      const double px = double(x) + fu, py = double(y) + fv;
      const double du = fu + bilinear_sample(bwd.u, px, py);
      const double dv = fv + bilinear_sample(bwd.v, px, py);
      const double delta = std::hypot(du, dv);
      out.discrepancy(y, x) = delta;
      if (delta > cfg.eps) ++exceeded;
    }
  }
  out.observed_ratio = double(exceeded) / double(h * w);
  out.occluded = out.observed_ratio > cfg.eta;
  return out;
}

} // namespace gazereg
