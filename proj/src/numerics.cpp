#include "gazereg/numerics.hpp"

#include <limits>

namespace gazereg {

Vector finite_diff_gradient(const std::function<double(const Vector &)> &loss, const Vector &params,
                            double h) {
  if (!(h > 0.0)) throw DomainError("finite_diff_gradient: step must be positive");
  Vector grad(params.size());
  Vector probe = params;
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    probe[i] = params[i] + h;
    const double up = loss(probe);
    probe[i] = params[i] - h;
    const double down = loss(probe);
    probe[i] = params[i];
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericError("finite_diff_gradient: non-finite loss at coordinate " + std::to_string(i));
    }
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis) {
  std::uint64_t h = basis;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t RngStream::next_u64() {
  const std::uint64_t x = key_ + counter_ * 0x9E3779B97F4A7C15ULL;
  ++counter_;
  return splitmix64(x);
}

double RngStream::uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

std::uint64_t RngStream::below(std::uint64_t n) {
  if (n == 0) throw DomainError("RngStream::below: n must be positive");
  // Reject the top partial block so every residue is equally likely.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % n;
}

long long RngStream::integer(long long lo, long long hi) {
  if (hi < lo) throw DomainError("RngStream::integer: empty range");
  return lo + static_cast<long long>(below(static_cast<std::uint64_t>(hi - lo) + 1));
}

double RngStream::normal() {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

RngStream &RngState::stream(std::string_view label) {
  auto it = streams_.find(label);
  if (it == streams_.end()) {
    const std::uint64_t key = splitmix64(fnv1a64(label) ^ splitmix64(seed_));
    it = streams_.emplace(std::string(label), RngStream(key)).first;
  }
  return it->second;
}

RngState RngState::fork(std::string_view label) const {
  return RngState(splitmix64(fnv1a64(label, 0x84222325cbf29ce4ULL) ^ seed_));
}

} // namespace gazereg
