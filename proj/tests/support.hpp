#pragma once

#include <cstdlib>
#include <filesystem>
#include <string>

#include "gazereg/numerics.hpp"

namespace testing {

inline gazereg::Tensor random_tensor(gazereg::RngStream &rng, Eigen::Index rows, Eigen::Index cols, double lo = 0.0,
                                     double hi = 1.0) {
  gazereg::Tensor t(rows, cols);
  for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(lo, hi);
  return t;
}

/// Fresh, empty scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string &name) {
  const auto dir = std::filesystem::temp_directory_path() / ("gazereg_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

} // namespace testing
