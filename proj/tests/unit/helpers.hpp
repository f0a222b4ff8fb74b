#pragma once

#include <filesystem>
#include <string>

#include <Eigen/Core>

#include "rsopt/msm.hpp"

namespace testing {

inline rsopt::ThetaVector two_regime_exponential(double r1 = 1.0, double r2 = 0.1, double stay = 0.9) {
  Eigen::MatrixXd a(2, 2);
  a << stay, 1.0 - stay, 1.0 - stay, stay;
  return rsopt::ThetaVector({rsopt::Emission::exponential(r1), rsopt::Emission::exponential(r2)},
                            rsopt::TransitionMatrix(a));
}

inline rsopt::ObservationStream scalar_stream(std::initializer_list<double> values) {
  rsopt::ObservationStream s;
  for (double v : values) s.values.push_back({v, 0.0});
  return s;
}

/// A fresh directory under the system temp path.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("rsopt-test-" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testing
