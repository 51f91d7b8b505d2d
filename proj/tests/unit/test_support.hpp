#pragma once

#include "layerscope/common.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>

namespace testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("layerscope_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline layerscope::Matrix gaussian(std::size_t rows, std::size_t cols, std::mt19937_64& gen) {
  std::normal_distribution<double> normal;
  layerscope::Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = normal(gen);
  }
  return m;
}

inline layerscope::Matrix uniform(std::size_t rows, std::size_t cols, std::mt19937_64& gen) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  layerscope::Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = u(gen);
  }
  return m;
}

/// Random d x d orthogonal matrix.
inline Eigen::MatrixXd orthogonal(std::size_t d, std::mt19937_64& gen) {
  const layerscope::Matrix g = gaussian(d, d, gen);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr{Eigen::MatrixXd(g)};
  return qr.householderQ() * Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(d),
                                                        static_cast<Eigen::Index>(d));
}

/// Rows of `latent` (N x m) embedded in R^d by the first m columns of a random orthogonal map.
inline layerscope::Matrix embed(const layerscope::Matrix& latent, std::size_t d, std::mt19937_64& gen) {
  const Eigen::MatrixXd q = orthogonal(d, gen);
  return latent * q.leftCols(latent.cols()).transpose();
}

inline double relative_diff(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300});
}

}  // namespace testing
