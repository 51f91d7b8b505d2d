#pragma once

#include "layerscope/common.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>

namespace layerscope {

inline constexpr double kFisherEpsilon = 1e-12;
inline constexpr std::size_t kSilhouetteCap = 5000;

/// |mu1 - mu0|^2 / (tr S0 + tr S1 + eps), S_c the class covariance divided by
/// the class size. Both classes need at least two samples.
double fisher_separation(const Matrix& z, std::span<const int> labels);

struct SilhouetteOptions {
  /// Subsample to this many points (stratified by class, seeded) when set and
  /// exceeded. Off by default.
  std::optional<std::size_t> cap;
  std::uint64_t seed = 0;
};

/// Mean silhouette with Euclidean distance and the labels as clusters.
double silhouette(const Matrix& z, std::span<const int> labels, const SilhouetteOptions& options = {});

struct SeparabilityReport {
  double fisher = 0.0;
  double silhouette = 0.0;
  std::array<std::size_t, 2> n_per_class{};
};

SeparabilityReport separability(const Matrix& z, std::span<const int> labels,
                                const SilhouetteOptions& options = {});

/// {"fisher": .., "silhouette": .., "n_per_class": {"0": .., "1": ..}}
std::string to_json(const SeparabilityReport& report, int indent = 2);

}  // namespace layerscope
