#pragma once

#include "layerscope/common.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace layerscope {

/// TwoNN intrinsic-dimension estimation.
///
/// For every point the ratio mu = r2 / r1 of its second- to first-nearest
/// neighbour distance follows a Pareto law whose shape is the intrinsic
/// dimension. The estimate is the slope of the through-origin least-squares
/// line of -log(1 - F(mu)) against log(mu), F being the empirical CDF.

inline constexpr double kDefaultDiscardFraction = 0.1;
/// Points whose nearest neighbour is closer than this are treated as duplicates.
inline constexpr double kDuplicateRadius = 1e-12;

struct NeighborDistances {
  std::vector<double> r1;              ///< per point, nearest-neighbour distance
  std::vector<double> r2;              ///< per point, second-nearest distance
  std::vector<std::size_t> excluded;   ///< ascending indices with r1 < kDuplicateRadius
};

struct IdEstimate {
  double d_id = 0.0;
  std::size_t n_used = 0;          ///< points entering the regression
  std::size_t n_excluded = 0;      ///< duplicate points dropped before the fit
  double discard_fraction = kDefaultDiscardFraction;
};

/// Exact Euclidean first/second nearest neighbours of every row. Needs N >= 3.
NeighborDistances two_nearest(const Matrix& points);

/// mu_i = r2 / r1 for the retained points, in point order.
std::vector<double> mu_ratios(const NeighborDistances& nd);

struct ParetoFit {
  double d_id = 0.0;
  std::size_t n_used = 0;
};

/// Sorts mu ascending, assigns F_i = i / n, drops the top ceil(discard * n)
/// points (and always the F = 1 point), and fits y = d * x through the origin
/// with x = log mu, y = -log(1 - F).
ParetoFit fit_pareto_detailed(std::span<const double> mu, double discard_fraction);
double fit_pareto(std::span<const double> mu, double discard_fraction);

IdEstimate twonn(const Matrix& points, double discard_fraction = kDefaultDiscardFraction);

}  // namespace layerscope
