#include "layerscope/idest.hpp"

#include "layerscope/parallel.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>

namespace layerscope {

namespace {

constexpr Eigen::Index kTile = 256;
constexpr std::size_t kKeep = 8;

void require_finite(const Matrix& points) {
  if (!points.allFinite()) {
    throw Error(ErrorCode::non_finite, "two_nearest: input contains NaN or Inf");
  }
}

struct Candidate {
  double approx;
  Eigen::Index index;
  bool operator<(const Candidate& o) const {
    return approx < o.approx || (approx == o.approx && index < o.index);
  }
};

// Smallest kKeep candidates seen so far, kept sorted.
struct TopK {
  std::array<Candidate, kKeep> items;
  std::size_t size = 0;

  void offer(Candidate c) {
    if (size == kKeep && !(c < items[kKeep - 1])) return;
    std::size_t pos = size < kKeep ? size++ : kKeep - 1;
    while (pos > 0 && c < items[pos - 1]) {
      items[pos] = items[pos - 1];
      --pos;
    }
    items[pos] = c;
  }
};

}  // namespace

// Neighbours are screened with the Gram expansion |x|^2 + |y|^2 - 2<x, y>,
// computed once per pair of row tiles, and every point keeps its kKeep
// smallest screened values. Any point whose screened value is within the
// rounding bound of the second smallest is then re-measured by direct
// summation of squared coordinate differences; if the kept list could have
// cut such a point off, the query falls back to a full exact scan. Reported
// distances therefore depend only on the rows involved, which keeps them
// exact under row permutations.
NeighborDistances two_nearest(const Matrix& points) {
  const Eigen::Index n = points.rows();
  if (n < 3) {
    throw Error(ErrorCode::invalid_argument,
                "two_nearest needs at least 3 points, got " + std::to_string(n));
  }
  require_finite(points);

  const Eigen::VectorXd norms = points.rowwise().squaredNorm();
  const double max_norm = norms.maxCoeff();
  const double gamma = 16.0 * static_cast<double>(points.cols() + 2) *
                       std::numeric_limits<double>::epsilon();

  const auto tiles = static_cast<std::size_t>((n + kTile - 1) / kTile);
  const std::size_t pairs = tiles * (tiles + 1) / 2;
  auto tile_start = [](std::size_t t) { return static_cast<Eigen::Index>(t) * kTile; };
  auto tile_size = [&](std::size_t t) { return std::min(kTile, n - tile_start(t)); };

  // pair_lists[p] holds one TopK per row of tile I followed by one per row of
  // tile J (the latter only when I != J), for the p-th pair (I, J), J <= I.
  std::vector<std::pair<std::size_t, std::size_t>> pair_tiles;
  pair_tiles.reserve(pairs);
  for (std::size_t i = 0; i < tiles; ++i) {
    for (std::size_t j = 0; j <= i; ++j) pair_tiles.emplace_back(i, j);
  }
  std::vector<std::vector<TopK>> pair_lists(pairs);
  parallel_for(pairs, [&](std::size_t p) {
    const auto [ti, tj] = pair_tiles[p];
    const Eigen::Index lo_i = tile_start(ti);
    const Eigen::Index lo_j = tile_start(tj);
    const Eigen::Index ni = tile_size(ti);
    const Eigen::Index nj = tile_size(tj);
    const Eigen::MatrixXd gram = points.middleRows(lo_i, ni) * points.middleRows(lo_j, nj).transpose();
    std::vector<TopK>& lists = pair_lists[p];
    lists.assign(static_cast<std::size_t>(ni + (ti == tj ? 0 : nj)), TopK{});
    for (Eigen::Index b = 0; b < nj; ++b) {
      for (Eigen::Index a = 0; a < ni; ++a) {
        const Eigen::Index i = lo_i + a;
        const Eigen::Index j = lo_j + b;
        if (i == j) continue;
        const double approx = norms[i] + norms[j] - 2.0 * gram(a, b);
        lists[static_cast<std::size_t>(a)].offer({approx, j});
        if (ti != tj) lists[static_cast<std::size_t>(ni + b)].offer({approx, i});
      }
    }
  });

  NeighborDistances nd;
  nd.r1.assign(static_cast<std::size_t>(n), 0.0);
  nd.r2.assign(static_cast<std::size_t>(n), 0.0);

  auto pair_index = [](std::size_t i, std::size_t j) { return i * (i + 1) / 2 + j; };
  parallel_for(tiles, [&](std::size_t t) {
    const Eigen::Index lo = tile_start(t);
    for (Eigen::Index q = 0; q < tile_size(t); ++q) {
      const Eigen::Index i = lo + q;
      TopK merged;
      for (std::size_t other = 0; other < tiles; ++other) {
        const TopK& part = other <= t ? pair_lists[pair_index(t, other)][static_cast<std::size_t>(q)]
                                      : pair_lists[pair_index(other, t)]
                                                  [static_cast<std::size_t>(tile_size(other) + q)];
        for (std::size_t k = 0; k < part.size; ++k) merged.offer(part.items[k]);
      }
      const double threshold = merged.items[1].approx + 2.0 * gamma * (norms[i] + max_norm);
      double e1 = std::numeric_limits<double>::infinity();
      double e2 = e1;
      auto consider = [&](Eigen::Index j) {
        const double exact = (points.row(i) - points.row(j)).squaredNorm();
        if (exact < e1) {
          e2 = e1;
          e1 = exact;
        } else if (exact < e2) {
          e2 = exact;
        }
      };
      if (merged.size == kKeep && merged.items[kKeep - 1].approx <= threshold) {
        for (Eigen::Index j = 0; j < n; ++j) {
          if (j != i) consider(j);
        }
      } else {
        for (std::size_t k = 0; k < merged.size && merged.items[k].approx <= threshold; ++k) {
          consider(merged.items[k].index);
        }
      }
      nd.r1[static_cast<std::size_t>(i)] = std::sqrt(e1);
      nd.r2[static_cast<std::size_t>(i)] = std::sqrt(e2);
    }
  });

  for (std::size_t i = 0; i < nd.r1.size(); ++i) {
    if (nd.r1[i] < kDuplicateRadius) nd.excluded.push_back(i);
  }
  return nd;
}

std::vector<double> mu_ratios(const NeighborDistances& nd) {
  if (nd.r1.size() != nd.r2.size()) {
    throw Error(ErrorCode::shape_mismatch, "mu_ratios: r1 and r2 differ in length");
  }
  std::vector<double> mu;
  mu.reserve(nd.r1.size());
  auto next_excluded = nd.excluded.begin();
  for (std::size_t i = 0; i < nd.r1.size(); ++i) {
    if (next_excluded != nd.excluded.end() && *next_excluded == i) {
      ++next_excluded;
      continue;
    }
    mu.push_back(nd.r2[i] / nd.r1[i]);
  }
  return mu;
}

ParetoFit fit_pareto_detailed(std::span<const double> mu, double discard_fraction) {
  if (mu.size() < 2) {
    throw Error(ErrorCode::invalid_argument,
                "fit_pareto needs at least 2 ratios, got " + std::to_string(mu.size()));
  }
  if (!(discard_fraction >= 0.0 && discard_fraction < 0.5)) {
    throw Error(ErrorCode::invalid_argument, "discard fraction must lie in [0, 0.5)");
  }
  std::vector<double> sorted(mu.begin(), mu.end());
  for (double m : sorted) {
    if (!std::isfinite(m) || m < 1.0) {
      throw Error(ErrorCode::invalid_argument, "distance ratios must be finite and >= 1");
    }
  }
  std::sort(sorted.begin(), sorted.end());

  const std::size_t n = sorted.size();
  const double scaled = discard_fraction * static_cast<double>(n);
  // Guard against products like 0.1 * 50000 landing one ulp above an integer.
  auto dropped = static_cast<std::size_t>(std::ceil(scaled - 1e-9 * std::max(1.0, scaled)));
  dropped = std::max<std::size_t>(dropped, 1);
  const std::size_t kept = n - std::min(dropped, n);

  double sxx = 0.0;
  double sxy = 0.0;
  for (std::size_t i = 0; i < kept; ++i) {
    const double f = static_cast<double>(i + 1) / static_cast<double>(n);
    const double x = std::log(sorted[i]);
    const double y = -std::log1p(-f);
    sxx += x * x;
    sxy += x * y;
  }
  if (kept == 0 || sxx == 0.0) {
    throw Error(ErrorCode::degenerate,
                "fit_pareto: every retained ratio equals 1, intrinsic dimension undefined");
  }
  return {sxy / sxx, kept};
}

double fit_pareto(std::span<const double> mu, double discard_fraction) {
  return fit_pareto_detailed(mu, discard_fraction).d_id;
}

IdEstimate twonn(const Matrix& points, double discard_fraction) {
  const NeighborDistances nd = two_nearest(points);
  const std::vector<double> mu = mu_ratios(nd);
  if (mu.size() < 2) {
    throw Error(ErrorCode::degenerate, "twonn: fewer than 2 non-duplicate points");
  }
  const ParetoFit fit = fit_pareto_detailed(mu, discard_fraction);
  return {fit.d_id, fit.n_used, nd.excluded.size(), discard_fraction};
}

}  // namespace layerscope
