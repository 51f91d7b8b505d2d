#include "layerscope/separability.hpp"

#include "layerscope/parallel.hpp"
#include "layerscope/random.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

namespace layerscope {

namespace {

std::array<std::size_t, 2> check_classes(const Matrix& z, std::span<const int> labels) {
  if (static_cast<std::size_t>(z.rows()) != labels.size()) {
    throw Error(ErrorCode::shape_mismatch, "separability: " + std::to_string(z.rows()) +
                                               " rows but " + std::to_string(labels.size()) +
                                               " labels");
  }
  if (!z.allFinite()) throw Error(ErrorCode::non_finite, "separability: input contains NaN or Inf");
  std::array<std::size_t, 2> counts{};
  for (int y : labels) {
    if (y != 0 && y != 1) throw Error(ErrorCode::invalid_label, "labels must be 0 or 1");
    ++counts[static_cast<std::size_t>(y)];
  }
  if (counts[0] < 2 || counts[1] < 2) {
    throw Error(ErrorCode::single_class, "separability needs at least two samples of each class");
  }
  return counts;
}

}  // namespace

double fisher_separation(const Matrix& z, std::span<const int> labels) {
  const auto counts = check_classes(z, labels);
  std::array<Eigen::RowVectorXd, 2> mean{Eigen::RowVectorXd::Zero(z.cols()),
                                         Eigen::RowVectorXd::Zero(z.cols())};
  for (Eigen::Index i = 0; i < z.rows(); ++i) mean[labels[i]] += z.row(i);
  for (int c = 0; c < 2; ++c) mean[c] /= static_cast<double>(counts[c]);

  std::array<double, 2> trace{0.0, 0.0};
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    trace[labels[i]] += (z.row(i) - mean[labels[i]]).squaredNorm();
  }
  for (int c = 0; c < 2; ++c) trace[c] /= static_cast<double>(counts[c]);
  return (mean[1] - mean[0]).squaredNorm() / (trace[0] + trace[1] + kFisherEpsilon);
}

double silhouette(const Matrix& z_in, std::span<const int> labels_in, const SilhouetteOptions& options) {
  check_classes(z_in, labels_in);

  Matrix subset;
  std::vector<int> subset_labels;
  const Matrix* z = &z_in;
  std::span<const int> labels = labels_in;
  if (options.cap && static_cast<std::size_t>(z_in.rows()) > *options.cap) {
    // Stratified: each class keeps its share of the cap, at least two points.
    std::array<std::vector<std::size_t>, 2> by_class;
    for (std::size_t i = 0; i < labels_in.size(); ++i) by_class[labels_in[i]].push_back(i);
    Rng rng(options.seed);
    std::vector<std::size_t> keep;
    const double total = static_cast<double>(labels_in.size());
    for (auto& rows : by_class) {
      rng.shuffle(std::span<std::size_t>(rows));
      const auto share = static_cast<std::size_t>(
          std::llround(static_cast<double>(*options.cap) * static_cast<double>(rows.size()) / total));
      rows.resize(std::min(rows.size(), std::max<std::size_t>(share, 2)));
      keep.insert(keep.end(), rows.begin(), rows.end());
    }
    std::sort(keep.begin(), keep.end());
    subset.resize(static_cast<Eigen::Index>(keep.size()), z_in.cols());
    for (std::size_t k = 0; k < keep.size(); ++k) {
      subset.row(static_cast<Eigen::Index>(k)) = z_in.row(static_cast<Eigen::Index>(keep[k]));
      subset_labels.push_back(labels_in[keep[k]]);
    }
    z = &subset;
    labels = subset_labels;
  }

  const auto n = static_cast<std::size_t>(z->rows());
  std::array<std::size_t, 2> counts{};
  for (int y : labels) ++counts[static_cast<std::size_t>(y)];

  std::vector<double> s(n, 0.0);
  parallel_for(n, [&](std::size_t i) {
    std::array<double, 2> sum{0.0, 0.0};
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      sum[labels[j]] += (z->row(static_cast<Eigen::Index>(i)) - z->row(static_cast<Eigen::Index>(j))).norm();
    }
    const int own = labels[i];
    const double a = sum[own] / static_cast<double>(counts[own] - 1);
    const double b = sum[1 - own] / static_cast<double>(counts[1 - own]);
    const double m = std::max(a, b);
    s[i] = m > 0.0 ? (b - a) / m : 0.0;
  });
  double total = 0.0;
  for (double v : s) total += v;
  return total / static_cast<double>(n);
}

SeparabilityReport separability(const Matrix& z, std::span<const int> labels,
                                const SilhouetteOptions& options) {
  SeparabilityReport report;
  report.n_per_class = check_classes(z, labels);
  report.fisher = fisher_separation(z, labels);
  report.silhouette = silhouette(z, labels, options);
  return report;
}

std::string to_json(const SeparabilityReport& report, int indent) {
  nlohmann::ordered_json j;
  j["fisher"] = report.fisher;
  j["silhouette"] = report.silhouette;
  j["n_per_class"] = {{"0", report.n_per_class[0]}, {"1", report.n_per_class[1]}};
  return j.dump(indent);
}

}  // namespace layerscope
