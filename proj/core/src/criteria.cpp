#include "layerscope/criteria.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <string>

namespace layerscope {

double rankme_from_spectrum(std::span<const double> singular_values, double epsilon) {
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) {
    throw Error(ErrorCode::invalid_argument, "rankme epsilon must be finite and non-negative");
  }
  double l1 = 0.0;
  for (double s : singular_values) {
    if (!std::isfinite(s) || s < 0.0) {
      throw Error(ErrorCode::invalid_argument, "singular values must be finite and non-negative");
    }
    l1 += s;
  }
  const double denom = l1 + epsilon;
  if (denom == 0.0) {
    throw Error(ErrorCode::degenerate, "rankme of an all-zero matrix with epsilon = 0");
  }
  double entropy = 0.0;
  for (double s : singular_values) {
    const double p = s / denom;
    if (p > 0.0) entropy -= p * std::log(p);
  }
  return std::exp(entropy);
}

double rankme(const Matrix& z, double epsilon) {
  if (z.rows() < 1 || z.cols() < 1) {
    throw Error(ErrorCode::empty_input, "rankme needs a non-empty matrix");
  }
  if (!z.allFinite()) {
    throw Error(ErrorCode::non_finite, "rankme: input contains NaN or Inf");
  }
  Eigen::BDCSVD<Eigen::MatrixXd> svd(z);
  const Eigen::VectorXd& sigma = svd.singularValues();
  return rankme_from_spectrum(std::span<const double>(sigma.data(), static_cast<std::size_t>(sigma.size())),
                              epsilon);
}

std::optional<double> curvature_sample(const Matrix& trajectory) {
  if (!trajectory.allFinite()) {
    throw Error(ErrorCode::non_finite, "curvature: trajectory contains NaN or Inf");
  }
  if (trajectory.rows() < 3) return std::nullopt;
  const Eigen::Index steps = trajectory.rows() - 1;
  const Matrix v = trajectory.bottomRows(steps) - trajectory.topRows(steps);
  const Eigen::VectorXd norms = v.rowwise().norm();

  double total = 0.0;
  std::size_t angles = 0;
  Eigen::Index prev = -1;
  for (Eigen::Index t = 0; t < steps; ++t) {
    if (norms[t] < kMinVelocityNorm) continue;
    if (prev >= 0) {
      const double cosine = v.row(prev).dot(v.row(t)) / (norms[prev] * norms[t]);
      total += std::acos(std::clamp(cosine, -1.0, 1.0));
      ++angles;
    }
    prev = t;
  }
  if (angles == 0) return std::nullopt;
  return total / static_cast<double>(angles);
}

void CurvatureAccumulator::add(const Matrix& trajectory) {
  const std::optional<double> kappa = curvature_sample(trajectory);
  if (!kappa) {
    ++skipped_;
    return;
  }
  const double weight = weighting_ == CurvatureWeighting::by_length
                            ? static_cast<double>(std::max<Eigen::Index>(trajectory.rows() - 2, 1))
                            : 1.0;
  weighted_sum_ += weight * *kappa;
  weight_total_ += weight;
  ++used_;
}

CurvatureSummary CurvatureAccumulator::finish() const {
  if (used_ == 0) {
    if (skipped_ == 0) throw Error(ErrorCode::empty_input, "curvature: no trajectories");
    throw Error(ErrorCode::degenerate, "curvature: no trajectory has two usable velocity steps (" +
                                           std::to_string(skipped_) + " skipped)");
  }
  return {weighted_sum_ / weight_total_, used_, skipped_};
}

CurvatureSummary curvature_layer(std::span<const Matrix> trajectories, CurvatureWeighting weighting) {
  CurvatureAccumulator acc(weighting);
  for (const Matrix& h : trajectories) acc.add(h);
  return acc.finish();
}

double relative_gradient_norm(const Eigen::VectorXd& gradient, const Eigen::VectorXd& params) {
  const double theta = params.norm();
  if (theta == 0.0) {
    throw Error(ErrorCode::degenerate, "relative gradient norm undefined for all-zero parameters");
  }
  if (!gradient.allFinite() || !std::isfinite(theta)) {
    throw Error(ErrorCode::non_finite, "relative gradient norm: non-finite gradient or parameters");
  }
  return gradient.norm() / theta;
}

double gradient_snr_term(const Eigen::VectorXd& gradient, double epsilon) {
  const double sum = gradient.sum();
  const double sq = gradient.squaredNorm();
  const double denom = sq + epsilon;
  if (denom == 0.0) return 0.0;
  return sum * sum / denom;
}

double gradient_snr(const Matrix& per_example, double epsilon) {
  if (per_example.rows() == 0) {
    throw Error(ErrorCode::empty_input, "gradient SNR needs at least one example");
  }
  double total = 0.0;
  for (Eigen::Index i = 0; i < per_example.rows(); ++i) {
    total += gradient_snr_term(per_example.row(i).transpose(), epsilon);
  }
  return total / static_cast<double>(per_example.rows());
}

double rgn(const ProbeModel& probe, const Matrix& x_val, std::span<const int> y_val) {
  if (x_val.rows() == 0) throw Error(ErrorCode::empty_input, "rgn: empty validation set");
  if (probe.params.norm() == 0.0) {
    throw Error(ErrorCode::degenerate, "rgn undefined for all-zero probe parameters");
  }
  return relative_gradient_norm(loss_gradient(probe, x_val, y_val), probe.params);
}

double snr(const ProbeModel& probe, const Matrix& x_val, std::span<const int> y_val, double epsilon) {
  if (x_val.rows() == 0) throw Error(ErrorCode::empty_input, "snr: empty validation set");
  double total = 0.0;
  for_each_example_gradient(probe, x_val, y_val, [&](std::size_t, const Eigen::VectorXd& g) {
    if (!g.allFinite()) throw Error(ErrorCode::non_finite, "snr: non-finite per-example gradient");
    total += gradient_snr_term(g, epsilon);
  });
  return total / static_cast<double>(x_val.rows());
}

std::string_view to_string(CriterionName name) noexcept {
  switch (name) {
    case CriterionName::rankme: return "rankme";
    case CriterionName::curvature: return "curvature";
    case CriterionName::val_loss: return "val_loss";
    case CriterionName::rgn: return "rgn";
    case CriterionName::snr: return "snr";
    case CriterionName::id: return "id";
    case CriterionName::fepoid: return "fepoid";
  }
  return "unknown";
}

std::string_view to_string(Direction direction) noexcept {
  switch (direction) {
    case Direction::maximize: return "max";
    case Direction::minimize: return "min";
    case Direction::peak_rule: return "peak_rule";
  }
  return "unknown";
}

CriterionName parse_criterion(std::string_view token) {
  for (auto name : {CriterionName::rankme, CriterionName::curvature, CriterionName::val_loss,
                    CriterionName::rgn, CriterionName::snr, CriterionName::id, CriterionName::fepoid}) {
    if (token == to_string(name)) return name;
  }
  throw Error(ErrorCode::invalid_argument, "unknown criterion '" + std::string(token) + "'");
}

Direction direction_of(CriterionName name) noexcept {
  switch (name) {
    case CriterionName::curvature:
    case CriterionName::val_loss:
      return Direction::minimize;
    case CriterionName::fepoid:
      return Direction::peak_rule;
    default:
      return Direction::maximize;
  }
}

double CriterionSeries::total_seconds() const {
  double total = 0.0;
  for (double s : seconds) total += s;
  return total;
}

std::size_t select_layer(std::span<const double> values, Direction direction) {
  if (values.empty()) throw Error(ErrorCode::empty_input, "select_layer: empty series");
  if (direction == Direction::peak_rule) {
    throw Error(ErrorCode::invalid_argument, "select_layer: use fepoid_select for the peak rule");
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    const bool better = direction == Direction::maximize ? values[i] > values[best]
                                                         : values[i] < values[best];
    if (better) best = i;
  }
  return best + 1;
}

std::size_t select_layer(const CriterionSeries& series) {
  return select_layer(series.values, series.direction);
}

std::string_view to_string(GradientPoint point) noexcept {
  switch (point) {
    case GradientPoint::init: return "init";
    case GradientPoint::epoch1: return "epoch1";
    case GradientPoint::best: return "best";
  }
  return "unknown";
}

GradientPoint parse_gradient_point(std::string_view token) {
  for (auto p : {GradientPoint::init, GradientPoint::epoch1, GradientPoint::best}) {
    if (token == to_string(p)) return p;
  }
  throw Error(ErrorCode::invalid_argument,
              "unknown gradient point '" + std::string(token) + "' (expected init, epoch1 or best)");
}

}  // namespace layerscope
