#pragma once

#include "layerscope/common.hpp"
#include "layerscope/dumpio.hpp"
#include "layerscope/probe.hpp"

#include <cstddef>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string_view>
#include <vector>

namespace layerscope {

inline constexpr double kRankMeEpsilon = 1e-7;
inline constexpr double kSnrEpsilon = 1e-12;
/// Velocity steps shorter than this are dropped before measuring turning angles.
inline constexpr double kMinVelocityNorm = 1e-12;

// ---------------------------------------------------------------------------
// RankMe: exp of the Shannon entropy of the L1-normalised singular values.

/// Singular values of the raw (uncentred) matrix.
double rankme(const Matrix& z, double epsilon = kRankMeEpsilon);

/// RankMe from a precomputed spectrum. With epsilon > 0 an all-zero spectrum
/// gives p = 0 everywhere and the score is exp(0) = 1; with epsilon = 0 it is
/// a degenerate-input error.
double rankme_from_spectrum(std::span<const double> singular_values, double epsilon);

// ---------------------------------------------------------------------------
// Curvature: mean turning angle between consecutive token velocities.

/// Mean turning angle of one T x d trajectory, or nullopt when fewer than two
/// velocities of non-negligible length remain.
std::optional<double> curvature_sample(const Matrix& trajectory);

enum class CurvatureWeighting { uniform, by_length };

struct CurvatureSummary {
  double value = 0.0;
  std::size_t used = 0;
  std::size_t skipped = 0;
};

/// Streams trajectories one at a time into a layer-level mean.
class CurvatureAccumulator {
 public:
  explicit CurvatureAccumulator(CurvatureWeighting weighting = CurvatureWeighting::uniform)
      : weighting_(weighting) {}

  void add(const Matrix& trajectory);
  CurvatureSummary finish() const;

 private:
  CurvatureWeighting weighting_;
  double weighted_sum_ = 0.0;
  double weight_total_ = 0.0;
  std::size_t used_ = 0;
  std::size_t skipped_ = 0;
};

CurvatureSummary curvature_layer(std::span<const Matrix> trajectories,
                                 CurvatureWeighting weighting = CurvatureWeighting::uniform);

// ---------------------------------------------------------------------------
// Gradient criteria on a trained probe.

/// |g|_2 / |theta|_2.
double relative_gradient_norm(const Eigen::VectorXd& gradient, const Eigen::VectorXd& params);

/// (sum_j g_j)^2 / (sum_j g_j^2 + eps) for one example's gradient.
double gradient_snr_term(const Eigen::VectorXd& gradient, double epsilon = kSnrEpsilon);

/// Mean of gradient_snr_term over the rows of a per-example gradient matrix.
double gradient_snr(const Matrix& per_example, double epsilon = kSnrEpsilon);

/// RGN of the mean validation loss.
double rgn(const ProbeModel& probe, const Matrix& x_val, std::span<const int> y_val);

/// Gradient SNR over the validation examples, streamed without materialising
/// the per-example gradient matrix.
double snr(const ProbeModel& probe, const Matrix& x_val, std::span<const int> y_val,
           double epsilon = kSnrEpsilon);

// ---------------------------------------------------------------------------
// Series and selection.

enum class CriterionName { rankme, curvature, val_loss, rgn, snr, id, fepoid };
enum class Direction { maximize, minimize, peak_rule };

std::string_view to_string(CriterionName name) noexcept;
std::string_view to_string(Direction direction) noexcept;
CriterionName parse_criterion(std::string_view token);
Direction direction_of(CriterionName name) noexcept;

struct CriterionSeries {
  CriterionName name = CriterionName::rankme;
  Direction direction = Direction::maximize;
  std::vector<double> values;   ///< index l-1 holds layer l
  std::vector<double> seconds;  ///< wall-clock per layer

  double total_seconds() const;
};

/// 1-based layer by argmax / argmin; ties go to the shallowest layer.
std::size_t select_layer(std::span<const double> values, Direction direction);
std::size_t select_layer(const CriterionSeries& series);

// ---------------------------------------------------------------------------
// Sweep over every layer of a dump.

/// Which gradients RGN and SNR are measured on.
enum class GradientPoint { init, epoch1, best };

std::string_view to_string(GradientPoint point) noexcept;
GradientPoint parse_gradient_point(std::string_view token);

/// Samples used for the label-free criteria (RankMe, curvature, ID).
enum class GeometrySubset { train_val, all };

struct SweepConfig {
  double rankme_epsilon = kRankMeEpsilon;
  double discard_fraction = 0.1;
  GradientPoint gradient_point = GradientPoint::epoch1;
  GeometrySubset subset = GeometrySubset::train_val;
  CurvatureWeighting curvature_weighting = CurvatureWeighting::uniform;
  ProbeConfig probe;           ///< probe seed for layer l is probe.seed + l
  bool record_timing = true;   ///< false writes zero seconds
};

/// One series per requested criterion over layers 1..L. RankMe, curvature and
/// ID use the train and validation splits (or every sample when no metadata
/// is given); validation loss, RGN and SNR train a probe on the training
/// split and evaluate on the validation split. The "fepoid" series carries
/// the ID values with the peak rule as its direction.
std::vector<CriterionSeries> criterion_sweep(const LayerDump& dump,
                                             const std::optional<std::filesystem::path>& trajectories,
                                             std::span<const SampleMeta> meta,
                                             const std::set<CriterionName>& names,
                                             const SweepConfig& config);

}  // namespace layerscope
