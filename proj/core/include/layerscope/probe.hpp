#pragma once

#include "layerscope/common.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

namespace layerscope {

enum class ProbeArch : std::uint8_t { mlp = 0, linear = 1 };

std::string_view to_string(ProbeArch arch) noexcept;
ProbeArch parse_probe_arch(std::string_view token);

struct ProbeConfig {
  ProbeArch arch = ProbeArch::mlp;
  std::size_t hidden_dim = 256;
  double learning_rate = 1e-3;
  std::size_t batch_size = 64;
  std::size_t max_epochs = 50;
  std::size_t patience = 5;
  double l2 = 0.0;
  std::uint64_t seed = 42;

  /// Defaults for the given architecture (l2 = 1e-4 for the linear probe).
  static ProbeConfig defaults(ProbeArch arch);
};

/// Per-feature affine map fitted on the training split. Features whose
/// standard deviation is below 1e-8 are only centred.
struct Standardizer {
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd scale;

  static Standardizer fit(const Matrix& x);
  static Standardizer identity(std::size_t dim);
  Matrix apply(const Matrix& x) const;
  std::size_t dim() const noexcept { return static_cast<std::size_t>(mean.size()); }
};

/// Trained probe. Parameters are flattened as
///   mlp:    W1 (hidden x d, row-major), b1 (hidden), w2 (hidden), b2
///   linear: w (d), b
struct ProbeModel {
  ProbeArch arch = ProbeArch::mlp;
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;  ///< 0 for the linear probe
  Eigen::VectorXd params;
  Standardizer standardizer;
  std::size_t best_epoch = 0;  ///< 1-based; 0 = initial parameters
  double best_val_loss = 0.0;

  static std::size_t parameter_count(ProbeArch arch, std::size_t input_dim,
                                     std::size_t hidden_dim) noexcept;

  /// All-zero parameters with an identity standardizer.
  static ProbeModel zeros(ProbeArch arch, std::size_t input_dim, std::size_t hidden_dim = 0);
};

struct TrainReport {
  std::vector<double> train_loss;  ///< per epoch, mean over training batches
  std::vector<double> val_loss;    ///< per epoch, full validation set
  std::size_t best_epoch = 0;      ///< 1-based
  bool stopped_early = false;
};

struct TrainResult {
  ProbeModel model;
  TrainReport report;
};

/// Called with epoch 0 (initial parameters) and after every epoch.
using EpochObserver = std::function<void(std::size_t epoch, const ProbeModel& current)>;

/// Mini-batch Adam on binary cross-entropy; keeps the parameters of the epoch
/// with the lowest validation loss and stops after `patience` epochs without
/// improvement. Deterministic for a fixed config.
TrainResult train_probe(const Matrix& x_train, std::span<const int> y_train, const Matrix& x_val,
                        std::span<const int> y_val, const ProbeConfig& config,
                        const EpochObserver& observer = {});

/// Pre-sigmoid scores (log-odds of the positive class).
Eigen::VectorXd decision_function(const ProbeModel& probe, const Matrix& x);

/// Probability of label 1, strictly inside (0, 1).
Eigen::VectorXd predict(const ProbeModel& probe, const Matrix& x);

/// Mean binary cross-entropy (no regularisation term).
double mean_loss(const ProbeModel& probe, const Matrix& x, std::span<const int> y);

/// Gradient of mean_loss w.r.t. the flattened parameters.
Eigen::VectorXd loss_gradient(const ProbeModel& probe, const Matrix& x, std::span<const int> y);

/// Streams the gradient of each single-example loss; the vector passed to the
/// callback is reused between calls.
void for_each_example_gradient(
    const ProbeModel& probe, const Matrix& x, std::span<const int> y,
    const std::function<void(std::size_t example, const Eigen::VectorXd& gradient)>& callback);

/// Row i = gradient of the loss on example i alone.
Matrix per_example_gradients(const ProbeModel& probe, const Matrix& x, std::span<const int> y);

/// Mann-Whitney AUROC with ties credited one half. Needs both classes.
double auroc(std::span<const double> scores, std::span<const int> labels);

/// Binary model blob: "LHPM", version u32, arch u8, 3 zero bytes, input_dim u32,
/// hidden_dim u32, n_params u64, best_epoch u32, best_val_loss f32, then
/// n_params f32 parameters, d f32 means, d f32 scales. Little-endian.
void save_probe(const std::filesystem::path& path, const ProbeModel& probe);
ProbeModel load_probe(const std::filesystem::path& path);

/// CSV with columns epoch, train_loss, val_loss.
void write_train_report(const std::filesystem::path& path, const TrainReport& report);

}  // namespace layerscope
