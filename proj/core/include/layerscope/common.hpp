#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace layerscope {

/// Row-major dense matrices: one row per sample (or token), one column per feature.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using FloatMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class ErrorCode {
  invalid_argument,
  shape_mismatch,
  io,
  bad_magic,
  unsupported_version,
  truncated,
  non_finite,
  count_mismatch,
  duplicate_id,
  invalid_label,
  invalid_split,
  malformed,
  degenerate,
  missing_input,
  single_class,
  empty_input,
  coverage,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Shortest decimal text that reads back to exactly `value`.
std::string format_number(double value);

/// The single exception type thrown by the library. `code()` identifies the failure class.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace layerscope
