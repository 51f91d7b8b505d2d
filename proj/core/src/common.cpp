#include "layerscope/common.hpp"

#include <charconv>
#include <system_error>

namespace layerscope {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid argument";
    case ErrorCode::shape_mismatch: return "shape mismatch";
    case ErrorCode::io: return "i/o error";
    case ErrorCode::bad_magic: return "bad magic";
    case ErrorCode::unsupported_version: return "unsupported version";
    case ErrorCode::truncated: return "truncated";
    case ErrorCode::non_finite: return "non-finite value";
    case ErrorCode::count_mismatch: return "count mismatch";
    case ErrorCode::duplicate_id: return "duplicate id";
    case ErrorCode::invalid_label: return "invalid label";
    case ErrorCode::invalid_split: return "invalid split";
    case ErrorCode::malformed: return "malformed input";
    case ErrorCode::degenerate: return "degenerate input";
    case ErrorCode::missing_input: return "missing input";
    case ErrorCode::single_class: return "single class";
    case ErrorCode::empty_input: return "empty input";
    case ErrorCode::coverage: return "coverage error";
  }
  return "unknown";
}

std::string format_number(double value) {
  char buffer[64];
  const auto result = std::to_chars(buffer, buffer + sizeof(buffer), value);
  if (result.ec != std::errc{}) return "nan";
  return {buffer, result.ptr};
}

}  // namespace layerscope
