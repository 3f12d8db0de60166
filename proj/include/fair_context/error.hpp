#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fairctx {

enum class ErrorCode {
  invalid_argument,
  missing_column,
  non_binary_column,
  empty_dataset,
  degenerate_stratum,
  too_few_rows,
  empty_group,
  empty_condition_cell,
  constant_sensitive,
  dimension_mismatch,
  empty_calibration,
  empty_selection,
  empty_context,
  non_finite_loss,
  adapter_unavailable,
  protocol_error,
  adapter_error,
  timeout,
  empty_input,
  io_error,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return "InvalidArgument";
    case ErrorCode::missing_column: return "MissingColumn";
    case ErrorCode::non_binary_column: return "NonBinaryColumn";
    case ErrorCode::empty_dataset: return "EmptyDataset";
    case ErrorCode::degenerate_stratum: return "DegenerateStratum";
    case ErrorCode::too_few_rows: return "TooFewRows";
    case ErrorCode::empty_group: return "EmptyGroup";
    case ErrorCode::empty_condition_cell: return "EmptyConditionCell";
    case ErrorCode::constant_sensitive: return "ConstantSensitive";
    case ErrorCode::dimension_mismatch: return "DimensionMismatch";
    case ErrorCode::empty_calibration: return "EmptyCalibration";
    case ErrorCode::empty_selection: return "EmptySelection";
    case ErrorCode::empty_context: return "EmptyContext";
    case ErrorCode::non_finite_loss: return "NonFiniteLoss";
    case ErrorCode::adapter_unavailable: return "AdapterUnavailable";
    case ErrorCode::protocol_error: return "ProtocolError";
    case ErrorCode::adapter_error: return "AdapterError";
    case ErrorCode::timeout: return "Timeout";
    case ErrorCode::empty_input: return "EmptyInput";
    case ErrorCode::io_error: return "IoError";
  }
  return "Unknown";
}

/// Every failure raised by the library. The code identifies the error
/// kind; the message carries the offending name/value.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail),
        code_(code),
        detail_(detail) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

  /// Same error with a context prefix, e.g. "seed 3, fold 1".
  Error annotated(const std::string& context) const {
    return Error(code_, "[" + context + "] " + detail_);
  }

 private:
  ErrorCode code_;
  std::string detail_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& detail) {
  throw Error(code, detail);
}

inline void require(bool condition, ErrorCode code, const std::string& detail) {
  if (!condition) fail(code, detail);
}

}  // namespace fairctx
