#pragma once

#include <stdexcept>
#include <string>

namespace dipli {

enum class ErrorCode {
  UnknownFormat,
  CorruptHeader,
  TruncatedData,
  IoFailure,
  NonPositiveSigma,
  ZeroOutputSize,
  ShapeMismatch,
  TooSmall,
  OddSpatialDims,
  NonScalarLoss,
  MissingGrad,
  TooSmallForPyramid,
  ZeroMass,
  DimNotDivisible,
  LengthMismatch,
  EmptyStack,
  BadDims,
  InvalidConfig,
  ZeroCount,
  NonFiniteLoss,
  ConfigError,
};

inline const char* error_code_name(ErrorCode c) {
  switch (c) {
    case ErrorCode::UnknownFormat: return "UnknownFormat";
    case ErrorCode::CorruptHeader: return "CorruptHeader";
    case ErrorCode::TruncatedData: return "TruncatedData";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::NonPositiveSigma: return "NonPositiveSigma";
    case ErrorCode::ZeroOutputSize: return "ZeroOutputSize";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::TooSmall: return "TooSmall";
    case ErrorCode::OddSpatialDims: return "OddSpatialDims";
    case ErrorCode::NonScalarLoss: return "NonScalarLoss";
    case ErrorCode::MissingGrad: return "MissingGrad";
    case ErrorCode::TooSmallForPyramid: return "TooSmallForPyramid";
    case ErrorCode::ZeroMass: return "ZeroMass";
    case ErrorCode::DimNotDivisible: return "DimNotDivisible";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::EmptyStack: return "EmptyStack";
    case ErrorCode::BadDims: return "BadDims";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::ZeroCount: return "ZeroCount";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

// All library failures surface as this exception. what() is formatted as
// "CodeName: detail" so callers (and the CLI) can emit machine-parsable
// diagnostics.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + detail),
        code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& detail) {
  throw Error(code, detail);
}

inline void require(bool cond, ErrorCode code, const std::string& detail) {
  if (!cond) fail(code, detail);
}

}  // namespace dipli
