#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <iostream>
#include <mutex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace nlcausal {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Index = Eigen::Index;
/// Sorted, duplicate-free list of 0-based coordinate indices.
using IndexSet = std::vector<Index>;

enum class ErrorCode {
  EmptyData,
  InvalidData,
  InvalidArgument,
  InvalidConfig,
  ParseError,
  SchemaError,
  IoError,
  DimensionMismatch,
  BadSliceCount,
  SingularCovariance,
  SingularGram,
  SupportTooLarge,
  NoConvergence,
  NegativeVariance,
  DegenerateDenominator,
  BootstrapFailure,
  TooFewSamples,
  DegenerateRatio,
  GridMismatch,
  DomainError,
  TooManyFailures,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::EmptyData: return "EmptyData";
    case ErrorCode::InvalidData: return "InvalidData";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::BadSliceCount: return "BadSliceCount";
    case ErrorCode::SingularCovariance: return "SingularCovariance";
    case ErrorCode::SingularGram: return "SingularGram";
    case ErrorCode::SupportTooLarge: return "SupportTooLarge";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::NegativeVariance: return "NegativeVariance";
    case ErrorCode::DegenerateDenominator: return "DegenerateDenominator";
    case ErrorCode::BootstrapFailure: return "BootstrapFailure";
    case ErrorCode::TooFewSamples: return "TooFewSamples";
    case ErrorCode::DegenerateRatio: return "DegenerateRatio";
    case ErrorCode::GridMismatch: return "GridMismatch";
    case ErrorCode::DomainError: return "DomainError";
    case ErrorCode::TooManyFailures: return "TooManyFailures";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require(bool condition, ErrorCode code, const std::string& what) {
  if (!condition) fail(code, what);
}

// Warnings go through a replaceable sink; the default writes to stderr.
using WarningHandler = std::function<void(std::string_view)>;

namespace detail {
struct WarningSink {
  std::mutex mutex;
  WarningHandler handler = [](std::string_view msg) { std::cerr << "warning: " << msg << '\n'; };
};
inline WarningSink& warning_sink() {
  static WarningSink sink;
  return sink;
}
}  // namespace detail

inline WarningHandler set_warning_handler(WarningHandler handler) {
  auto& sink = detail::warning_sink();
  std::lock_guard lock(sink.mutex);
  std::swap(sink.handler, handler);
  return handler;
}

inline void warn(std::string_view msg) {
  auto& sink = detail::warning_sink();
  std::lock_guard lock(sink.mutex);
  if (sink.handler) sink.handler(msg);
}

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.derived().array().isFinite().all();
}

}  // namespace nlcausal
