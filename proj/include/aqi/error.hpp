#pragma once

#include <stdexcept>
#include <string>

namespace aqi {

// Error categories surfaced by the library. The CLI maps them onto exit codes.
enum class ErrorCode {
  kInvalidInput,
  kInsufficientLabels,
  kInsufficientData,
  kMissingData,
  kNoContext,
  kInvalidK,
  kInvalidTrajectory,
  kInvalidPollutant,
  kUnrecoverableSeries,
  kSchema,
  kInvalidConfig,
  kShape,
  kEmptyNeighborhood,
  kInvalidCategory,
  kStaleState,
  kDivergence,
  kInvalidModel,
  kUnknownVariant,
  kMissingArtifact,
  kIo,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& what);

inline void require(bool condition, ErrorCode code, const std::string& what) {
  if (!condition) fail(code, what);
}

}  // namespace aqi
