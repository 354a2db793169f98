#include "aqi/error.hpp"

namespace aqi {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidInput: return "invalid-input";
    case ErrorCode::kInsufficientLabels: return "insufficient-labels";
    case ErrorCode::kInsufficientData: return "insufficient-data";
    case ErrorCode::kMissingData: return "missing-data";
    case ErrorCode::kNoContext: return "no-context";
    case ErrorCode::kInvalidK: return "invalid-k";
    case ErrorCode::kInvalidTrajectory: return "invalid-trajectory";
    case ErrorCode::kInvalidPollutant: return "invalid-pollutant";
    case ErrorCode::kUnrecoverableSeries: return "unrecoverable-series";
    case ErrorCode::kSchema: return "schema";
    case ErrorCode::kInvalidConfig: return "invalid-config";
    case ErrorCode::kShape: return "shape";
    case ErrorCode::kEmptyNeighborhood: return "empty-neighborhood";
    case ErrorCode::kInvalidCategory: return "invalid-category";
    case ErrorCode::kStaleState: return "stale-state";
    case ErrorCode::kDivergence: return "divergence";
    case ErrorCode::kInvalidModel: return "invalid-model";
    case ErrorCode::kUnknownVariant: return "unknown-variant";
    case ErrorCode::kMissingArtifact: return "missing-artifact";
    case ErrorCode::kIo: return "io";
  }
  return "unknown";
}

Error::Error(ErrorCode code, const std::string& what)
    : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace aqi
