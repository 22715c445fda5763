#pragma once

#include <stdexcept>
#include <string>

namespace wtal {

// Error taxonomy shared by the whole pipeline. The CLI maps these onto
// process exit codes: usage errors -> 1, data/format errors -> 2,
// numeric/training errors -> 3.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape or dimensionality disagreement between tensors.
struct DimensionError : Error {
  using Error::Error;
};

// Invalid argument value (k out of range, threshold order, ...).
struct ParameterError : Error {
  using Error::Error;
};

// Malformed on-disk payload: bad magic, truncation, version mismatch.
struct FormatError : Error {
  using Error::Error;
};

// Dataset-level problems: missing files, invariant violations in manifests.
struct DataError : Error {
  using Error::Error;
};

// Non-finite values where finite ones are required.
struct NumericError : Error {
  using Error::Error;
};

// Training diverged (NaN loss) or could not proceed.
struct TrainingError : NumericError {
  using NumericError::NumericError;
};

// Metric computation impossible (no ground truth, empty split).
struct MetricError : Error {
  using Error::Error;
};

// Synthetic generation could not satisfy the requested spec.
struct GenerationError : Error {
  using Error::Error;
};

}  // namespace wtal
