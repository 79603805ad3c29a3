#pragma once

#include <stdexcept>
#include <string>

namespace spencer {

// Base for everything this library throws.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Incompatible tensor/parameter shapes. Messages name both shapes.
struct DimensionError : Error {
  using Error::Error;
};

// Out-of-range argument values (dropout rate >= 1, tau <= 0, k < 1, ...).
struct ParameterError : Error {
  using Error::Error;
};

// API contract violations: wrong model kind, non-scalar loss node,
// mismatched sequence lengths, compressing away every block.
struct ContractError : Error {
  using Error::Error;
};

// Zero-norm vectors fed to cosine or normalization.
struct DegenerateVectorError : Error {
  using Error::Error;
};

// Bad input data: duplicate ids, malformed JSONL lines, labels outside
// {0,1}, ids that cannot be resolved, missing ground truth.
struct DataError : Error {
  using Error::Error;
};

// File-level failures for checkpoints and indexes, split by cause so
// callers (and tests) can tell them apart.
struct FileError : Error {
  using Error::Error;
};
struct FormatError : FileError {
  using FileError::FileError;
};
struct VersionError : FileError {
  using FileError::FileError;
};
struct TruncatedError : FileError {
  using FileError::FileError;
};
struct ChecksumError : FileError {
  using FileError::FileError;
};

}  // namespace spencer
