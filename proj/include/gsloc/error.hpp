// Copyright Contributors to the gsloc Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace gsloc {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// A file is structurally malformed (missing property, bad magic, truncated).
class SchemaError : public Error {
  public:
    using Error::Error;
};

/// Input values violate an invariant (non-finite value, duplicate id, dimension mismatch).
class DataError : public Error {
  public:
    using Error::Error;
};

/// A parameter lies outside its admissible domain.
class DomainError : public Error {
  public:
    using Error::Error;
};

/// Pose estimation could not produce a model.
class LocalizationFailure : public Error {
  public:
    using Error::Error;
};

} // namespace gsloc
