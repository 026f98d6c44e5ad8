// Copyright 2026 the seau authors
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <stdexcept>
#include <string>

namespace seau {

// Every failure in the library is reported as an Error with a Kind.  The CLI
// maps kinds onto process exit codes (usage 1, data 2, numeric 3).
class Error : public std::runtime_error {
 public:
  enum class Kind {
    kConfig,      // invalid configuration or precondition on settings
    kData,        // bad or inconsistent data supplied by the caller
    kNotFound,    // missing split, file or artifact
    kIntegrity,   // file exists but its contents are corrupt
    kShape,       // tensor/matrix shape mismatch
    kNumeric,     // NaN/Inf or other numeric failure
    kState,       // API called in the wrong order
    kCheckpoint,  // checkpoint incompatible with the requested model
  };

  Error(Kind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& m) : Error(Kind::kConfig, m) {}
};
struct DataError : Error {
  explicit DataError(const std::string& m) : Error(Kind::kData, m) {}
};
struct NotFoundError : Error {
  explicit NotFoundError(const std::string& m) : Error(Kind::kNotFound, m) {}
};
struct IntegrityError : Error {
  explicit IntegrityError(const std::string& m) : Error(Kind::kIntegrity, m) {}
};
struct ShapeError : Error {
  explicit ShapeError(const std::string& m) : Error(Kind::kShape, m) {}
};
struct NumericError : Error {
  explicit NumericError(const std::string& m) : Error(Kind::kNumeric, m) {}
};
struct StateError : Error {
  explicit StateError(const std::string& m) : Error(Kind::kState, m) {}
};
struct CheckpointError : Error {
  explicit CheckpointError(const std::string& m) : Error(Kind::kCheckpoint, m) {}
};

}  // namespace seau
