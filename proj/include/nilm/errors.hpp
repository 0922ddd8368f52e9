#pragma once

#include <stdexcept>
#include <string>

namespace nilm {

// Error taxonomy used across the toolkit. The category drives the CLI
// exit code: config -> 2, data -> 3, checkpoint -> 4.
enum class ErrorCategory { config, data, checkpoint };

class Error : public std::runtime_error {
public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

private:
  ErrorCategory category_;
};

// A column layout, config file, or dataset description is malformed.
class LayoutError : public Error {
public:
  explicit LayoutError(const std::string& what)
      : Error(ErrorCategory::config, what) {}
};

// An operation was asked to do something its contract forbids
// (bad architecture, invalid parameter combination, ...).
class SpecError : public Error {
public:
  explicit SpecError(const std::string& what)
      : Error(ErrorCategory::config, what) {}
};

// Tensor/parameter shapes do not line up.
class ShapeError : public SpecError {
public:
  explicit ShapeError(const std::string& what) : SpecError(what) {}
};

// Resampling to a shorter period than the source data provides.
class UpsampleError : public SpecError {
public:
  explicit UpsampleError(const std::string& what) : SpecError(what) {}
};

// A layer selector referenced a layer that does not exist.
class SelectorError : public Error {
public:
  explicit SelectorError(const std::string& what)
      : Error(ErrorCategory::config, what) {}
};

// A transfer plan is inconsistent with the source checkpoint.
class PlanError : public Error {
public:
  explicit PlanError(const std::string& what)
      : Error(ErrorCategory::config, what) {}
};

class DataError : public Error {
public:
  explicit DataError(const std::string& what)
      : Error(ErrorCategory::data, what) {}
};

class EmptyInputError : public DataError {
public:
  explicit EmptyInputError(const std::string& what) : DataError(what) {}
};

class NoOverlapError : public DataError {
public:
  explicit NoOverlapError(const std::string& what) : DataError(what) {}
};

class CheckpointError : public Error {
public:
  explicit CheckpointError(const std::string& what)
      : Error(ErrorCategory::checkpoint, what) {}
};

inline int exit_code_for(const Error& e) {
  switch (e.category()) {
    case ErrorCategory::config: return 2;
    case ErrorCategory::data: return 3;
    case ErrorCategory::checkpoint: return 4;
  }
  return 1;
}

}  // namespace nilm
