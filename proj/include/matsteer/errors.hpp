#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace matsteer {

/// Process exit status associated with each error family.
enum class ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kIo = 2,
  kNumeric = 3,
};

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual ExitCode exit_code() const noexcept { return ExitCode::kUsage; }
};

/// Bad arguments to an in-process call (dimension mismatch, out-of-range ids).
class InputError : public Error {
 public:
  using Error::Error;
};

/// Labeled data that cannot form a valid attribute dataset.
class DatasetError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Bundle and data disagree on d_model, attribute count or layer.
class CompatibilityError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::kIo; }
};

class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }
  ExitCode exit_code() const noexcept override { return ExitCode::kIo; }

 private:
  std::size_t offset_;
};

class NumericError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::kNumeric; }
};

class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, std::size_t step)
      : Error(what + " at step " + std::to_string(step)), step_(step) {}
  std::size_t step() const noexcept { return step_; }
  ExitCode exit_code() const noexcept override { return ExitCode::kNumeric; }

 private:
  std::size_t step_;
};

}  // namespace matsteer
