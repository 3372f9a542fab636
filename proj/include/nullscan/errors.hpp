#pragma once

#include <stdexcept>
#include <string>

namespace nullscan {

/// Base for every error raised by the library. `exit_code` follows the CLI
/// contract: 2 = usage/input error, 3 = numerical failure.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string &what, int exit_code = 2)
      : std::runtime_error(what), exit_code_(exit_code) {}
  int exit_code() const noexcept { return exit_code_; }

 private:
  int exit_code_;
};

class InputError : public Error {
 public:
  using Error::Error;
};

class DatasetError : public InputError {
 public:
  using InputError::InputError;
};

class EmptyDataset : public DatasetError {
 public:
  explicit EmptyDataset(const std::string &what) : DatasetError(what) {}
};

class DegenerateClassBalance : public DatasetError {
 public:
  explicit DegenerateClassBalance(const std::string &what)
      : DatasetError(what) {}
};

class VocabError : public InputError {
 public:
  using InputError::InputError;
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string &what) : Error(what, 2) {}
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string &what) : Error(what, 3) {}
};

class CheckpointError : public InputError {
 public:
  using InputError::InputError;
};

}  // namespace nullscan
