#pragma once

#include <stdexcept>
#include <string>

namespace eal2d {

// Precondition violated by a caller (bad shape, out-of-range index, ...).
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Non-finite loss, gradient or weight produced during training.
class TrainingDivergence : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed dataset, prior or config file. Carries the 1-based line when known.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : std::runtime_error(line ? what + " (line " + std::to_string(line) + ")" : what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Operation needs an analytic generative model the task does not have.
class UnsupportedTask : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace eal2d
