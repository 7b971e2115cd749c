#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace couplet {

/// Operand dimensions do not conform.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// NaN/Inf or a non-distribution where a finite value or distribution is required.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed input file. `line` is 1-based, 0 when not line oriented.
struct FormatError : std::runtime_error {
  FormatError(const std::string& what, std::size_t line = 0)
      : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what),
        line(line) {}
  std::size_t line;
};

/// Beam search finished without any complete hypothesis.
struct DecodeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainingError : std::runtime_error {
  TrainingError(const std::string& what, std::size_t step)
      : std::runtime_error("step " + std::to_string(step) + ": " + what), step(step) {}
  std::size_t step;
};

struct SelectionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// A pipeline stage failed; `stage` names it.
struct StageError : std::runtime_error {
  StageError(std::string stage, const std::string& what)
      : std::runtime_error(stage + ": " + what), stage(std::move(stage)) {}
  std::string stage;
};

}  // namespace couplet
