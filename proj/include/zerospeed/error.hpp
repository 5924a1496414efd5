#pragma once

#include <stdexcept>
#include <string>

namespace zerospeed {

// Base of every error raised by the library. Each subclass maps to one
// failure category so callers (and the CLI exit-code table) can dispatch on
// type rather than on message text.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Image or pyramid too small / zero-sized.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Invalid parameter combination, degenerate ROI, malformed config file.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Frames or tracker steps delivered out of order.
class SequencingError : public Error {
 public:
  using Error::Error;
};

// Unreadable or missing input (frame files, directories, signal files).
class InputError : public Error {
 public:
  using Error::Error;
};

// Malformed text input; carries the 1-based line number.
class ParseError : public InputError {
 public:
  ParseError(const std::string& what, std::size_t line)
      : InputError(what + " (line " + std::to_string(line) + ")"), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// RANSAC was handed fewer correspondences than its minimum.
class InsufficientMatchesError : public Error {
 public:
  using Error::Error;
};

// RANSAC found no model with enough support.
class DegenerateGeometryError : public Error {
 public:
  using Error::Error;
};

// Prediction and ground-truth streams do not line up frame by frame.
class AlignmentError : public Error {
 public:
  using Error::Error;
};

}  // namespace zerospeed
