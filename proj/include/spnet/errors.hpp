#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace spnet {

/// Base class of every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidEllipse : public Error {
 public:
  using Error::Error;
};

class DegenerateAngle : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& file, std::size_t line, const std::string& what)
      : Error(file + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class PlacementError : public Error {
 public:
  using Error::Error;
};

class CellOverflow : public Error {
 public:
  CellOverflow(int row, int col)
      : Error("more than the allowed antinodes in grid cell (" + std::to_string(row) + ", " +
              std::to_string(col) + ")"),
        row_(row),
        col_(col) {}
  int row() const { return row_; }
  int col() const { return col_; }

 private:
  int row_;
  int col_;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class StaleTape : public Error {
 public:
  StaleTape() : Error("backward called without a recorded forward pass") {}
};

/// Metric is not defined for the given input (e.g. zero ground-truth objects).
class Undefined : public Error {
 public:
  using Error::Error;
};

class EmptySeries : public Error {
 public:
  using Error::Error;
};

class NoOscillation : public Error {
 public:
  using Error::Error;
};

}  // namespace spnet
