#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace urbanflux {

enum class ErrorKind {
  Usage,
  Config,
  Io,
  Parse,
  Range,
  OrderTime,
  DegenerateExtent,
  EmptyDataset,
  Shape,
  Divergence,
  ZeroGroundTruth,
  NormMismatch,
  Infeasible,
  NegativeCount,
};

const char* to_string(ErrorKind kind);

/// Process exit code for an error kind: 1 usage/config, 3 numeric
/// divergence, 2 for every other data error.
int exit_code(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error(ErrorKind::Parse, "line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class RangeError : public Error {
 public:
  explicit RangeError(const std::string& what, std::size_t line = 0)
      : Error(ErrorKind::Range, line ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class OrderTimeError : public Error {
 public:
  OrderTimeError(std::size_t line, const std::string& what)
      : Error(ErrorKind::OrderTime, "line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

#define URBANFLUX_SIMPLE_ERROR(Name, Kind)                                   \
  class Name : public Error {                                                \
   public:                                                                   \
    explicit Name(const std::string& what) : Error(ErrorKind::Kind, what) {} \
  };

URBANFLUX_SIMPLE_ERROR(UsageError, Usage)
URBANFLUX_SIMPLE_ERROR(ConfigError, Config)
URBANFLUX_SIMPLE_ERROR(IoError, Io)
URBANFLUX_SIMPLE_ERROR(DegenerateExtent, DegenerateExtent)
URBANFLUX_SIMPLE_ERROR(EmptyDataset, EmptyDataset)
URBANFLUX_SIMPLE_ERROR(ShapeError, Shape)
URBANFLUX_SIMPLE_ERROR(DivergenceError, Divergence)
URBANFLUX_SIMPLE_ERROR(ZeroGroundTruth, ZeroGroundTruth)
URBANFLUX_SIMPLE_ERROR(NormMismatch, NormMismatch)
URBANFLUX_SIMPLE_ERROR(Infeasible, Infeasible)
URBANFLUX_SIMPLE_ERROR(NegativeCount, NegativeCount)

#undef URBANFLUX_SIMPLE_ERROR

}  // namespace urbanflux
