#pragma once

#include <stdexcept>
#include <string>

namespace pamlab {

enum class ErrorKind {
  InvalidArgument,
  Resource,
  Coverage,
  Boundary,
  Invariant,
  Parse,
};

/// Base class for every error raised by the library. The kind drives the
/// CLI exit-code taxonomy.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class InvalidArgument : public Error {
 public:
  explicit InvalidArgument(const std::string& what) : Error(ErrorKind::InvalidArgument, what) {}
};

class ResourceError : public Error {
 public:
  explicit ResourceError(const std::string& what) : Error(ErrorKind::Resource, what) {}
};

class CoverageError : public Error {
 public:
  explicit CoverageError(const std::string& what) : Error(ErrorKind::Coverage, what) {}
};

class BoundaryError : public Error {
 public:
  explicit BoundaryError(const std::string& what) : Error(ErrorKind::Boundary, what) {}
};

class InvariantError : public Error {
 public:
  explicit InvariantError(const std::string& what) : Error(ErrorKind::Invariant, what) {}
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, int line, int column)
      : Error(ErrorKind::Parse, "line " + std::to_string(line) + ", column " +
                                    std::to_string(column) + ": " + what),
        line_(line),
        column_(column) {}
  int line() const noexcept { return line_; }
  int column() const noexcept { return column_; }

 private:
  int line_;
  int column_;
};

}  // namespace pamlab
