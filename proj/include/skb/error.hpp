#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace skb {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes that cannot be combined.
class DimensionError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

// A precondition of an operation was violated by the caller.
class ContractViolation : public Error {
 public:
  using Error::Error;
};

// Structurally invalid input data (ragged strokes, bad cache header, ...).
class FormatError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t byte_offset)
      : Error(what + " (at byte " + std::to_string(byte_offset) + ")"), byte_offset_(byte_offset) {}
  std::size_t byte_offset() const noexcept { return byte_offset_; }

 private:
  std::size_t byte_offset_;
};

class DegenerateSketchError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  IoError(const std::string& what, std::string path) : Error(what + ": " + path), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace skb
