#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hashemb {

/// Argument outside an operation's domain (bad id, mismatched dimension,
/// duplicate vocabulary entry, ...).
class InputDomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed input text. `line()` is 1-based; 0 when not applicable.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error(line ? what + " (line " + std::to_string(line) + ")"
                                : what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Well-formed input that violates a semantic constraint (label out of
/// range, class-count mismatch).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Binary file with wrong magic, version or truncated payload.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operation not available for the structure's configuration, e.g.
/// importance inspection on a hashed token->id mapping.
class UnsupportedModeError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class ResourceError : public std::runtime_error {
 public:
  ResourceError(const std::string& what, std::size_t bytes)
      : std::runtime_error(what + " (" + std::to_string(bytes) + " bytes)"),
        bytes_(bytes) {}
  std::size_t bytes() const noexcept { return bytes_; }

 private:
  std::size_t bytes_;
};

}  // namespace hashemb
