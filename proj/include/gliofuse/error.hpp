#pragma once

#include <stdexcept>
#include <string>

namespace gliofuse {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad user input: malformed files, inconsistent arguments, missing paths.
/// The CLI maps these to exit code 2.
class InputError : public Error {
 public:
  using Error::Error;
};

/// NIfTI header or payload could not be parsed. `field()` names the
/// offending header field (or "data" for payload problems).
class ParseError : public InputError {
 public:
  ParseError(std::string field, const std::string& what)
      : InputError("NIfTI parse error in field '" + field + "': " + what),
        field_(std::move(field)),
        detail_(what) {}

  const std::string& field() const noexcept { return field_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  std::string field_;
  std::string detail_;
};

class UnsupportedDtypeError : public InputError {
 public:
  explicit UnsupportedDtypeError(int code)
      : InputError("unsupported NIfTI datatype code " + std::to_string(code) +
                   " (supported: 2=uint8, 4=int16, 16=float32)"),
        code_(code) {}

  int code() const noexcept { return code_; }

 private:
  int code_;
};

class GeometryError : public InputError {
 public:
  using InputError::InputError;
};

class IoError : public InputError {
 public:
  using InputError::InputError;
};

}  // namespace gliofuse
