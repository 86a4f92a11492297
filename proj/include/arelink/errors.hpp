#pragma once

#include <stdexcept>
#include <string>

namespace arelink {

/// Base for every error raised by the library. `kind()` is a short
/// machine-readable tag used by the CLI and the HTTP server.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

class GeometryError : public Error {
 public:
  explicit GeometryError(const std::string& what) : Error("geometry", what) {}
};

class InputError : public Error {
 public:
  explicit InputError(const std::string& what) : Error("input", what) {}
};

class NbError : public Error {
 public:
  explicit NbError(const std::string& what) : Error("nb", what) {}
};

class FitError : public Error {
 public:
  explicit FitError(const std::string& what) : Error("fit", what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error("io", what) {}
};

}  // namespace arelink
