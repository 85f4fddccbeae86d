#pragma once

#include <stdexcept>
#include <string>

namespace motalign {

// Base of every domain error raised by the library. The CLI maps these to
// exit code 1 and the HTTP service to a 4xx/5xx body with `code`.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& m) : Error("dimension_error", m) {}
};

class ContractError : public Error {
 public:
  explicit ContractError(const std::string& m) : Error("contract_error", m) {}
};

class DegenerateError : public Error {
 public:
  explicit DegenerateError(const std::string& m) : Error("degenerate_error", m) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& m) : Error("numeric_error", m) {}
};

class InputError : public Error {
 public:
  explicit InputError(const std::string& m) : Error("input_error", m) {}
};

class UnsupportedError : public Error {
 public:
  explicit UnsupportedError(const std::string& m) : Error("unsupported", m) {}
};

class IntegrityError : public Error {
 public:
  explicit IntegrityError(const std::string& m) : Error("integrity_error", m) {}
};

class ConfigMismatchError : public Error {
 public:
  explicit ConfigMismatchError(const std::string& m) : Error("config_mismatch", m) {}
};

class ResolutionError : public Error {
 public:
  explicit ResolutionError(const std::string& m) : Error("resolution_error", m) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& m) : Error("io_error", m) {}
};

// Remote provider failure. Carries enough to decide whether retrying later
// makes sense.
class TransportError : public Error {
 public:
  TransportError(const std::string& m, int attempts, int last_status)
      : Error("transport_error", m), attempts_(attempts), last_status_(last_status) {}

  int attempts() const noexcept { return attempts_; }
  // HTTP status of the last attempt, or -1 when no response was received.
  int last_status() const noexcept { return last_status_; }

 private:
  int attempts_;
  int last_status_;
};

}  // namespace motalign
