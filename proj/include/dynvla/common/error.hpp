#pragma once

#include <stdexcept>
#include <string>

namespace dynvla {

// Bad configuration value, unknown key, unknown scenario kind, ...
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A caller broke a documented precondition (shape mismatch, out-of-range id).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Malformed token sequence or file content.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite loss or collapse during training. Carries a diagnostics string.
class TrainingFault : public std::runtime_error {
 public:
  TrainingFault(const std::string& what, std::string diagnostics)
      : std::runtime_error(what), diagnostics_(std::move(diagnostics)) {}
  const std::string& diagnostics() const noexcept { return diagnostics_; }

 private:
  std::string diagnostics_;
};

#define DYNVLA_EXPECT(cond, msg)                                   \
  do {                                                             \
    if (!(cond)) throw ::dynvla::ContractViolation(std::string(msg)); \
  } while (0)

}  // namespace dynvla
