#pragma once

#include <stdexcept>
#include <string>

namespace elnet {

// Error families mapped onto distinct CLI exit codes.
struct IoError : std::runtime_error {
  explicit IoError(const std::string& m) : std::runtime_error(m) {}
};

struct UsageError : std::runtime_error {
  explicit UsageError(const std::string& m) : std::runtime_error(m) {}
};

struct DivergenceError : std::runtime_error {
  explicit DivergenceError(const std::string& m) : std::runtime_error(m) {}
};

struct AuditError : std::runtime_error {
  explicit AuditError(const std::string& m) : std::runtime_error(m) {}
};

}  // namespace elnet
