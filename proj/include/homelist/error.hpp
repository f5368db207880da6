#pragma once

#include <stdexcept>
#include <string>

namespace homelist {

// Base class for every error raised by the library. `kind()` is a short
// machine-readable tag used by the CLI's single-line error output.
class Error : public std::runtime_error {
public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

private:
  std::string kind_;
};

struct ValidationError : Error {
  explicit ValidationError(const std::string& what) : Error("validation", what) {}
};

struct ParseError : Error {
  explicit ParseError(const std::string& what) : Error("parse", what) {}
};

struct InsufficientDataError : Error {
  explicit InsufficientDataError(const std::string& what) : Error("insufficient_data", what) {}
};

struct RankDeficientError : Error {
  explicit RankDeficientError(const std::string& what) : Error("rank_deficient", what) {}
};

struct SeparationError : Error {
  explicit SeparationError(const std::string& what) : Error("separation", what) {}
};

struct ConvergenceError : Error {
  explicit ConvergenceError(const std::string& what) : Error("convergence", what) {}
};

struct ModelError : Error {
  explicit ModelError(const std::string& what) : Error("model", what) {}
};

}  // namespace homelist
