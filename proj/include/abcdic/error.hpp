#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace abcdic {

/// Failure categories.  The CLI maps each one to its own exit code.
enum class ErrorKind {
  invalid_argument = 2,
  config = 3,
  unknown_model = 4,
  table_io = 5,
  simulation = 6,
  numeric = 7,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// A simulator produced an unusable summary vector.
class SimulationError : public Error {
 public:
  SimulationError(std::uint64_t seed, const std::string& what)
      : Error(ErrorKind::simulation, what + " (seed " + std::to_string(seed) + ")"), seed_(seed) {}
  std::uint64_t seed() const noexcept { return seed_; }

 private:
  std::uint64_t seed_;
};

/// Malformed or truncated reference-table file.
class TableIoError : public Error {
 public:
  TableIoError(std::size_t line, const std::string& what)
      : Error(ErrorKind::table_io,
              line > 0 ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Iterative fit that failed to converge; keeps the last iterate for diagnosis.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, std::vector<double> last_iterate, double gradient_norm)
      : Error(ErrorKind::numeric, what + " (gradient norm " + std::to_string(gradient_norm) + ")"),
        last_iterate_(std::move(last_iterate)),
        gradient_norm_(gradient_norm) {}
  const std::vector<double>& last_iterate() const noexcept { return last_iterate_; }
  double gradient_norm() const noexcept { return gradient_norm_; }

 private:
  std::vector<double> last_iterate_;
  double gradient_norm_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace abcdic
