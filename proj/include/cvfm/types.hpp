#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace cvfm {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using IntMatrix = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic>;
using IntVector = Eigen::VectorXi;
using CountMatrix = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;

/// Raised when a caller violates an operation's preconditions
/// (dimension mismatch, out-of-range argument, negative count, ...).
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised by the sampler when a state component becomes non-finite.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(long iteration, std::string block, const std::string& what)
      : std::runtime_error(what), iteration_(iteration), block_(std::move(block)) {}

  long iteration() const noexcept { return iteration_; }
  const std::string& block() const noexcept { return block_; }

 private:
  long iteration_;
  std::string block_;
};

/// Malformed input files or configuration.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool ok, const std::string& message) {
  if (!ok) throw ContractError(message);
}

}  // namespace cvfm
