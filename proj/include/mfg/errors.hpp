#ifndef MFG_ERRORS_HPP
#define MFG_ERRORS_HPP

#include <stdexcept>
#include <string>
#include <vector>

namespace mfg {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on an argument was violated.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// An integrator or solver produced a NaN/Inf.
class NonFiniteError : public Error {
 public:
  NonFiniteError(const std::string& what, std::size_t node)
      : Error(what + " (node " + std::to_string(node) + ")"), node_(node) {}
  std::size_t node() const { return node_; }

 private:
  std::size_t node_;
};

/// Enumerating S^d_N would exceed the configured cap.
class StateSpaceTooLarge : public Error {
 public:
  StateSpaceTooLarge(unsigned long long size, unsigned long long cap)
      : Error("state space too large: " + std::to_string(size) + " states (cap " +
              std::to_string(cap) + ")"),
        size_(size) {}
  unsigned long long size() const { return size_; }

 private:
  unsigned long long size_;
};

/// An iterative method stopped without meeting its tolerance.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, std::vector<double> history)
      : Error(what), history_(std::move(history)) {}
  /// Per-iteration gap (or residual) sequence up to the failure.
  const std::vector<double>& history() const { return history_; }

 private:
  std::vector<double> history_;
};

}  // namespace mfg

#endif  // MFG_ERRORS_HPP
