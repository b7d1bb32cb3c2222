#pragma once

#include <stdexcept>
#include <string>
#include <utility>

#include <Eigen/Dense>

namespace rankpool {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input data or configuration breaks a documented precondition.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// Newton iterations for the rank-pool objective ran out before the
/// gradient-norm tolerance was met. Carries the best iterate.
class SolverDidNotConverge : public Error {
 public:
  SolverDidNotConverge(std::string msg, Eigen::VectorXd best, double grad_norm)
      : Error(std::move(msg)), best_(std::move(best)), grad_norm_(grad_norm) {}

  const Eigen::VectorXd& best() const noexcept { return best_; }
  double grad_norm() const noexcept { return grad_norm_; }

  /// Same error with `where` prepended to the message.
  SolverDidNotConverge with_context(const std::string& where) const {
    return SolverDidNotConverge(where + ": " + what(), best_, grad_norm_);
  }

 private:
  Eigen::VectorXd best_;
  double grad_norm_;
};

/// A gradient formula was asked to differentiate at a non-stationary point.
class NotConverged : public Error {
 public:
  using Error::Error;
};

/// Sherman-Morrison denominator vanished.
class DegenerateUpdate : public Error {
 public:
  using Error::Error;
};

/// Pivot breakdown during elimination.
class SingularMatrix : public Error {
 public:
  using Error::Error;
};

/// Recursive rank pooling needs at least two frames.
class PrefixTooShort : public Error {
 public:
  using Error::Error;
};

/// A class has no training examples, or fewer than two classes exist.
class DegenerateLabels : public Error {
 public:
  using Error::Error;
};

}  // namespace rankpool
