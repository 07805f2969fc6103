#pragma once

#include <Eigen/Dense>

#include <cstdint>

namespace pato {

/// Method of Moving Asymptotes update for box-bounded designs with one
/// inequality constraint. The convex separable subproblem is solved exactly
/// through its scalar dual (single multiplier, bisection), which reaches the
/// same KKT point an interior-point solve would.
class Mma {
 public:
  struct Options {
    double xMin = 0.0;
    double xMax = 1.0;
    double moveLimit = 0.2;
    double asymptoteInit = 0.5;      // times the variable range
    double asymptoteIncrease = 1.2;
    double asymptoteDecrease = 0.7;
    double raa = 1e-5;               // convexity floor
    double dualTol = 1e-9;
  };

  explicit Mma(std::int64_t n);
  Mma(std::int64_t n, Options opts);

  /// One design update. g is the constraint value at x (feasible when <= 0),
  /// dObj/dCon the gradients at x. Throws std::runtime_error if the constraint
  /// cannot be met inside the move-limited box.
  Eigen::VectorXd update(const Eigen::VectorXd& x, const Eigen::VectorXd& dObj, double g,
                         const Eigen::VectorXd& dCon);

  void reset();

  const Eigen::VectorXd& lowerAsymptote() const { return low_; }
  const Eigen::VectorXd& upperAsymptote() const { return upp_; }
  const Eigen::VectorXd& lowerBound() const { return alpha_; }
  const Eigen::VectorXd& upperBound() const { return beta_; }
  int iteration() const { return iter_; }

 private:
  std::int64_t n_;
  Options opts_;
  int iter_ = 0;
  Eigen::VectorXd low_, upp_, xold1_, xold2_, alpha_, beta_;
};

}  // namespace pato
