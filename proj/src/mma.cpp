#include "pato/mma.hpp"

#include <cmath>
#include <stdexcept>

namespace pato {

Mma::Mma(std::int64_t n) : Mma(n, Options{}) {}

Mma::Mma(std::int64_t n, Options opts) : n_(n), opts_(opts) {
  if (n < 1) throw std::invalid_argument("mma: need at least one variable");
  if (!(opts_.xMax > opts_.xMin)) throw std::invalid_argument("mma: empty box");
  if (!(opts_.moveLimit > 0.0)) throw std::invalid_argument("mma: move limit must be > 0");
  reset();
}

void Mma::reset() {
  iter_ = 0;
  low_ = Eigen::VectorXd::Zero(n_);
  upp_ = Eigen::VectorXd::Zero(n_);
  xold1_ = Eigen::VectorXd::Zero(n_);
  xold2_ = Eigen::VectorXd::Zero(n_);
  alpha_ = Eigen::VectorXd::Zero(n_);
  beta_ = Eigen::VectorXd::Zero(n_);
}

Eigen::VectorXd Mma::update(const Eigen::VectorXd& x, const Eigen::VectorXd& dObj, double g,
                            const Eigen::VectorXd& dCon) {
  if (x.size() != n_ || dObj.size() != n_ || dCon.size() != n_)
    throw std::invalid_argument("mma: size mismatch");
  const double range = opts_.xMax - opts_.xMin;
  ++iter_;

  if (iter_ <= 2) {
    low_ = x.array() - opts_.asymptoteInit * range;
    upp_ = x.array() + opts_.asymptoteInit * range;
  } else {
    for (std::int64_t j = 0; j < n_; ++j) {
      const double trend = (x[j] - xold1_[j]) * (xold1_[j] - xold2_[j]);
      const double gamma =
          trend > 0.0 ? opts_.asymptoteIncrease : (trend < 0.0 ? opts_.asymptoteDecrease : 1.0);
      low_[j] = x[j] - gamma * (xold1_[j] - low_[j]);
      upp_[j] = x[j] + gamma * (upp_[j] - xold1_[j]);
      low_[j] = std::max(low_[j], x[j] - 10.0 * range);
      low_[j] = std::min(low_[j], x[j] - 0.01 * range);
      upp_[j] = std::min(upp_[j], x[j] + 10.0 * range);
      upp_[j] = std::max(upp_[j], x[j] + 0.01 * range);
    }
  }

  for (std::int64_t j = 0; j < n_; ++j) {
    alpha_[j] = std::max({opts_.xMin, low_[j] + 0.1 * (x[j] - low_[j]), x[j] - opts_.moveLimit});
    beta_[j] = std::min({opts_.xMax, upp_[j] - 0.1 * (upp_[j] - x[j]), x[j] + opts_.moveLimit});
  }

  // separable approximations: f ~ sum p/(U-x) + q/(x-L) with a convexity floor
  Eigen::VectorXd p0(n_), q0(n_), p1(n_), q1(n_);
  for (std::int64_t j = 0; j < n_; ++j) {
    const double ux = upp_[j] - x[j], xl = x[j] - low_[j];
    const double fp = std::max(dObj[j], 0.0), fm = std::max(-dObj[j], 0.0);
    const double floor0 = 0.001 * (fp + fm) + opts_.raa / range;
    p0[j] = (fp + floor0) * ux * ux;
    q0[j] = (fm + floor0) * xl * xl;
    const double gp = std::max(dCon[j], 0.0), gm = std::max(-dCon[j], 0.0);
    const double floor1 = 0.001 * (gp + gm) + opts_.raa / range;
    p1[j] = (gp + floor1) * ux * ux;
    q1[j] = (gm + floor1) * xl * xl;
  }
  double b = -g;
  for (std::int64_t j = 0; j < n_; ++j)
    b += p1[j] / (upp_[j] - x[j]) + q1[j] / (x[j] - low_[j]);

  auto primal = [&](double lambda, Eigen::VectorXd& xs) {
    for (std::int64_t j = 0; j < n_; ++j) {
      const double sp = std::sqrt(p0[j] + lambda * p1[j]);
      const double sq = std::sqrt(q0[j] + lambda * q1[j]);
      double v = (low_[j] * sp + upp_[j] * sq) / (sp + sq);
      xs[j] = std::min(beta_[j], std::max(alpha_[j], v));
    }
  };
  auto conValue = [&](const Eigen::VectorXd& xs) {
    double s = -b;
    for (std::int64_t j = 0; j < n_; ++j)
      s += p1[j] / (upp_[j] - xs[j]) + q1[j] / (xs[j] - low_[j]);
    return s;
  };

  Eigen::VectorXd xs(n_);

  // the constraint approximation attains its box minimum as lambda -> inf
  for (std::int64_t j = 0; j < n_; ++j) {
    const double sp = std::sqrt(p1[j]), sq = std::sqrt(q1[j]);
    const double v = (low_[j] * sp + upp_[j] * sq) / (sp + sq);
    xs[j] = std::min(beta_[j], std::max(alpha_[j], v));
  }
  if (conValue(xs) > 0.0)
    throw std::runtime_error("mma: constraint cannot be met inside the move-limited box");

  primal(0.0, xs);
  if (conValue(xs) > 0.0) {
    double lo = 0.0, hi = 1.0;
    primal(hi, xs);
    while (conValue(xs) > 0.0) {
      lo = hi;
      hi *= 2.0;
      if (hi > 1e14) break;  // feasibility was proven above; accept the cap
      primal(hi, xs);
    }
    while (hi - lo > opts_.dualTol * std::max(1.0, hi)) {
      const double mid = 0.5 * (lo + hi);
      primal(mid, xs);
      if (conValue(xs) > 0.0)
        lo = mid;
      else
        hi = mid;
    }
    primal(hi, xs);
  }

  xold2_ = xold1_;
  xold1_ = x;
  return xs;
}

}  // namespace pato
