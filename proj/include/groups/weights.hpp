#pragma once

#include <Eigen/Core>

namespace groups {

/// Softmax reward weights scaled to sum to H:
///   d_h = H exp(beta (R_h - max R)) / sum_h exp(beta (R_h - max R)).
/// Throws std::invalid_argument on non-finite rewards or beta <= 0.
Eigen::VectorXd reward_to_weights(const Eigen::VectorXd& rewards, double beta);

/// (sum d)^2 / sum d^2.
double effective_sample_size(const Eigen::VectorXd& weights);

struct Temperature {
  double beta = 1.0;
  double ess = 0.0;
  bool uniform = false;    // all rewards equal, weights are uniform
  bool saturated = false;  // target ESS only reached as beta -> infinity
};

/// Finds beta such that the ESS of the weights is H/2. Bisection runs on
/// log(beta * std(R)) over [1e-6, 1e6]. Rewards enter only through
/// R_h - max R, so shifting every reward by a constant that is exactly
/// representable leaves the result bitwise unchanged.
Temperature auto_temperature(const Eigen::VectorXd& rewards);

}  // namespace groups
