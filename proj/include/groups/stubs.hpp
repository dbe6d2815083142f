#pragma once

// Synthetic reward functions on the realized parameter matrix. In
// per-timestep mode the reward is taken on the mean of the T matrices.

#include <string>

#include <Eigen/Core>

#include "groups/environment.hpp"

namespace groups {

Eigen::MatrixXd average_parameters(const PolicyExecutor& policy);

class ConstantEnvironment : public Environment {
 public:
  explicit ConstantEnvironment(double value = 0.0) : value_(value) {}
  double evaluate(const PolicyExecutor&, std::uint64_t) const override { return value_; }
  std::string name() const override { return "constant"; }

 private:
  double value_;
};

/// R(theta) = -||theta - theta*||_F^2.
class QuadraticEnvironment : public Environment {
 public:
  explicit QuadraticEnvironment(Eigen::MatrixXd optimum) : optimum_(std::move(optimum)) {}
  double evaluate(const PolicyExecutor& policy, std::uint64_t) const override {
    return -(average_parameters(policy) - optimum_).squaredNorm();
  }
  std::string name() const override { return "quadratic"; }
  const Eigen::MatrixXd& optimum() const { return optimum_; }

 private:
  Eigen::MatrixXd optimum_;
};

/// Ridge with a planted rank-1 improvement direction u in action space:
///   R(theta) = sum_j [ slope * u^T theta_j - curvature * ||(I - u u^T) theta_j||^2 ].
/// Progress is only possible along u, so a learner that aligns its latent
/// exploration with u moves faster than one exploring every axis.
class PlantedRidgeEnvironment : public Environment {
 public:
  PlantedRidgeEnvironment(Eigen::VectorXd direction, double slope, double curvature);
  double evaluate(const PolicyExecutor& policy, std::uint64_t) const override;
  std::string name() const override { return "planted_ridge"; }
  const Eigen::VectorXd& direction() const { return u_; }

 private:
  Eigen::VectorXd u_;
  double slope_, curvature_;
};

/// Largest principal angle (degrees) between span(basis) and span(subspace).
/// Both arguments hold spanning vectors as columns; the angle is computed
/// over min(rank) directions.
double largest_principal_angle_deg(const Eigen::MatrixXd& basis, const Eigen::MatrixXd& subspace);

/// Leading `count` left singular vectors of W.
Eigen::MatrixXd dominant_subspace(const Eigen::MatrixXd& W, int count);

}  // namespace groups
