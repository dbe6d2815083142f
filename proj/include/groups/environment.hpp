#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "groups/policy.hpp"

namespace groups {

/// Realized parameters of one rollout. Holds one D x J matrix when the
/// exploration draw is reused for the whole episode, or T matrices when a new
/// draw is made at every timestep.
class PolicyExecutor {
 public:
  PolicyExecutor(BasisConfig basis, std::vector<Eigen::MatrixXd> thetas)
      : basis_(basis), thetas_(std::move(thetas)) {
    if (thetas_.empty()) throw std::invalid_argument("PolicyExecutor: no parameters");
    if (thetas_.size() != 1 && static_cast<int>(thetas_.size()) != basis_.period_steps)
      throw std::invalid_argument("PolicyExecutor: expected 1 or T parameter matrices");
  }

  static PolicyExecutor mean_policy(const PolicyParamsd& p) { return {p.basis, {p.M}}; }

  int steps() const { return basis_.period_steps; }
  int action_dim() const { return static_cast<int>(thetas_.front().rows()); }
  const BasisConfig& basis() const { return basis_; }

  const Eigen::MatrixXd& theta(int t = 0) const {
    return thetas_.size() == 1 ? thetas_.front() : thetas_.at(static_cast<std::size_t>(t));
  }
  const std::vector<Eigen::MatrixXd>& thetas() const { return thetas_; }

  Eigen::VectorXd action(int t) const { return action_from_parameters(theta(t), t, basis_); }

 private:
  BasisConfig basis_;
  std::vector<Eigen::MatrixXd> thetas_;
};

/// Thrown by an environment when a single rollout could not be evaluated.
/// The batch collector discards the rollout and redraws it.
struct EnvironmentFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Episodic reward oracle. Implementations must be pure functions of the
/// executor and the seed.
class Environment {
 public:
  virtual ~Environment() = default;
  virtual double evaluate(const PolicyExecutor& policy, std::uint64_t seed) const = 0;
  virtual std::string name() const = 0;
};

}  // namespace groups
