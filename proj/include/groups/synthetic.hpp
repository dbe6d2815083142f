#pragma once

// Seeded problem instances on the synthetic reward stubs.

#include <cstdint>
#include <memory>

#include "groups/policy.hpp"
#include "groups/stubs.hpp"

namespace groups {

struct QuadraticStub {
  int action_dim = 4;
  int num_groups = 2;
  int num_basis = 10;
  double optimum_scale = 0.5;  // theta* entries ~ N(0, optimum_scale^2)
  double init_tau = 4.0;
  double init_w_scale = 0.6;   // W0 entries ~ N(0, (init_w_scale^2 / init_tau))
  void validate() const;
};

struct PlantedStub {
  int action_dim = 6;
  int num_groups = 2;
  int num_basis = 10;
  double slope = 1.0;
  double curvature = 4.0;
  double init_tau = 10.0;
  double init_w_scale = 0.3;
  void validate() const;
};

struct QuadraticProblem {
  std::shared_ptr<const QuadraticEnvironment> env;
  PolicyParamsd init;  // M0 = 0
  double optimum_reward() const { return 0.0; }
};

struct PlantedProblem {
  std::shared_ptr<const PlantedRidgeEnvironment> env;
  PolicyParamsd init;
  Eigen::VectorXd direction() const { return env->direction(); }
};

/// theta* and W0 are drawn from derive_seed(seed, {0x9a}).
QuadraticProblem make_quadratic(const QuadraticStub& stub, int latent_dim, std::uint64_t seed);

/// Unit direction u and W0 are drawn from derive_seed(seed, {0x91}); groups
/// are contiguous blocks of action dimensions.
PlantedProblem make_planted(const PlantedStub& stub, int latent_dim, std::uint64_t seed);

}  // namespace groups
