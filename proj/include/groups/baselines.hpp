#pragma once

// Comparison methods sharing the learner's trace schema, seeds and
// execution accounting.

#include <cstdint>

#include "groups/learner.hpp"

namespace groups {

/// Reward-weighted Gaussian search with an independent precision per action
/// dimension and no latent factors. Every iteration draws H rollouts from
/// N(M, diag(1/tau)), replaces M by the reward-weighted mean of the realized
/// parameters and each tau_i by the Gamma posterior mean of its weighted
/// residuals, capped at hyper.tau_cap. Only the tau hyperparameters, the
/// reward temperature and the exploration mode of `config` are used.
LearningTrace diagonal_gaussian_ps(const Environment& env, const PolicyParamsd& init, const LearnConfig& config,
                                   std::uint64_t seed);

struct RandomSearchConfig {
  int iterations = 10;
  int H = 20;
  double sigma = 0.2;  // proposal std-dev per parameter entry
};

/// Proposes M + sigma G with iid standard normal G for every rollout and
/// moves to the best proposal whenever it beats the incumbent's reward.
LearningTrace random_search(const Environment& env, const PolicyParamsd& init, const RandomSearchConfig& config,
                            std::uint64_t seed);

}  // namespace groups
