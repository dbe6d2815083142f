#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "groups/environment.hpp"
#include "groups/policy.hpp"
#include "groups/variational.hpp"

namespace groups {

struct RolloutRecord {
  std::vector<ExplorationDrawd> draws;  // 1 per rollout, or T per-timestep
  std::vector<Eigen::MatrixXd> thetas;  // W Z + M + E for each draw
  double reward = 0.0;
  double weight = 1.0;
  std::uint64_t seed = 0;      // exploration stream
  std::uint64_t env_seed = 0;  // environment stream
  int attempts = 1;
};

struct Batch {
  std::vector<RolloutRecord> rollouts;
  int retries = 0;
  int executions() const { return static_cast<int>(rollouts.size()) + retries; }
};

/// Draws H rollouts around `params`. Rollout h uses the exploration seed
/// derive_seed(batch_seed, {h, attempt}); a failed or non-finite evaluation is
/// discarded and redrawn with the next attempt index.
Batch collect_batch(const Environment& env, const PolicyParamsd& params, int H, std::uint64_t batch_seed,
                    ExplorationMode mode = ExplorationMode::per_rollout, int max_attempts = 10);

/// Observations for the fit: every realized parameter column, weighted by its
/// rollout weight (divided by T in per-timestep mode).
WeightedData batch_observations(const Batch& batch);

struct IterationRecord {
  int iteration = 0;
  double mean_policy_reward = 0.0;
  std::vector<double> batch_rewards;
  std::vector<double> weights;
  std::vector<double> elbo;
  Eigen::VectorXd expected_tau;
  Eigen::MatrixXd expected_alpha;
  PolicyParamsd params;  // policy after this iteration's update
  std::vector<std::uint64_t> rollout_seeds;
  std::uint64_t eval_seed = 0;
  double beta = 0.0;
  double ess = 0.0;
  bool uniform_weights = false;
  bool temperature_saturated = false;
  bool fit_converged = true;
  int retries = 0;
  int executions = 0;  // exploratory rollouts + retries + one mean-policy evaluation

  double batch_reward_mean() const;
  double batch_reward_max() const;
};

/// Reward weights of a batch at a fixed temperature, or at the automatic
/// temperature when none is given (uniform when all rewards are equal).
/// Records beta, ESS and the temperature flags in `rec`.
Eigen::VectorXd weigh_rewards(const Eigen::VectorXd& rewards, const std::optional<double>& temperature,
                              IterationRecord& rec);

struct LearningTrace {
  std::string method;
  std::uint64_t seed = 0;
  PolicyParamsd initial_params;
  double initial_reward = 0.0;  // reference evaluation, outside the rollout budget
  std::uint64_t initial_eval_seed = 0;
  std::vector<IterationRecord> iterations;

  int total_executions() const;
  double final_reward() const { return iterations.empty() ? initial_reward : iterations.back().mean_policy_reward; }
  const PolicyParamsd& final_params() const {
    return iterations.empty() ? initial_params : iterations.back().params;
  }
};

struct LearnConfig {
  int iterations = 10;
  int H = 20;
  HyperParams hyper;
  ExplorationMode mode = ExplorationMode::per_rollout;
};

/// Seed of the mean-policy evaluation after `iteration` (0 = initial policy).
std::uint64_t eval_seed_for(std::uint64_t session_seed, int iteration);
/// Seed of the rollout batch of `iteration` (1-based).
std::uint64_t batch_seed_for(std::uint64_t session_seed, int iteration);

/// Outer loop: collect_batch -> reward weights -> fit -> evaluate mean policy.
LearningTrace learn(const Environment& env, const PolicyParamsd& init, const LearnConfig& config,
                    std::uint64_t seed);

}  // namespace groups
