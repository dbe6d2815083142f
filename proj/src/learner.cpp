#include "groups/learner.hpp"

#include <cmath>
#include <iostream>
#include <stdexcept>

#include "groups/weights.hpp"

namespace groups {

double IterationRecord::batch_reward_mean() const {
  if (batch_rewards.empty()) return std::nan("");
  double s = 0.0;
  for (double r : batch_rewards) s += r;
  return s / static_cast<double>(batch_rewards.size());
}

double IterationRecord::batch_reward_max() const {
  if (batch_rewards.empty()) return std::nan("");
  double m = batch_rewards.front();
  for (double r : batch_rewards) m = std::max(m, r);
  return m;
}

int LearningTrace::total_executions() const {
  int n = 0;
  for (const auto& it : iterations) n += it.executions;
  return n;
}

std::uint64_t eval_seed_for(std::uint64_t session_seed, int iteration) {
  return derive_seed(session_seed, {0xe7a1, static_cast<std::uint64_t>(iteration)});
}

std::uint64_t batch_seed_for(std::uint64_t session_seed, int iteration) {
  return derive_seed(session_seed, {0xba7c, static_cast<std::uint64_t>(iteration)});
}

Eigen::VectorXd weigh_rewards(const Eigen::VectorXd& rewards, const std::optional<double>& temperature,
                              IterationRecord& rec) {
  Eigen::VectorXd weights;
  if (temperature) {
    rec.beta = *temperature;
    weights = reward_to_weights(rewards, rec.beta);
  } else {
    const Temperature temp = auto_temperature(rewards);
    rec.beta = temp.beta;
    rec.uniform_weights = temp.uniform;
    rec.temperature_saturated = temp.saturated;
    weights = temp.uniform ? Eigen::VectorXd::Ones(rewards.size()) : reward_to_weights(rewards, temp.beta);
  }
  rec.ess = effective_sample_size(weights);
  return weights;
}

Batch collect_batch(const Environment& env, const PolicyParamsd& params, int H, std::uint64_t batch_seed,
                    ExplorationMode mode, int max_attempts) {
  if (H < 1) throw std::invalid_argument("collect_batch: H must be >= 1");
  Batch batch;
  batch.rollouts.reserve(static_cast<std::size_t>(H));
  const int draws_per_rollout = mode == ExplorationMode::per_rollout ? 1 : params.basis.period_steps;
  for (int h = 0; h < H; ++h) {
    bool done = false;
    for (int attempt = 0; attempt < max_attempts && !done; ++attempt) {
      RolloutRecord rec;
      rec.seed = derive_seed(batch_seed, {static_cast<std::uint64_t>(h), static_cast<std::uint64_t>(attempt)});
      rec.env_seed = derive_seed(rec.seed, {1});
      rec.attempts = attempt + 1;
      Rng rng(rec.seed);
      for (int s = 0; s < draws_per_rollout; ++s) {
        rec.draws.push_back(sample_exploration(params, rng, mode));
        rec.thetas.push_back(realized_parameters(params, rec.draws.back()));
      }
      try {
        rec.reward = env.evaluate(PolicyExecutor(params.basis, rec.thetas), rec.env_seed);
        if (!std::isfinite(rec.reward)) throw EnvironmentFailure("non-finite reward");
        batch.rollouts.push_back(std::move(rec));
        done = true;
      } catch (const EnvironmentFailure& e) {
        ++batch.retries;
        std::clog << "groups: rollout " << h << " attempt " << attempt << " failed (" << e.what()
                  << "), redrawing\n";
      }
    }
    if (!done) throw std::runtime_error("collect_batch: rollout " + std::to_string(h) + " failed " +
                                        std::to_string(max_attempts) + " times");
  }
  return batch;
}

WeightedData batch_observations(const Batch& batch) {
  std::vector<Eigen::MatrixXd> thetas;
  std::vector<double> weights;
  for (const auto& r : batch.rollouts) {
    const double share = r.weight / static_cast<double>(r.thetas.size());
    for (const auto& th : r.thetas) {
      thetas.push_back(th);
      weights.push_back(share);
    }
  }
  return make_observations(thetas, weights);
}

LearningTrace learn(const Environment& env, const PolicyParamsd& init, const LearnConfig& config,
                    std::uint64_t seed) {
  init.validate();
  config.hyper.validate(init.groups.num_groups());
  if (config.iterations < 0) throw std::invalid_argument("learn: iterations must be >= 0");
  if (config.H < 2) throw std::invalid_argument("learn: H must be >= 2");

  LearningTrace trace;
  trace.method = "groups";
  trace.seed = seed;
  trace.initial_params = init;
  trace.initial_eval_seed = eval_seed_for(seed, 0);
  trace.initial_reward = env.evaluate(PolicyExecutor::mean_policy(init), trace.initial_eval_seed);

  PolicyParamsd params = init;
  for (int it = 1; it <= config.iterations; ++it) {
    IterationRecord rec;
    rec.iteration = it;
    try {
      Batch batch = collect_batch(env, params, config.H, batch_seed_for(seed, it), config.mode);
      Eigen::VectorXd rewards(config.H);
      for (int h = 0; h < config.H; ++h) rewards(h) = batch.rollouts[static_cast<std::size_t>(h)].reward;

      const Eigen::VectorXd weights = weigh_rewards(rewards, config.hyper.reward_temperature, rec);
      for (int h = 0; h < config.H; ++h) batch.rollouts[static_cast<std::size_t>(h)].weight = weights(h);

      FitResult fitted = fit(batch_observations(batch), params, config.hyper);
      params = fitted.params;

      rec.eval_seed = eval_seed_for(seed, it);
      rec.mean_policy_reward = env.evaluate(PolicyExecutor::mean_policy(params), rec.eval_seed);
      rec.batch_rewards.assign(rewards.data(), rewards.data() + rewards.size());
      rec.weights.assign(weights.data(), weights.data() + weights.size());
      rec.elbo = std::move(fitted.elbo_history);
      rec.expected_tau = fitted.posterior.expected_tau();
      rec.expected_alpha = fitted.posterior.expected_alpha();
      rec.fit_converged = fitted.converged;
      for (const auto& r : batch.rollouts) rec.rollout_seeds.push_back(r.seed);
      rec.retries = batch.retries;
      rec.executions = batch.executions() + 1;
      rec.params = params;
    } catch (const std::exception& e) {
      throw std::runtime_error("learn: iteration " + std::to_string(it) + " on " + env.name() + ": " + e.what());
    }
    trace.iterations.push_back(std::move(rec));
  }
  return trace;
}

}  // namespace groups
