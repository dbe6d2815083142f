#include "groups/baselines.hpp"

#include <cmath>
#include <iostream>
#include <stdexcept>

namespace groups {
namespace {

PolicyParamsd diagonal_params(const PolicyParamsd& init) {
  PolicyParamsd p;
  p.groups = GroupStructure::one_per_dimension(init.action_dim());
  p.basis = init.basis;
  p.M = init.M;
  p.W = Eigen::MatrixXd::Zero(init.action_dim(), 0);
  p.tau = init.row_precision();
  return p;
}

void start_trace(LearningTrace& trace, const Environment& env, const PolicyParamsd& init, std::uint64_t seed,
                 const char* method) {
  init.validate();
  trace.method = method;
  trace.seed = seed;
  trace.initial_params = init;
  trace.initial_eval_seed = eval_seed_for(seed, 0);
  trace.initial_reward = env.evaluate(PolicyExecutor::mean_policy(init), trace.initial_eval_seed);
}

}  // namespace

LearningTrace diagonal_gaussian_ps(const Environment& env, const PolicyParamsd& init, const LearnConfig& config,
                                   std::uint64_t seed) {
  if (config.iterations < 0) throw std::invalid_argument("diagonal_gaussian_ps: iterations must be >= 0");
  if (config.H < 2) throw std::invalid_argument("diagonal_gaussian_ps: H must be >= 2");
  const auto& hyper = config.hyper;
  if (!(hyper.a_tau > 0 && hyper.b_tau > 0 && hyper.tau_cap > 0))
    throw std::invalid_argument("diagonal_gaussian_ps: tau hyperparameters must be positive");

  LearningTrace trace;
  start_trace(trace, env, init, seed, "diagonal");
  PolicyParamsd params = diagonal_params(init);
  const int D = params.action_dim(), J = params.num_basis();

  for (int it = 1; it <= config.iterations; ++it) {
    IterationRecord rec;
    rec.iteration = it;
    try {
      const Batch batch = collect_batch(env, params, config.H, batch_seed_for(seed, it), config.mode);
      Eigen::VectorXd rewards(config.H);
      for (int h = 0; h < config.H; ++h) rewards(h) = batch.rollouts[static_cast<std::size_t>(h)].reward;
      const Eigen::VectorXd weights = weigh_rewards(rewards, hyper.reward_temperature, rec);

      Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(D, J);
      double total = 0.0;
      for (int h = 0; h < config.H; ++h) {
        const auto& r = batch.rollouts[static_cast<std::size_t>(h)];
        const double share = weights(h) / static_cast<double>(r.thetas.size());
        for (const auto& th : r.thetas) mean += share * th;
        total += share * static_cast<double>(r.thetas.size());
      }
      mean /= total;

      Eigen::VectorXd sq = Eigen::VectorXd::Zero(D);
      for (int h = 0; h < config.H; ++h) {
        const auto& r = batch.rollouts[static_cast<std::size_t>(h)];
        const double share = weights(h) / static_cast<double>(r.thetas.size());
        for (const auto& th : r.thetas) sq += share * (th - mean).rowwise().squaredNorm();
      }
      const double shape = hyper.a_tau + 0.5 * J * total;
      for (int i = 0; i < D; ++i) params.tau(i) = shape / std::max(hyper.b_tau + 0.5 * sq(i), shape / hyper.tau_cap);
      params.M = mean;

      rec.eval_seed = eval_seed_for(seed, it);
      rec.mean_policy_reward = env.evaluate(PolicyExecutor::mean_policy(params), rec.eval_seed);
      rec.batch_rewards.assign(rewards.data(), rewards.data() + rewards.size());
      rec.weights.assign(weights.data(), weights.data() + weights.size());
      rec.expected_tau = params.tau;
      for (const auto& r : batch.rollouts) rec.rollout_seeds.push_back(r.seed);
      rec.retries = batch.retries;
      rec.executions = batch.executions() + 1;
      rec.params = params;
    } catch (const std::exception& e) {
      throw std::runtime_error("diagonal_gaussian_ps: iteration " + std::to_string(it) + " on " + env.name() +
                               ": " + e.what());
    }
    trace.iterations.push_back(std::move(rec));
  }
  return trace;
}

LearningTrace random_search(const Environment& env, const PolicyParamsd& init, const RandomSearchConfig& config,
                            std::uint64_t seed) {
  if (config.iterations < 0) throw std::invalid_argument("random_search: iterations must be >= 0");
  if (config.H < 1) throw std::invalid_argument("random_search: H must be >= 1");
  if (!(config.sigma >= 0) || !std::isfinite(config.sigma))
    throw std::invalid_argument("random_search: sigma must be finite and >= 0");

  LearningTrace trace;
  start_trace(trace, env, init, seed, "random_search");
  PolicyParamsd params = init;
  double incumbent = trace.initial_reward;
  constexpr int max_attempts = 10;
  std::normal_distribution<double> normal(0.0, 1.0);

  for (int it = 1; it <= config.iterations; ++it) {
    IterationRecord rec;
    rec.iteration = it;
    const std::uint64_t batch_seed = batch_seed_for(seed, it);
    Eigen::MatrixXd best_theta;
    double best_reward = -INFINITY;
    for (int h = 0; h < config.H; ++h) {
      bool done = false;
      for (int attempt = 0; attempt < max_attempts && !done; ++attempt) {
        const auto rseed = derive_seed(batch_seed, {static_cast<std::uint64_t>(h), static_cast<std::uint64_t>(attempt)});
        Rng rng(rseed);
        Eigen::MatrixXd theta =
            params.M + config.sigma * standard_normal_matrix<double>(rng, params.action_dim(), params.num_basis(), normal);
        try {
          const double r = env.evaluate(PolicyExecutor(params.basis, {theta}), derive_seed(rseed, {1}));
          if (!std::isfinite(r)) throw EnvironmentFailure("non-finite reward");
          rec.batch_rewards.push_back(r);
          rec.rollout_seeds.push_back(rseed);
          if (r > best_reward) {
            best_reward = r;
            best_theta = std::move(theta);
          }
          done = true;
        } catch (const EnvironmentFailure& e) {
          ++rec.retries;
          std::clog << "groups: rollout " << h << " attempt " << attempt << " failed (" << e.what()
                    << "), redrawing\n";
        }
      }
      if (!done)
        throw std::runtime_error("random_search: iteration " + std::to_string(it) + " rollout " + std::to_string(h) +
                                 " failed " + std::to_string(max_attempts) + " times");
    }
    if (best_reward > incumbent) {
      incumbent = best_reward;
      params.M = best_theta;
    }
    rec.eval_seed = eval_seed_for(seed, it);
    rec.mean_policy_reward = env.evaluate(PolicyExecutor::mean_policy(params), rec.eval_seed);
    rec.ess = static_cast<double>(config.H);
    rec.weights.assign(static_cast<std::size_t>(config.H), 1.0);
    rec.expected_tau = params.tau;
    rec.executions = config.H + rec.retries + 1;
    rec.params = params;
    trace.iterations.push_back(std::move(rec));
  }
  return trace;
}

}  // namespace groups
