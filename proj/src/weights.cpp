#include "groups/weights.hpp"

#include <cmath>
#include <stdexcept>

namespace groups {
namespace {

Eigen::VectorXd offsets_from_max(const Eigen::VectorXd& rewards) {
  if (rewards.size() < 1) throw std::invalid_argument("rewards: at least one reward required");
  if (!rewards.allFinite()) throw std::invalid_argument("rewards: non-finite reward");
  return rewards.array() - rewards.maxCoeff();
}

Eigen::VectorXd weights_from_offsets(const Eigen::VectorXd& offsets, double beta) {
  const Eigen::VectorXd e = (beta * offsets.array()).exp();
  return static_cast<double>(offsets.size()) * e / e.sum();
}

}  // namespace

Eigen::VectorXd reward_to_weights(const Eigen::VectorXd& rewards, double beta) {
  if (!(beta > 0.0) || !std::isfinite(beta)) throw std::invalid_argument("reward_to_weights: beta must be positive");
  return weights_from_offsets(offsets_from_max(rewards), beta);
}

double effective_sample_size(const Eigen::VectorXd& weights) {
  const double s = weights.sum();
  return s * s / weights.squaredNorm();
}

Temperature auto_temperature(const Eigen::VectorXd& rewards) {
  const Eigen::VectorXd offsets = offsets_from_max(rewards);
  const auto H = static_cast<double>(rewards.size());
  if (rewards.size() < 2) throw std::invalid_argument("auto_temperature: at least two rewards required");

  const double mean = offsets.mean();
  const double sd = std::sqrt((offsets.array() - mean).square().mean());
  Temperature out;
  if (!(sd > 0.0)) {
    out.beta = 1.0;
    out.uniform = true;
    out.ess = H;
    return out;
  }

  const double target = H / 2.0;
  auto ess_at = [&](double log_x) { return effective_sample_size(weights_from_offsets(offsets, std::exp(log_x) / sd)); };

  double lo = std::log(1e-6), hi = std::log(1e6);
  const double ess_hi = ess_at(hi);
  if (ess_hi >= target) {
    out.beta = std::exp(hi) / sd;
    out.ess = ess_hi;
    out.saturated = true;
    return out;
  }
  for (int it = 0; it < 200 && hi - lo > 1e-13; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (ess_at(mid) > target)
      lo = mid;
    else
      hi = mid;
  }
  const double x = 0.5 * (lo + hi);
  out.beta = std::exp(x) / sd;
  out.ess = ess_at(x);
  return out;
}

}  // namespace groups
