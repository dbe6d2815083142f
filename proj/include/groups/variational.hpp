#pragma once

// Reward-weighted Bayesian group factor analysis.
//
// Observations are the columns y_n of the realized parameter matrices, one
// per (rollout, basis column) pair, each carrying the reward weight of its
// rollout. The weighted generative model is
//
//   y_n = W z_n + m_{j(n)} + e_n,   z_n ~ N(0, I_K),
//   e_n^(m) ~ N(0, tau_m^{-1} I),   w_i ~ N(0, diag(alpha_m)^{-1}) for i in group m,
//   tau_m ~ Gamma(a_tau, b_tau),    alpha_mk ~ Gamma(a_alpha, b_alpha),
//
// with a flat prior on the column means m_j (point estimate). The mean-field
// posterior is fitted by coordinate ascent on the weighted ELBO.

#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "groups/policy.hpp"

namespace groups {

struct HyperParams {
  int latent_dim = 3;  // K
  int rank = 1;        // structural rank of log E[alpha]
  double a_tau = 1e-3, b_tau = 1e-3;
  double a_alpha = 1e-3, b_alpha = 1e-3;
  std::optional<double> reward_temperature;  // empty: auto (ESS = H/2)
  int inner_max_iters = 100;
  double inner_rel_tol = 1e-6;
  double tau_cap = 1e4;

  void validate(int num_groups) const;
};

/// Weighted D-dimensional observations sharing J column means.
struct WeightedData {
  Eigen::MatrixXd y;         // D x N
  std::vector<int> column;   // basis column j(n) of each observation
  Eigen::VectorXd weight;    // N, nonnegative
  int num_columns = 0;       // J

  Eigen::Index size() const { return y.cols(); }
  double total_weight() const { return weight.sum(); }
};

/// Builds observations from realized parameter matrices. `thetas[s]` is a
/// D x J matrix carrying weight `weights[s]`; every column becomes one
/// observation.
WeightedData make_observations(std::span<const Eigen::MatrixXd> thetas, std::span<const double> weights);

struct QPosterior {
  Eigen::MatrixXd m;                   // D x J point estimate of M
  Eigen::MatrixXd w_mean;              // D x K
  std::vector<Eigen::MatrixXd> w_cov;  // K x K per group, shared by its rows
  Eigen::MatrixXd z_mean;              // K x N
  Eigen::MatrixXd z_cov;               // K x K shared by all observations
  Eigen::MatrixXd alpha_shape, alpha_rate;  // G x K
  Eigen::VectorXd tau_shape, tau_rate;      // G

  Eigen::MatrixXd expected_alpha() const { return alpha_shape.cwiseQuotient(alpha_rate); }
  Eigen::VectorXd expected_tau() const { return tau_shape.cwiseQuotient(tau_rate); }
  int latent_dim() const { return static_cast<int>(w_mean.cols()); }
};

/// Warm start from the current policy: q(M) at M, q(W) mean W with covariance
/// 1e-2 I, q(Z) means zero with identity covariance, Gamma factors at their
/// priors.
QPosterior init_posterior(const PolicyParamsd& params, const WeightedData& data, const HyperParams& hyper);

QPosterior update_qz(const WeightedData& data, const GroupStructure& gs, const HyperParams& hyper, QPosterior q);
QPosterior update_qw(const WeightedData& data, const GroupStructure& gs, const HyperParams& hyper, QPosterior q);
QPosterior update_qm(const WeightedData& data, const GroupStructure& gs, const HyperParams& hyper, QPosterior q);
QPosterior update_qalpha(const WeightedData& data, const GroupStructure& gs, const HyperParams& hyper, QPosterior q);
QPosterior update_qtau(const WeightedData& data, const GroupStructure& gs, const HyperParams& hyper, QPosterior q);

/// Weighted evidence lower bound, exact up to q-independent constants.
double elbo(const WeightedData& data, const GroupStructure& gs, const HyperParams& hyper, const QPosterior& q);

/// Projects a G x K matrix onto {row offsets + column offsets + rank-r}:
/// double-centres it, truncates the SVD of the residual to rank r and adds
/// the row/column means back.
Eigen::MatrixXd project_structured_rank(const Eigen::MatrixXd& log_alpha, int rank);

struct FitResult {
  PolicyParamsd params;
  QPosterior posterior;
  std::vector<double> elbo_history;
  int iterations = 0;
  bool converged = false;
};

/// Coordinate ascent in the order qZ, qW, qM, qAlpha, qTau until the
/// relative ELBO change drops below inner_rel_tol or inner_max_iters is hit.
/// Returns M = E[M], W = E[W], tau = E[tau] of the best iterate.
FitResult fit(const WeightedData& data, const PolicyParamsd& params, const HyperParams& hyper);

}  // namespace groups
