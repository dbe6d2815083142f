#include "groups/variational.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numbers>
#include <stdexcept>

#include <Eigen/Cholesky>
#include <Eigen/SVD>
#include <boost/math/special_functions/digamma.hpp>

namespace groups {
namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

MatrixXd spd_inverse(const MatrixXd& precision) {
  const Index k = precision.rows();
  Eigen::LLT<MatrixXd> llt(precision);
  if (llt.info() != Eigen::Success) {
    std::clog << "groups: singular precision, regularizing by 1e-10 I\n";
    llt.compute(precision + 1e-10 * MatrixXd::Identity(k, k));
    if (llt.info() != Eigen::Success) throw std::runtime_error("precision matrix is not positive definite");
  }
  MatrixXd inv = llt.solve(MatrixXd::Identity(k, k));
  return 0.5 * (inv + inv.transpose());
}

double log_det_spd(const MatrixXd& a) {
  if (a.rows() == 0) return 0.0;
  Eigen::LLT<MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) throw std::runtime_error("log_det: matrix is not positive definite");
  return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

MatrixXd gather_rows(const MatrixXd& a, const std::vector<int>& rows) {
  MatrixXd out(static_cast<Index>(rows.size()), a.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Index>(r)) = a.row(rows[r]);
  return out;
}

// y_n - m_{j(n)} for every observation.
MatrixXd residuals(const WeightedData& data, const MatrixXd& m) {
  MatrixXd r = data.y;
  for (Index n = 0; n < data.size(); ++n) r.col(n) -= m.col(data.column[static_cast<std::size_t>(n)]);
  return r;
}

VectorXd row_values(const GroupStructure& gs, const VectorXd& per_group) {
  VectorXd out(gs.action_dim());
  for (int m = 0; m < gs.num_groups(); ++m)
    for (int i : gs.groups[m]) out(i) = per_group(m);
  return out;
}

// sum_n d_n (mu_n mu_n^T + Sigma_z)
MatrixXd weighted_z_second_moment(const WeightedData& data, const QPosterior& q) {
  return q.z_mean * data.weight.asDiagonal() * q.z_mean.transpose() + data.total_weight() * q.z_cov;
}

// E[W_m^T W_m] = W_m^T W_m + d_m Sigma_W^m
MatrixXd expected_wtw(const GroupStructure& gs, const QPosterior& q, int m) {
  const MatrixXd wm = gather_rows(q.w_mean, gs.groups[m]);
  return wm.transpose() * wm + static_cast<double>(gs.group_size(m)) * q.w_cov[m];
}

// sum_n d_n E || y_n^(m) - W^(m) z_n - m^(m)_{j(n)} ||^2 for every group.
VectorXd expected_squared_residuals(const WeightedData& data, const GroupStructure& gs, const QPosterior& q) {
  const MatrixXd r = residuals(data, q.m);
  const int K = q.latent_dim();
  const MatrixXd sz = K > 0 ? weighted_z_second_moment(data, q) : MatrixXd();
  VectorXd out(gs.num_groups());
  for (int m = 0; m < gs.num_groups(); ++m) {
    const MatrixXd rm = gather_rows(r, gs.groups[m]);
    double value = (rm.array().square().matrix() * data.weight).sum();
    if (K > 0) {
      const MatrixXd wm = gather_rows(q.w_mean, gs.groups[m]);
      const MatrixXd pred = wm * q.z_mean;
      value -= 2.0 * (rm.cwiseProduct(pred) * data.weight).sum();
      value += (expected_wtw(gs, q, m) * sz).trace();
    }
    out(m) = std::max(0.0, value);
  }
  return out;
}

double gamma_entropy(double shape, double rate) {
  return shape - std::log(rate) + std::lgamma(shape) + (1.0 - shape) * boost::math::digamma(shape);
}

// E_q[log Gamma(x | a0, b0)] under q = Gamma(shape, rate).
double gamma_cross(double a0, double b0, double shape, double rate) {
  const double e_log = boost::math::digamma(shape) - std::log(rate);
  return a0 * std::log(b0) - std::lgamma(a0) + (a0 - 1.0) * e_log - b0 * shape / rate;
}

}  // namespace

void HyperParams::validate(int num_groups) const {
  if (latent_dim < 0) throw std::invalid_argument("HyperParams: latent_dim must be >= 0");
  if (!(a_tau > 0 && b_tau > 0 && a_alpha > 0 && b_alpha > 0))
    throw std::invalid_argument("HyperParams: Gamma prior parameters must be positive");
  if (reward_temperature && !(*reward_temperature > 0))
    throw std::invalid_argument("HyperParams: reward_temperature must be positive");
  if (inner_max_iters < 1 || !(inner_rel_tol > 0) || !(tau_cap > 0))
    throw std::invalid_argument("HyperParams: iteration limits and tau_cap must be positive");
  if (rank < 0 || rank > std::min(num_groups, latent_dim) || (latent_dim > 0 && rank < 1))
    throw std::invalid_argument("HyperParams: rank must satisfy 1 <= r <= min(groups, K)");
}

WeightedData make_observations(std::span<const MatrixXd> thetas, std::span<const double> weights) {
  if (thetas.empty() || thetas.size() != weights.size())
    throw std::invalid_argument("make_observations: need one weight per parameter matrix");
  const Index d = thetas.front().rows();
  const Index j = thetas.front().cols();
  WeightedData data;
  data.num_columns = static_cast<int>(j);
  data.y.resize(d, static_cast<Index>(thetas.size()) * j);
  data.weight.resize(data.y.cols());
  data.column.resize(static_cast<std::size_t>(data.y.cols()));
  Index n = 0;
  for (std::size_t s = 0; s < thetas.size(); ++s) {
    if (thetas[s].rows() != d || thetas[s].cols() != j)
      throw std::invalid_argument("make_observations: inconsistent parameter shapes");
    if (!(weights[s] >= 0.0) || !std::isfinite(weights[s]))
      throw std::invalid_argument("make_observations: weights must be finite and nonnegative");
    for (Index c = 0; c < j; ++c, ++n) {
      data.y.col(n) = thetas[s].col(c);
      data.weight(n) = weights[s];
      data.column[static_cast<std::size_t>(n)] = static_cast<int>(c);
    }
  }
  return data;
}

QPosterior init_posterior(const PolicyParamsd& params, const WeightedData& data, const HyperParams& hyper) {
  const int G = params.groups.num_groups();
  const int K = params.latent_dim();
  if (K != hyper.latent_dim) throw std::invalid_argument("init_posterior: W columns differ from latent_dim");
  if (data.y.rows() != params.action_dim() || data.num_columns != params.num_basis())
    throw std::invalid_argument("init_posterior: data shape differs from policy");
  QPosterior q;
  q.m = params.M;
  q.w_mean = params.W;
  q.w_cov.assign(static_cast<std::size_t>(G), 1e-2 * MatrixXd::Identity(K, K));
  q.z_mean = MatrixXd::Zero(K, data.size());
  q.z_cov = MatrixXd::Identity(K, K);
  q.alpha_shape = MatrixXd::Constant(G, K, hyper.a_alpha);
  q.alpha_rate = MatrixXd::Constant(G, K, hyper.b_alpha);
  q.tau_shape = VectorXd::Constant(G, hyper.a_tau);
  q.tau_rate = VectorXd::Constant(G, hyper.b_tau);
  return q;
}

QPosterior update_qz(const WeightedData& data, const GroupStructure& gs, const HyperParams&, QPosterior q) {
  const int K = q.latent_dim();
  if (K == 0) {
    q.z_mean.resize(0, data.size());
    q.z_cov.resize(0, 0);
    return q;
  }
  const VectorXd tau = q.expected_tau();
  MatrixXd precision = MatrixXd::Identity(K, K);
  for (int m = 0; m < gs.num_groups(); ++m) precision += tau(m) * expected_wtw(gs, q, m);
  q.z_cov = spd_inverse(precision);
  const VectorXd tau_rows = row_values(gs, tau);
  q.z_mean = q.z_cov * q.w_mean.transpose() * tau_rows.asDiagonal() * residuals(data, q.m);
  return q;
}

QPosterior update_qw(const WeightedData& data, const GroupStructure& gs, const HyperParams&, QPosterior q) {
  const int K = q.latent_dim();
  if (K == 0) return q;
  const VectorXd tau = q.expected_tau();
  const MatrixXd alpha = q.expected_alpha();
  const MatrixXd sz = weighted_z_second_moment(data, q);
  const MatrixXd cross = residuals(data, q.m) * data.weight.asDiagonal() * q.z_mean.transpose();  // D x K
  for (int m = 0; m < gs.num_groups(); ++m) {
    MatrixXd precision = tau(m) * sz;
    precision.diagonal() += alpha.row(m).transpose();
    q.w_cov[m] = spd_inverse(precision);
    for (int i : gs.groups[m]) q.w_mean.row(i) = tau(m) * cross.row(i) * q.w_cov[m];
  }
  return q;
}

QPosterior update_qm(const WeightedData& data, const GroupStructure&, const HyperParams&, QPosterior q) {
  const MatrixXd target = q.latent_dim() > 0 ? MatrixXd(data.y - q.w_mean * q.z_mean) : data.y;
  MatrixXd num = MatrixXd::Zero(q.m.rows(), q.m.cols());
  VectorXd den = VectorXd::Zero(q.m.cols());
  for (Index n = 0; n < data.size(); ++n) {
    const int j = data.column[static_cast<std::size_t>(n)];
    num.col(j) += data.weight(n) * target.col(n);
    den(j) += data.weight(n);
  }
  for (Index j = 0; j < q.m.cols(); ++j)
    if (den(j) > 0.0) q.m.col(j) = num.col(j) / den(j);
  return q;
}

Eigen::MatrixXd project_structured_rank(const MatrixXd& log_alpha, int rank) {
  const Index g = log_alpha.rows(), k = log_alpha.cols();
  if (g == 0 || k == 0) return log_alpha;
  const VectorXd row_mean = log_alpha.rowwise().mean();
  const Eigen::RowVectorXd col_mean = log_alpha.colwise().mean();
  const double grand = log_alpha.mean();
  MatrixXd centred = log_alpha;
  centred.colwise() -= row_mean;
  centred.rowwise() -= col_mean;
  centred.array() += grand;
  Eigen::JacobiSVD<MatrixXd> svd(centred, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Index r = std::min<Index>(rank, svd.singularValues().size());
  MatrixXd low = svd.matrixU().leftCols(r) * svd.singularValues().head(r).asDiagonal() *
                 svd.matrixV().leftCols(r).transpose();
  low.colwise() += row_mean;
  low.rowwise() += col_mean;
  low.array() -= grand;
  return low;
}

QPosterior update_qalpha(const WeightedData& data, const GroupStructure& gs, const HyperParams& hyper, QPosterior q) {
  const int K = q.latent_dim();
  if (K == 0) return q;
  const int G = gs.num_groups();
  QPosterior raw = q;
  for (int m = 0; m < G; ++m) {
    const MatrixXd wm = gather_rows(q.w_mean, gs.groups[m]);
    const double shape = hyper.a_alpha + 0.5 * gs.group_size(m);
    for (int k = 0; k < K; ++k) {
      const double second = wm.col(k).squaredNorm() + gs.group_size(m) * q.w_cov[m](k, k);
      raw.alpha_shape(m, k) = shape;
      raw.alpha_rate(m, k) = hyper.b_alpha + 0.5 * second;
    }
  }
  if (hyper.rank >= std::min(G, K)) return raw;

  // Structured projection of log E[alpha]. The raw update is the exact
  // coordinate maximizer; the projected candidate is accepted only where it
  // does not lower the bound, backtracking toward the raw update otherwise.
  const MatrixXd log_raw = raw.expected_alpha().array().log().matrix();
  const MatrixXd step = project_structured_rank(log_raw, hyper.rank) - log_raw;
  if (step.cwiseAbs().maxCoeff() < 1e-14) return raw;
  const double before = elbo(data, gs, hyper, q);
  double lambda = 1.0;
  for (int attempt = 0; attempt < 30; ++attempt, lambda *= 0.5) {
    QPosterior candidate = raw;
    const MatrixXd log_alpha = log_raw + lambda * step;
    candidate.alpha_rate = raw.alpha_shape.array() / log_alpha.array().exp();
    if (elbo(data, gs, hyper, candidate) >= before) return candidate;
  }
  return raw;
}

QPosterior update_qtau(const WeightedData& data, const GroupStructure& gs, const HyperParams& hyper, QPosterior q) {
  const VectorXd sq = expected_squared_residuals(data, gs, q);
  const double total = data.total_weight();
  for (int m = 0; m < gs.num_groups(); ++m) {
    const double shape = hyper.a_tau + 0.5 * gs.group_size(m) * total;
    q.tau_shape(m) = shape;
    q.tau_rate(m) = std::max(hyper.b_tau + 0.5 * sq(m), shape / hyper.tau_cap);
  }
  return q;
}

double elbo(const WeightedData& data, const GroupStructure& gs, const HyperParams& hyper, const QPosterior& q) {
  constexpr double log_2pi = 1.8378770664093454835606594728112;
  const int K = q.latent_dim();
  const int G = gs.num_groups();
  const double total = data.total_weight();
  const VectorXd sq = expected_squared_residuals(data, gs, q);

  double value = 0.0;
  for (int m = 0; m < G; ++m) {
    const double e_tau = q.tau_shape(m) / q.tau_rate(m);
    const double e_log_tau = boost::math::digamma(q.tau_shape(m)) - std::log(q.tau_rate(m));
    const double dm = gs.group_size(m);
    value += 0.5 * dm * total * (e_log_tau - log_2pi) - 0.5 * e_tau * sq(m);
    value += gamma_cross(hyper.a_tau, hyper.b_tau, q.tau_shape(m), q.tau_rate(m)) +
             gamma_entropy(q.tau_shape(m), q.tau_rate(m));
  }
  if (K == 0) return value;

  // Latent factors: prior cross-entropy plus entropy, weighted per observation.
  const double logdet_z = log_det_spd(q.z_cov);
  const VectorXd z_sq = q.z_mean.colwise().squaredNorm().transpose();
  value += -0.5 * (z_sq.dot(data.weight) + total * q.z_cov.trace()) + 0.5 * total * (logdet_z + K);

  for (int m = 0; m < G; ++m) {
    const double dm = gs.group_size(m);
    const MatrixXd wm = gather_rows(q.w_mean, gs.groups[m]);
    const double logdet_w = log_det_spd(q.w_cov[m]);
    for (int k = 0; k < K; ++k) {
      const double shape = q.alpha_shape(m, k), rate = q.alpha_rate(m, k);
      const double e_alpha = shape / rate;
      const double e_log_alpha = boost::math::digamma(shape) - std::log(rate);
      const double second = wm.col(k).squaredNorm() + dm * q.w_cov[m](k, k);
      value += 0.5 * dm * e_log_alpha - 0.5 * e_alpha * second;
      value += gamma_cross(hyper.a_alpha, hyper.b_alpha, shape, rate) + gamma_entropy(shape, rate);
    }
    value += 0.5 * dm * (logdet_w + K);
  }
  return value;
}

FitResult fit(const WeightedData& data, const PolicyParamsd& params, const HyperParams& hyper) {
  params.validate();
  hyper.validate(params.groups.num_groups());
  if (data.size() == 0) throw std::invalid_argument("fit: empty batch");
  if (!(data.total_weight() > 0.0)) throw std::invalid_argument("fit: weights sum to zero");
  const GroupStructure& gs = params.groups;

  QPosterior q = init_posterior(params, data, hyper);
  FitResult result;
  double previous = elbo(data, gs, hyper, q);
  QPosterior best = q;
  double best_value = previous;
  for (int it = 1; it <= hyper.inner_max_iters; ++it) {
    q = update_qz(data, gs, hyper, std::move(q));
    q = update_qw(data, gs, hyper, std::move(q));
    q = update_qm(data, gs, hyper, std::move(q));
    q = update_qalpha(data, gs, hyper, std::move(q));
    q = update_qtau(data, gs, hyper, std::move(q));
    const double value = elbo(data, gs, hyper, q);
    result.elbo_history.push_back(value);
    result.iterations = it;
    if (value >= best_value) {
      best = q;
      best_value = value;
    }
    if (std::abs(value - previous) <= hyper.inner_rel_tol * std::abs(previous)) {
      result.converged = true;
      break;
    }
    previous = value;
  }

  result.params = params;
  result.params.M = best.m;
  result.params.W = best.w_mean;
  result.params.tau = best.expected_tau();
  result.posterior = std::move(best);
  return result;
}

}  // namespace groups
