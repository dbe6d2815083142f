#pragma once

// Shared generators and oracles for the unit and acceptance suites. Nothing
// in here calls into the variational updates it is used to check.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "groups/policy.hpp"
#include "groups/variational.hpp"

namespace groups::testing {

struct RandomInstance {
  GroupStructure groups;
  HyperParams hyper;
  WeightedData data;
  QPosterior q;
};

inline Eigen::MatrixXd random_spd(Rng& rng, int k, double scale) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::MatrixXd a(k, k);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) a(i, j) = n(rng);
  return scale * (a * a.transpose() / std::max(k, 1) + 0.1 * Eigen::MatrixXd::Identity(k, k));
}

/// A random valid problem with a random (not fitted) posterior.
inline RandomInstance random_instance(Rng& rng) {
  std::uniform_int_distribution<int> dim(2, 6), lat(0, 3), cols(1, 5), samples(2, 8);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.1, 2.0);
  RandomInstance inst;
  const int D = dim(rng);
  const int G = std::uniform_int_distribution<int>(1, std::min(3, D))(rng);
  const int K = lat(rng);
  const int J = cols(rng);
  const int S = samples(rng);
  inst.groups = GroupStructure::contiguous(D, G);
  inst.hyper.latent_dim = K;
  inst.hyper.rank = K == 0 ? 0 : std::uniform_int_distribution<int>(1, std::min(G, K))(rng);
  inst.hyper.a_tau = inst.hyper.b_tau = inst.hyper.a_alpha = inst.hyper.b_alpha = 1e-3;
  if (rng() % 2) {
    inst.hyper.a_alpha = u(rng);
    inst.hyper.b_alpha = u(rng);
  }

  const Eigen::MatrixXd w_true = standard_normal_matrix<double>(rng, D, K, n);
  const Eigen::MatrixXd m_true = standard_normal_matrix<double>(rng, D, J, n);
  std::vector<Eigen::MatrixXd> thetas;
  std::vector<double> weights;
  for (int s = 0; s < S; ++s) {
    Eigen::MatrixXd theta = m_true + 0.3 * standard_normal_matrix<double>(rng, D, J, n);
    if (K > 0) theta += w_true * standard_normal_matrix<double>(rng, K, J, n);
    thetas.push_back(theta);
    weights.push_back(s == 0 ? u(rng) : (rng() % 5 == 0 ? 0.0 : u(rng)));
  }
  inst.data = make_observations(thetas, weights);

  QPosterior& q = inst.q;
  q.m = standard_normal_matrix<double>(rng, D, J, n);
  q.w_mean = standard_normal_matrix<double>(rng, D, K, n);
  for (int m = 0; m < G; ++m) q.w_cov.push_back(random_spd(rng, K, 0.1));
  q.z_mean = standard_normal_matrix<double>(rng, K, inst.data.size(), n);
  q.z_cov = random_spd(rng, K, 0.5);
  q.alpha_shape = Eigen::MatrixXd(G, K);
  q.alpha_rate = Eigen::MatrixXd(G, K);
  for (int m = 0; m < G; ++m)
    for (int k = 0; k < K; ++k) {
      q.alpha_shape(m, k) = u(rng);
      q.alpha_rate(m, k) = u(rng);
    }
  q.tau_shape = Eigen::VectorXd(G);
  q.tau_rate = Eigen::VectorXd(G);
  for (int m = 0; m < G; ++m) {
    q.tau_shape(m) = u(rng) * 5;
    q.tau_rate(m) = u(rng);
  }
  return inst;
}

inline double min_eigenvalue(const Eigen::MatrixXd& a) {
  if (a.rows() == 0) return 1.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (a + a.transpose()));
  return es.eigenvalues().minCoeff();
}

inline bool posterior_valid(const QPosterior& q, double tau_cap) {
  if (min_eigenvalue(q.z_cov) <= 1e-12) return false;
  for (const auto& c : q.w_cov)
    if (min_eigenvalue(c) <= 1e-12) return false;
  if ((q.alpha_shape.array() <= 0).any() || (q.alpha_rate.array() <= 0).any()) return false;
  if ((q.tau_shape.array() <= 0).any() || (q.tau_rate.array() <= 0).any()) return false;
  if ((q.expected_tau().array() > tau_cap * (1 + 1e-12)).any()) return false;
  return true;
}

/// Fixed point of the (qZ, qW, qM) sweep for a two-dimensional, one-factor
/// model with one action dimension per group and frozen tau, alpha.
///
/// The sweep is rewritten with scalars, and the fixed point x = G(x) is
/// found by Newton's method on G(x) - x with a central-difference Jacobian.
/// State: x = (w_0, w_1, s_0, s_1, m_00, m_01, m_10, m_11), where w are the
/// loading means, s the loading variances and m the column means.
struct ScalarFaOracle {
  std::vector<double> y0, y1, d;  // observations (two rows) and weights
  std::vector<int> col;           // basis column of each observation
  double tau[2] = {1, 1};
  double alpha[2] = {1, 1};

  using State = Eigen::Matrix<double, 8, 1>;

  State sweep(const State& x) const {
    const std::size_t N = d.size();
    double w[2] = {x(0), x(1)}, s[2] = {x(2), x(3)};
    double mm[2][2] = {{x(4), x(5)}, {x(6), x(7)}};
    const double* y[2] = {y0.data(), y1.data()};

    // q(z): shared variance, per-observation means
    double ewtw = 0.0;
    for (int g = 0; g < 2; ++g) ewtw += tau[g] * (w[g] * w[g] + s[g]);
    const double vz = 1.0 / (1.0 + ewtw);
    std::vector<double> mu(N);
    for (std::size_t n = 0; n < N; ++n) {
      double acc = 0.0;
      for (int g = 0; g < 2; ++g) acc += tau[g] * w[g] * (y[g][n] - mm[g][col[n]]);
      mu[n] = vz * acc;
    }
    double sz = 0.0;
    for (std::size_t n = 0; n < N; ++n) sz += d[n] * (mu[n] * mu[n] + vz);

    // q(W)
    for (int g = 0; g < 2; ++g) {
      s[g] = 1.0 / (alpha[g] + tau[g] * sz);
      double acc = 0.0;
      for (std::size_t n = 0; n < N; ++n) acc += d[n] * (y[g][n] - mm[g][col[n]]) * mu[n];
      w[g] = s[g] * tau[g] * acc;
    }

    // M
    for (int g = 0; g < 2; ++g)
      for (int j = 0; j < 2; ++j) {
        double num = 0.0, den = 0.0;
        for (std::size_t n = 0; n < N; ++n)
          if (col[n] == j) {
            num += d[n] * (y[g][n] - w[g] * mu[n]);
            den += d[n];
          }
        mm[g][j] = num / den;
      }
    State out;
    out << w[0], w[1], s[0], s[1], mm[0][0], mm[0][1], mm[1][0], mm[1][1];
    return out;
  }

  State solve(State x, int warmup = 50) const {
    for (int i = 0; i < warmup; ++i) x = sweep(x);
    for (int it = 0; it < 100; ++it) {
      const State f = sweep(x) - x;
      if (f.cwiseAbs().maxCoeff() < 1e-15) break;
      Eigen::Matrix<double, 8, 8> jac;
      for (int c = 0; c < 8; ++c) {
        const double h = 1e-6 * std::max(1.0, std::abs(x(c)));
        State xp = x, xm = x;
        xp(c) += h;
        xm(c) -= h;
        jac.col(c) = ((sweep(xp) - xp) - (sweep(xm) - xm)) / (2 * h);
      }
      const State step = jac.fullPivLu().solve(-f);
      x += step;
      if (step.cwiseAbs().maxCoeff() < 1e-15) break;
    }
    return x;
  }
};

}  // namespace groups::testing
