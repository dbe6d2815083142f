#include <doctest.h>

#include <cmath>
#include <numeric>

#include <Eigen/Dense>

#include "groups/variational.hpp"
#include "groups/weights.hpp"
#include "support.hpp"

using namespace groups;
using groups::testing::posterior_valid;
using groups::testing::random_instance;

namespace {

using Update = QPosterior (*)(const WeightedData&, const GroupStructure&, const HyperParams&, QPosterior);

struct NamedUpdate {
  const char* name;
  Update fn;
};

constexpr NamedUpdate kUpdates[] = {
    {"qZ", update_qz}, {"qW", update_qw}, {"qM", update_qm}, {"qAlpha", update_qalpha}, {"qTau", update_qtau}};

QPosterior single_factor_posterior(const Eigen::VectorXd& w, double tau, const Eigen::MatrixXd& m, Eigen::Index n) {
  QPosterior q;
  q.m = m;
  q.w_mean = w;
  q.w_cov = {Eigen::MatrixXd::Zero(1, 1)};
  q.z_mean = Eigen::MatrixXd::Zero(1, n);
  q.z_cov = Eigen::MatrixXd::Identity(1, 1);
  q.alpha_shape = q.alpha_rate = Eigen::MatrixXd::Ones(1, 1);
  q.tau_shape = Eigen::VectorXd::Constant(1, tau);
  q.tau_rate = Eigen::VectorXd::Ones(1);
  return q;
}

}  // namespace

TEST_CASE("make_observations flattens columns with rollout weights") {
  const std::vector<Eigen::MatrixXd> thetas = {Eigen::MatrixXd::Constant(2, 3, 1.0), Eigen::MatrixXd::Constant(2, 3, 2.0)};
  const std::vector<double> w = {0.5, 1.5};
  const auto data = make_observations(thetas, w);
  CHECK(data.size() == 6);
  CHECK(data.num_columns == 3);
  CHECK(data.column[4] == 1);
  CHECK(data.weight(4) == 1.5);
  CHECK(data.total_weight() == doctest::Approx(6.0));
  const std::vector<double> bad = {0.5, -1.0};
  CHECK_THROWS(make_observations(thetas, bad));
}

TEST_CASE("qZ with zero loadings is the prior") {
  Rng rng(1);
  auto inst = random_instance(rng);
  while (inst.hyper.latent_dim == 0) inst = random_instance(rng);
  inst.q.w_mean.setZero();
  for (auto& c : inst.q.w_cov) c.setZero();
  const auto q = update_qz(inst.data, inst.groups, inst.hyper, inst.q);
  CHECK(q.z_mean.cwiseAbs().maxCoeff() == 0.0);
  CHECK((q.z_cov - Eigen::MatrixXd::Identity(q.latent_dim(), q.latent_dim())).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("qZ scalar factor analysis matches the closed form") {
  // One group, K = 1, a single observation.
  const Eigen::Vector3d y(0.4, -1.2, 2.0), m(0.1, 0.3, -0.5), w(0.7, -0.2, 1.1);
  const double tau = 2.5;
  const auto data = make_observations(std::vector<Eigen::MatrixXd>{y}, std::vector<double>{1.0});
  const GroupStructure gs{{{0, 1, 2}}, {"all"}};
  HyperParams hyper;
  hyper.latent_dim = 1;
  const auto q = update_qz(data, gs, hyper, single_factor_posterior(w, tau, m, 1));
  const double expected_mu = tau * w.dot(y - m) / (1.0 + tau * w.squaredNorm());
  CHECK(q.z_mean(0, 0) == doctest::Approx(expected_mu).epsilon(1e-14));
  CHECK(q.z_cov(0, 0) == doctest::Approx(1.0 / (1.0 + tau * w.squaredNorm())).epsilon(1e-14));
}

TEST_CASE("qW scalar case matches the closed form") {
  const Eigen::Vector3d y(0.4, -1.2, 2.0), m(0.1, 0.3, -0.5);
  const double tau = 2.5, mu = 0.8, vz = 0.3, alpha = 1.7, weight = 1.3;
  const auto data = make_observations(std::vector<Eigen::MatrixXd>{y}, std::vector<double>{weight});
  const GroupStructure gs{{{0, 1, 2}}, {"all"}};
  HyperParams hyper;
  hyper.latent_dim = 1;
  auto q0 = single_factor_posterior(Eigen::Vector3d::Zero(), tau, m, 1);
  q0.z_mean(0, 0) = mu;
  q0.z_cov(0, 0) = vz;
  q0.alpha_shape(0, 0) = alpha;
  const auto q = update_qw(data, gs, hyper, q0);
  const double precision = alpha + tau * weight * (mu * mu + vz);
  CHECK(q.w_cov[0](0, 0) == doctest::Approx(1.0 / precision).epsilon(1e-14));
  for (int i = 0; i < 3; ++i)
    CHECK(q.w_mean(i, 0) == doctest::Approx(tau * weight * (y(i) - m(i)) * mu / precision).epsilon(1e-14));
}

TEST_CASE("qW without data returns the prior mean") {
  Rng rng(4);
  auto inst = random_instance(rng);
  while (inst.hyper.latent_dim == 0) inst = random_instance(rng);
  inst.data.weight.setZero();
  const auto q = update_qw(inst.data, inst.groups, inst.hyper, inst.q);
  CHECK(q.w_mean.cwiseAbs().maxCoeff() == 0.0);
  for (int m = 0; m < inst.groups.num_groups(); ++m)
    CHECK((q.w_cov[m].inverse().diagonal() - q.expected_alpha().row(m).transpose()).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("qM is the weighted residual mean") {
  const GroupStructure gs = GroupStructure::crawler();
  HyperParams hyper;
  hyper.latent_dim = 0;
  Rng rng(5);
  std::normal_distribution<double> n(0, 1);
  const Eigen::MatrixXd t1 = standard_normal_matrix<double>(rng, 4, 10, n);
  const Eigen::MatrixXd t2 = standard_normal_matrix<double>(rng, 4, 10, n);

  QPosterior q0;
  q0.m = Eigen::MatrixXd::Zero(4, 10);
  q0.w_mean.resize(4, 0);
  q0.w_cov.assign(2, Eigen::MatrixXd(0, 0));
  q0.z_cov.resize(0, 0);
  q0.tau_shape = q0.tau_rate = Eigen::VectorXd::Ones(2);

  SUBCASE("single rollout") {
    const auto data = make_observations(std::vector<Eigen::MatrixXd>{t1}, std::vector<double>{1.0});
    q0.z_mean.resize(0, data.size());
    CHECK(update_qm(data, gs, hyper, q0).m == t1);
  }
  SUBCASE("two equally weighted rollouts") {
    const auto data = make_observations(std::vector<Eigen::MatrixXd>{t1, t2}, std::vector<double>{1.0, 1.0});
    q0.z_mean.resize(0, data.size());
    CHECK((update_qm(data, gs, hyper, q0).m - 0.5 * (t1 + t2)).cwiseAbs().maxCoeff() < 1e-15);
  }
}

TEST_CASE("qM recovers a planted mean like direct weighted least squares") {
  Rng rng(6);
  std::normal_distribution<double> n(0, 1);
  const int D = 4, J = 3, K = 2, S = 5;
  const GroupStructure gs = GroupStructure::crawler();
  const Eigen::MatrixXd w = standard_normal_matrix<double>(rng, D, K, n);
  const Eigen::MatrixXd m_true = standard_normal_matrix<double>(rng, D, J, n);
  std::vector<Eigen::MatrixXd> thetas;
  std::vector<double> weights;
  std::vector<Eigen::MatrixXd> zs;
  for (int s = 0; s < S; ++s) {
    zs.push_back(standard_normal_matrix<double>(rng, K, J, n));
    thetas.push_back(w * zs.back() + m_true + 0.1 * standard_normal_matrix<double>(rng, D, J, n));
    weights.push_back(0.2 + s);
  }
  const auto data = make_observations(thetas, weights);
  HyperParams hyper;
  hyper.latent_dim = K;
  hyper.rank = 1;
  QPosterior q;
  q.m = Eigen::MatrixXd::Zero(D, J);
  q.w_mean = w;
  q.w_cov.assign(2, Eigen::MatrixXd::Identity(K, K));
  q.z_mean.resize(K, data.size());
  for (int s = 0; s < S; ++s) q.z_mean.middleCols(s * J, J) = zs[s];
  q.z_cov = Eigen::MatrixXd::Identity(K, K);
  q.tau_shape = q.tau_rate = Eigen::VectorXd::Ones(2);
  q.alpha_shape = q.alpha_rate = Eigen::MatrixXd::Ones(2, K);
  const auto updated = update_qm(data, gs, hyper, q);

  // Direct solve: for each (row i, column j), minimize sum_s d_s (r_s - m)^2
  // via the normal equations of the stacked weighted system A m = b.
  for (int i = 0; i < D; ++i)
    for (int j = 0; j < J; ++j) {
      Eigen::VectorXd a(S), b(S);
      for (int s = 0; s < S; ++s) {
        const double sw = std::sqrt(weights[s]);
        a(s) = sw;
        b(s) = sw * (thetas[s](i, j) - w.row(i).dot(zs[s].col(j)));
      }
      const double solved = (a.transpose() * a).ldlt().solve(a.transpose() * b)(0);
      CHECK(std::abs(updated.m(i, j) - solved) < 1e-10);
    }
  // With the noise removed the planted mean itself is recovered.
  for (int s = 0; s < S; ++s) thetas[s] = w * zs[s] + m_true;
  const auto clean = update_qm(make_observations(thetas, weights), gs, hyper, q);
  CHECK((clean.m - m_true).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("qAlpha with zero loadings") {
  Rng rng(8);
  auto inst = random_instance(rng);
  while (inst.hyper.latent_dim < 2 || inst.groups.num_groups() < 2) inst = random_instance(rng);
  inst.hyper.rank = 1;
  inst.q.w_mean.setZero();
  for (auto& c : inst.q.w_cov) c.setZero();
  const auto q = update_qalpha(inst.data, inst.groups, inst.hyper, inst.q);
  const auto ea = q.expected_alpha();
  for (int m = 0; m < inst.groups.num_groups(); ++m)
    for (int k = 0; k < inst.hyper.latent_dim; ++k)
      CHECK(ea(m, k) ==
            doctest::Approx((inst.hyper.a_alpha + 0.5 * inst.groups.group_size(m)) / inst.hyper.b_alpha).epsilon(1e-12));
  CHECK((q.alpha_shape.array() > 0).all());
  CHECK((q.alpha_rate.array() > 0).all());
}

TEST_CASE("structured rank projection") {
  const Eigen::MatrixXd constant = Eigen::MatrixXd::Constant(3, 4, -1.3);
  CHECK((project_structured_rank(constant, 1) - constant).cwiseAbs().maxCoeff() < 1e-12);

  // Row and column offsets plus a rank-1 interaction are left alone.
  Eigen::VectorXd r(3), u(3);
  Eigen::RowVectorXd c(4), v(4);
  r << 0.5, -1, 2;
  c << 1, 0, -3, 0.2;
  u << 1, -2, 1;
  v << 0.5, -0.5, 1, -1;
  Eigen::MatrixXd structured = r.replicate(1, 4) + c.replicate(3, 1) + u * v;
  CHECK((project_structured_rank(structured, 1) - structured).cwiseAbs().maxCoeff() < 1e-12);

  // A rank-2 interaction is reduced.
  Rng rng(3);
  std::normal_distribution<double> n(0, 1);
  const Eigen::MatrixXd noisy = standard_normal_matrix<double>(rng, 3, 4, n);
  const Eigen::MatrixXd p1 = project_structured_rank(noisy, 1);
  CHECK((project_structured_rank(p1, 1) - p1).cwiseAbs().maxCoeff() < 1e-12);
  // Two groups: the double-centred residual already has rank <= 1.
  const Eigen::MatrixXd two = standard_normal_matrix<double>(rng, 2, 3, n);
  CHECK((project_structured_rank(two, 1) - two).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("qAlpha keeps a dominant factor cheapest in every group") {
  // Three groups of two, K = 3: factor 1 carries all the loading energy.
  const GroupStructure gs = GroupStructure::contiguous(6, 3);
  HyperParams hyper;
  hyper.latent_dim = 3;
  hyper.rank = 1;
  Rng rng(12);
  std::normal_distribution<double> n(0, 1);
  const auto data = make_observations(std::vector<Eigen::MatrixXd>{standard_normal_matrix<double>(rng, 6, 2, n)},
                                      std::vector<double>{1.0});
  QPosterior q;
  q.m = Eigen::MatrixXd::Zero(6, 2);
  q.w_mean = 0.05 * standard_normal_matrix<double>(rng, 6, 3, n);
  q.w_mean.col(1) = Eigen::VectorXd::LinSpaced(6, 2.0, 3.0);
  q.w_cov.assign(3, 0.01 * Eigen::MatrixXd::Identity(3, 3));
  q.z_mean = Eigen::MatrixXd::Zero(3, data.size());
  q.z_cov = Eigen::MatrixXd::Identity(3, 3);
  q.alpha_shape = q.alpha_rate = Eigen::MatrixXd::Ones(3, 3);
  q.tau_shape = q.tau_rate = Eigen::VectorXd::Ones(3);
  const auto ea = update_qalpha(data, gs, hyper, q).expected_alpha();
  for (int m = 0; m < 3; ++m) {
    CHECK(ea(m, 1) < ea(m, 0));
    CHECK(ea(m, 1) < ea(m, 2));
  }
}

TEST_CASE("qTau cap engages on a perfect reconstruction") {
  const GroupStructure gs = GroupStructure::crawler();
  HyperParams hyper;
  hyper.latent_dim = 0;
  const Eigen::MatrixXd theta = Eigen::MatrixXd::Constant(4, 10, 0.3);
  const auto data = make_observations(std::vector<Eigen::MatrixXd>{theta}, std::vector<double>{1.0});
  QPosterior q;
  q.m = theta;
  q.w_mean.resize(4, 0);
  q.w_cov.assign(2, Eigen::MatrixXd(0, 0));
  q.z_mean.resize(0, data.size());
  q.z_cov.resize(0, 0);
  q.tau_shape = q.tau_rate = Eigen::VectorXd::Ones(2);
  const auto out = update_qtau(data, gs, hyper, q);
  for (int m = 0; m < 2; ++m) {
    const double shape = hyper.a_tau + 0.5 * 2 * 10;
    CHECK(out.tau_shape(m) == doctest::Approx(shape));
    CHECK(shape / hyper.b_tau > hyper.tau_cap);
    CHECK(out.expected_tau()(m) == doctest::Approx(hyper.tau_cap).epsilon(1e-12));
  }
}

TEST_CASE("qTau is consistent for iid residuals") {
  const GroupStructure gs{{{0, 1}}, {"all"}};
  HyperParams hyper;
  hyper.latent_dim = 0;
  const double sigma = 0.37;
  Rng rng(21);
  std::normal_distribution<double> n(0, sigma);
  std::vector<Eigen::MatrixXd> thetas;
  for (int h = 0; h < 500; ++h) thetas.push_back(standard_normal_matrix<double>(rng, 2, 10, n));
  const auto data = make_observations(thetas, std::vector<double>(500, 1.0));
  QPosterior q;
  q.m = Eigen::MatrixXd::Zero(2, 10);
  q.w_mean.resize(2, 0);
  q.w_cov.assign(1, Eigen::MatrixXd(0, 0));
  q.z_mean.resize(0, data.size());
  q.z_cov.resize(0, 0);
  q.tau_shape = q.tau_rate = Eigen::VectorXd::Ones(1);
  const double e_tau = update_qtau(data, gs, hyper, q).expected_tau()(0);
  CHECK(std::abs(e_tau * sigma * sigma - 1.0) < 0.05);
}

TEST_CASE("every coordinate update is monotone in the bound") {
  Rng rng(2024);
  int checked = 0;
  for (int trial = 0; trial < 100; ++trial) {
    auto inst = random_instance(rng);
    QPosterior q = inst.q;
    for (int sweep = 0; sweep < 4; ++sweep)
      for (const auto& upd : kUpdates) {
        const double before = elbo(inst.data, inst.groups, inst.hyper, q);
        q = upd.fn(inst.data, inst.groups, inst.hyper, std::move(q));
        const double after = elbo(inst.data, inst.groups, inst.hyper, q);
        INFO("trial " << trial << " update " << upd.name);
        CHECK(after - before >= -1e-8 * std::abs(before));
        ++checked;
      }
    CHECK(posterior_valid(q, inst.hyper.tau_cap));
  }
  CHECK(checked == 100 * 4 * 5);
}

TEST_CASE("bound is invariant to relabelling the factors") {
  Rng rng(99);
  auto inst = random_instance(rng);
  while (inst.hyper.latent_dim < 2) inst = random_instance(rng);
  const int K = inst.hyper.latent_dim;
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(K);
  perm.setIdentity();
  for (int k = 0; k + 1 < K; k += 2) perm.applyTranspositionOnTheRight(k, k + 1);
  QPosterior p = inst.q;
  p.w_mean = inst.q.w_mean * perm;
  for (auto& c : p.w_cov) c = perm.transpose() * c * perm;
  p.z_mean = perm.transpose() * inst.q.z_mean;
  p.z_cov = perm.transpose() * inst.q.z_cov * perm;
  p.alpha_shape = inst.q.alpha_shape * perm;
  p.alpha_rate = inst.q.alpha_rate * perm;
  const double a = elbo(inst.data, inst.groups, inst.hyper, inst.q);
  const double b = elbo(inst.data, inst.groups, inst.hyper, p);
  CHECK(a == doctest::Approx(b).epsilon(1e-12));
}

TEST_CASE("bound drops when tau leaves its optimum") {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    auto inst = random_instance(rng);
    inst.hyper.tau_cap = 1e12;
    const auto q = update_qtau(inst.data, inst.groups, inst.hyper, inst.q);
    const double at_optimum = elbo(inst.data, inst.groups, inst.hyper, q);
    for (double factor : {0.7, 1.5}) {
      auto perturbed = q;
      perturbed.tau_rate(0) *= factor;
      CHECK(elbo(inst.data, inst.groups, inst.hyper, perturbed) < at_optimum);
    }
  }
}

TEST_CASE("small instance fixed point matches the scalar Newton oracle") {
  Rng rng(314);
  std::normal_distribution<double> n(0, 1);
  const GroupStructure gs{{{0}, {1}}, {"a", "b"}};
  std::vector<Eigen::MatrixXd> thetas;
  for (int h = 0; h < 3; ++h) thetas.push_back(standard_normal_matrix<double>(rng, 2, 2, n));
  const Eigen::VectorXd weights = reward_to_weights(Eigen::Vector3d(0.2, 1.0, -0.4), 1.0);
  const auto data = make_observations(thetas, std::vector<double>(weights.data(), weights.data() + 3));

  HyperParams hyper;
  hyper.latent_dim = 1;
  QPosterior q;
  q.m = Eigen::MatrixXd::Zero(2, 2);
  q.w_mean = Eigen::Vector2d(0.8, -0.6);
  q.w_cov.assign(2, 1e-2 * Eigen::MatrixXd::Identity(1, 1));
  q.z_mean = Eigen::MatrixXd::Zero(1, data.size());
  q.z_cov = Eigen::MatrixXd::Identity(1, 1);
  q.alpha_shape = Eigen::Vector2d(0.5, 2.0);
  q.alpha_rate = Eigen::MatrixXd::Ones(2, 1);
  q.tau_shape = Eigen::Vector2d(3.0, 5.0);
  q.tau_rate = Eigen::VectorXd::Ones(2);

  groups::testing::ScalarFaOracle oracle;
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    oracle.y0.push_back(data.y(0, i));
    oracle.y1.push_back(data.y(1, i));
    oracle.d.push_back(data.weight(i));
    oracle.col.push_back(data.column[static_cast<std::size_t>(i)]);
  }
  oracle.tau[0] = 3.0;
  oracle.tau[1] = 5.0;
  oracle.alpha[0] = 0.5;
  oracle.alpha[1] = 2.0;
  groups::testing::ScalarFaOracle::State x0;
  x0 << 0.8, -0.6, 1e-2, 1e-2, 0, 0, 0, 0;
  const auto fixed = oracle.solve(x0);
  CHECK((oracle.sweep(fixed) - fixed).cwiseAbs().maxCoeff() < 1e-12);

  for (int it = 0; it < 200000; ++it) {
    const QPosterior prev = q;
    q = update_qm(data, gs, hyper, update_qw(data, gs, hyper, update_qz(data, gs, hyper, std::move(q))));
    if ((q.w_mean - prev.w_mean).cwiseAbs().maxCoeff() < 1e-15 && (q.m - prev.m).cwiseAbs().maxCoeff() < 1e-15) break;
  }
  CHECK(std::abs(q.w_mean(0, 0) - fixed(0)) < 1e-6);
  CHECK(std::abs(q.w_mean(1, 0) - fixed(1)) < 1e-6);
  CHECK(std::abs(q.w_cov[0](0, 0) - fixed(2)) < 1e-6);
  CHECK(std::abs(q.w_cov[1](0, 0) - fixed(3)) < 1e-6);
  CHECK(std::abs(q.m(0, 0) - fixed(4)) < 1e-6);
  CHECK(std::abs(q.m(0, 1) - fixed(5)) < 1e-6);
  CHECK(std::abs(q.m(1, 0) - fixed(6)) < 1e-6);
  CHECK(std::abs(q.m(1, 1) - fixed(7)) < 1e-6);
  CHECK(std::abs(fixed(0)) > 1e-3);  // a non-trivial fixed point
}

TEST_CASE("fit extracts posterior expectations and converges") {
  Rng rng(55);
  std::normal_distribution<double> n(0, 1);
  auto params = PolicyParamsd::zeros(GroupStructure::crawler(), BasisConfig{}, 3);
  params.W = 0.3 * standard_normal_matrix<double>(rng, 4, 3, n);
  params.tau.setConstant(10.0);
  std::vector<Eigen::MatrixXd> thetas;
  std::vector<double> w;
  for (int h = 0; h < 20; ++h) {
    thetas.push_back(realized_parameters(params, sample_exploration(params, rng)));
    w.push_back(1.0);
  }
  const auto data = make_observations(thetas, w);
  HyperParams hyper;
  const auto result = fit(data, params, hyper);
  CHECK(result.converged);
  CHECK(result.params.M == result.posterior.m);
  CHECK(result.params.W == result.posterior.w_mean);
  CHECK(result.params.tau == result.posterior.expected_tau());
  for (std::size_t i = 1; i < result.elbo_history.size(); ++i)
    CHECK(result.elbo_history[i] >= result.elbo_history[i - 1] - 1e-8 * std::abs(result.elbo_history[i - 1]));
  CHECK(posterior_valid(result.posterior, hyper.tau_cap));

  hyper.inner_max_iters = 1;
  hyper.inner_rel_tol = 1e-300;
  const auto short_run = fit(data, params, hyper);
  CHECK_FALSE(short_run.converged);
  CHECK(short_run.iterations == 1);
}

TEST_CASE("hyperparameter validation") {
  HyperParams h;
  CHECK_NOTHROW(h.validate(2));
  h.rank = 3;
  CHECK_THROWS(h.validate(2));
  h.rank = 1;
  h.a_tau = 0;
  CHECK_THROWS(h.validate(2));
}
