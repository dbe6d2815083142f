#include "groups/synthetic.hpp"

#include <cmath>
#include <stdexcept>

namespace groups {
namespace {

void check_shape(int action_dim, int num_groups, int num_basis, double init_tau, double init_w_scale,
                 const char* what) {
  const std::string name(what);
  if (action_dim < 1 || num_groups < 1 || num_groups > action_dim)
    throw std::invalid_argument(name + ": need 1 <= num_groups <= action_dim");
  if (num_basis < 1) throw std::invalid_argument(name + ": num_basis must be >= 1");
  if (!(init_tau > 0) || !(init_w_scale >= 0)) throw std::invalid_argument(name + ": bad initial exploration");
}

PolicyParamsd initial(int action_dim, int num_groups, int num_basis, int latent_dim, double init_tau,
                      double init_w_scale, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  auto p = PolicyParamsd::zeros(GroupStructure::contiguous(action_dim, num_groups), BasisConfig{20, num_basis},
                                latent_dim);
  p.W = init_w_scale / std::sqrt(init_tau) * standard_normal_matrix<double>(rng, action_dim, latent_dim, n);
  p.tau.setConstant(init_tau);
  return p;
}

}  // namespace

void QuadraticStub::validate() const {
  check_shape(action_dim, num_groups, num_basis, init_tau, init_w_scale, "quadratic stub");
  if (!(optimum_scale > 0)) throw std::invalid_argument("quadratic stub: optimum_scale must be positive");
}

void PlantedStub::validate() const {
  check_shape(action_dim, num_groups, num_basis, init_tau, init_w_scale, "planted stub");
  if (!(slope > 0) || !(curvature >= 0)) throw std::invalid_argument("planted stub: need slope > 0, curvature >= 0");
}

QuadraticProblem make_quadratic(const QuadraticStub& stub, int latent_dim, std::uint64_t seed) {
  stub.validate();
  Rng rng(derive_seed(seed, {0x9a}));
  std::normal_distribution<double> n(0.0, 1.0);
  const Eigen::MatrixXd optimum = stub.optimum_scale * standard_normal_matrix<double>(rng, stub.action_dim, stub.num_basis, n);
  QuadraticProblem out;
  out.env = std::make_shared<const QuadraticEnvironment>(optimum);
  out.init = initial(stub.action_dim, stub.num_groups, stub.num_basis, latent_dim, stub.init_tau, stub.init_w_scale, rng);
  return out;
}

PlantedProblem make_planted(const PlantedStub& stub, int latent_dim, std::uint64_t seed) {
  stub.validate();
  Rng rng(derive_seed(seed, {0x91}));
  std::normal_distribution<double> n(0.0, 1.0);
  const Eigen::VectorXd u = standard_normal_matrix<double>(rng, stub.action_dim, 1, n).col(0);
  PlantedProblem out;
  out.env = std::make_shared<const PlantedRidgeEnvironment>(u, stub.slope, stub.curvature);
  out.init = initial(stub.action_dim, stub.num_groups, stub.num_basis, latent_dim, stub.init_tau, stub.init_w_scale, rng);
  return out;
}

}  // namespace groups
