#include "groups/stubs.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include <Eigen/QR>
#include <Eigen/SVD>

namespace groups {

Eigen::MatrixXd average_parameters(const PolicyExecutor& policy) {
  const auto& thetas = policy.thetas();
  if (thetas.size() == 1) return thetas.front();
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(thetas.front().rows(), thetas.front().cols());
  for (const auto& t : thetas) sum += t;
  return sum / static_cast<double>(thetas.size());
}

PlantedRidgeEnvironment::PlantedRidgeEnvironment(Eigen::VectorXd direction, double slope, double curvature)
    : u_(std::move(direction)), slope_(slope), curvature_(curvature) {
  const double n = u_.norm();
  if (!(n > 0)) throw std::invalid_argument("PlantedRidgeEnvironment: zero direction");
  u_ /= n;
}

double PlantedRidgeEnvironment::evaluate(const PolicyExecutor& policy, std::uint64_t) const {
  const Eigen::MatrixXd theta = average_parameters(policy);
  if (theta.rows() != u_.size()) throw std::invalid_argument("PlantedRidgeEnvironment: dimension mismatch");
  const Eigen::RowVectorXd along = u_.transpose() * theta;
  const Eigen::MatrixXd across = theta - u_ * along;
  return slope_ * along.sum() - curvature_ * across.squaredNorm();
}

namespace {
Eigen::MatrixXd orthonormal_columns(const Eigen::MatrixXd& a) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU);
  const auto& s = svd.singularValues();
  Eigen::Index r = 0;
  while (r < s.size() && s(r) > 1e-12 * std::max(1.0, s(0))) ++r;
  return svd.matrixU().leftCols(r);
}
}  // namespace

Eigen::MatrixXd dominant_subspace(const Eigen::MatrixXd& W, int count) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(W, Eigen::ComputeThinU);
  return svd.matrixU().leftCols(std::min<Eigen::Index>(count, svd.matrixU().cols()));
}

double largest_principal_angle_deg(const Eigen::MatrixXd& basis, const Eigen::MatrixXd& subspace) {
  const Eigen::MatrixXd qa = orthonormal_columns(basis);
  const Eigen::MatrixXd qb = orthonormal_columns(subspace);
  if (qa.cols() == 0 || qb.cols() == 0) return 90.0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(qa.transpose() * qb);
  const double smallest = std::clamp(svd.singularValues().minCoeff(), -1.0, 1.0);
  return std::acos(smallest) * 180.0 / std::numbers::pi;
}

}  // namespace groups
