#pragma once

// Periodic linear-in-features policy.
//
// Each action dimension i is a weighted sum of J phase-shifted sines,
//
//   a_i(t) = sum_j (W Z + M + E)_ij * sin(2*pi*2t/T + 2*pi*j/J),   j = 0..J-1,
//
// so one episode of T steps contains exactly two periods of the gait. Time
// steps are 0-based and taken modulo T.

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "groups/random.hpp"

namespace groups {

struct BasisConfig {
  int period_steps = 20;  // T
  int num_basis = 10;     // J

  void validate() const {
    if (period_steps < 2 || period_steps % 2 != 0)
      throw std::invalid_argument("BasisConfig: period_steps must be even and >= 2");
    if (num_basis < 1) throw std::invalid_argument("BasisConfig: num_basis must be >= 1");
  }
  bool operator==(const BasisConfig&) const = default;
};

/// Ordered partition of the action indices {0..D-1} into groups that share a
/// noise precision and an ARD column scale.
struct GroupStructure {
  std::vector<std::vector<int>> groups;
  std::vector<std::string> labels;

  int num_groups() const { return static_cast<int>(groups.size()); }

  int action_dim() const {
    int d = 0;
    for (const auto& g : groups) d += static_cast<int>(g.size());
    return d;
  }

  int group_size(int m) const { return static_cast<int>(groups.at(m).size()); }

  /// Group index of every action dimension.
  std::vector<int> group_of() const {
    std::vector<int> out(action_dim(), -1);
    for (int m = 0; m < num_groups(); ++m)
      for (int i : groups[m]) out.at(i) = m;
    return out;
  }

  void validate() const {
    if (groups.empty()) throw std::invalid_argument("GroupStructure: at least one group required");
    if (!labels.empty() && labels.size() != groups.size())
      throw std::invalid_argument("GroupStructure: one label per group required");
    const int d = action_dim();
    std::vector<int> seen(d, 0);
    for (const auto& g : groups) {
      if (g.empty()) throw std::invalid_argument("GroupStructure: empty group");
      for (int i : g) {
        if (i < 0 || i >= d) throw std::invalid_argument("GroupStructure: index out of range");
        if (seen[i]++) throw std::invalid_argument("GroupStructure: groups overlap");
      }
    }
  }

  bool operator==(const GroupStructure&) const = default;

  /// Crawler joints ordered (left base, right base, left fin, right fin):
  /// group 0 holds the two fin joints, group 1 the two base joints.
  static GroupStructure crawler() { return {{{2, 3}, {0, 1}}, {"fin", "base"}}; }

  static GroupStructure one_per_dimension(int d) {
    GroupStructure gs;
    for (int i = 0; i < d; ++i) {
      gs.groups.push_back({i});
      gs.labels.push_back("dim" + std::to_string(i));
    }
    return gs;
  }

  /// Splits {0..d-1} into `count` contiguous groups of near-equal size.
  static GroupStructure contiguous(int d, int count) {
    if (count < 1 || count > d) throw std::invalid_argument("GroupStructure: bad group count");
    GroupStructure gs;
    int start = 0;
    for (int m = 0; m < count; ++m) {
      const int size = d / count + (m < d % count ? 1 : 0);
      std::vector<int> g;
      for (int i = 0; i < size; ++i) g.push_back(start + i);
      start += size;
      gs.groups.push_back(std::move(g));
      gs.labels.push_back("group" + std::to_string(m + 1));
    }
    return gs;
  }
};

enum class ExplorationMode { per_rollout, per_timestep };

template <typename Scalar>
struct PolicyParams {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Matrix M;    // D x J mean weights (radians per unit basis value)
  Matrix W;    // D x K latent-to-action projection
  Vector tau;  // one noise precision per group
  GroupStructure groups;
  BasisConfig basis;

  int action_dim() const { return static_cast<int>(M.rows()); }
  int latent_dim() const { return static_cast<int>(W.cols()); }
  int num_basis() const { return basis.num_basis; }

  /// Per-row noise precision expanded from the per-group values.
  Vector row_precision() const {
    Vector out(action_dim());
    const auto of = groups.group_of();
    for (int i = 0; i < action_dim(); ++i) out(i) = tau(of[i]);
    return out;
  }

  void validate() const {
    basis.validate();
    groups.validate();
    const int d = groups.action_dim();
    if (M.rows() != d || M.cols() != basis.num_basis)
      throw std::invalid_argument("PolicyParams: M must be D x J");
    if (W.rows() != d) throw std::invalid_argument("PolicyParams: W must have D rows");
    if (tau.size() != groups.num_groups())
      throw std::invalid_argument("PolicyParams: one tau per group required");
    for (Eigen::Index m = 0; m < tau.size(); ++m)
      if (!(tau(m) > Scalar(0)) || !std::isfinite(static_cast<double>(tau(m))))
        throw std::invalid_argument("PolicyParams: tau entries must be positive and finite");
  }

  /// Zero mean, zero projection, unit precisions.
  static PolicyParams zeros(GroupStructure gs, BasisConfig basis, int latent_dim) {
    PolicyParams p;
    const int d = gs.action_dim();
    p.M = Matrix::Zero(d, basis.num_basis);
    p.W = Matrix::Zero(d, latent_dim);
    p.tau = Vector::Ones(gs.num_groups());
    p.groups = std::move(gs);
    p.basis = basis;
    return p;
  }
};

template <typename Scalar>
struct ExplorationDraw {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  Matrix Z;  // K x J, standard normal
  Matrix E;  // D x J, row block of group m ~ N(0, 1/tau_m)
  ExplorationMode mode = ExplorationMode::per_rollout;

  static ExplorationDraw zero(const PolicyParams<Scalar>& p) {
    return {Matrix::Zero(p.latent_dim(), p.num_basis()), Matrix::Zero(p.action_dim(), p.num_basis()),
            ExplorationMode::per_rollout};
  }
};

using PolicyParamsd = PolicyParams<double>;
using ExplorationDrawd = ExplorationDraw<double>;

/// Basis values phi(t). The phase is reduced on integers before conversion to
/// radians, so phi(t) and phi(t + T/2) are bitwise identical.
template <typename Scalar = double>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> basis_vector(long t, const BasisConfig& cfg) {
  const long T = cfg.period_steps;
  const int J = cfg.num_basis;
  const long tm = ((t % T) + T) % T;
  const long phase_steps = (2 * tm) % T;
  constexpr Scalar two_pi = Scalar(2) * std::numbers::pi_v<Scalar>;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> phi(J);
  for (int j = 0; j < J; ++j) {
    const Scalar arg = two_pi * Scalar(phase_steps) / Scalar(T) + two_pi * Scalar(j) / Scalar(J);
    phi(j) = std::sin(arg);
  }
  return phi;
}

/// All T basis vectors stacked as columns (J x T).
template <typename Scalar = double>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> basis_matrix(const BasisConfig& cfg) {
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> out(cfg.num_basis, cfg.period_steps);
  for (int t = 0; t < cfg.period_steps; ++t) out.col(t) = basis_vector<Scalar>(t, cfg);
  return out;
}

template <typename Scalar>
ExplorationDraw<Scalar> sample_exploration(const PolicyParams<Scalar>& params, Rng& rng,
                                           ExplorationMode mode = ExplorationMode::per_rollout) {
  std::normal_distribution<Scalar> dist(Scalar(0), Scalar(1));
  ExplorationDraw<Scalar> draw;
  draw.mode = mode;
  draw.Z = standard_normal_matrix<Scalar>(rng, params.latent_dim(), params.num_basis(), dist);
  draw.E = standard_normal_matrix<Scalar>(rng, params.action_dim(), params.num_basis(), dist);
  const auto prec = params.row_precision();
  for (Eigen::Index i = 0; i < draw.E.rows(); ++i) draw.E.row(i) /= std::sqrt(prec(i));
  return draw;
}

/// Realized parameter matrix W Z + M + E.
template <typename Scalar>
typename PolicyParams<Scalar>::Matrix realized_parameters(const PolicyParams<Scalar>& params,
                                                           const ExplorationDraw<Scalar>& draw) {
  if (draw.Z.rows() != params.latent_dim() || draw.Z.cols() != params.num_basis() ||
      draw.E.rows() != params.action_dim() || draw.E.cols() != params.num_basis() ||
      params.M.cols() != params.num_basis())
    throw std::invalid_argument("realized_parameters: draw dimensions do not match params");
  return params.W * draw.Z + params.M + draw.E;
}

template <typename Derived>
auto action_from_parameters(const Eigen::MatrixBase<Derived>& theta, long t, const BasisConfig& cfg) {
  using Scalar = typename Derived::Scalar;
  if (theta.cols() != cfg.num_basis)
    throw std::invalid_argument("action_from_parameters: theta must have J columns");
  return Eigen::Matrix<Scalar, Eigen::Dynamic, 1>(theta * basis_vector<Scalar>(t, cfg));
}

template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> compute_action(const PolicyParams<Scalar>& params,
                                                         const ExplorationDraw<Scalar>& draw, long t) {
  return action_from_parameters(realized_parameters(params, draw), t, params.basis);
}

template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> mean_action(const PolicyParams<Scalar>& params, long t) {
  return action_from_parameters(params.M, t, params.basis);
}

}  // namespace groups
