#include "groups/policy_io.hpp"

#include <stdexcept>

namespace groups {

using nlohmann::json;

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j, Eigen::Index expected_cols) {
  if (!j.is_array()) throw std::invalid_argument("matrix must be an array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  Eigen::Index cols = expected_cols;
  if (rows > 0) cols = static_cast<Eigen::Index>(j.at(0).size());
  if (cols < 0) cols = 0;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto& row = j.at(i);
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
      throw std::invalid_argument("matrix rows must be arrays of equal length");
    for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = row.at(k).get<double>();
  }
  return m;
}

json vector_to_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

Eigen::VectorXd vector_from_json(const json& j) {
  if (!j.is_array()) throw std::invalid_argument("vector must be an array");
  Eigen::VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  return v;
}

json policy_to_json(const PolicyParamsd& p) {
  return json{{"T", p.basis.period_steps}, {"J", p.basis.num_basis}, {"K", p.latent_dim()},
              {"groups", p.groups.groups},  {"M", matrix_to_json(p.M)},  {"W", matrix_to_json(p.W)},
              {"tau", vector_to_json(p.tau)}};
}

PolicyParamsd policy_from_json(const json& j) {
  PolicyParamsd p;
  p.basis.period_steps = j.at("T").get<int>();
  p.basis.num_basis = j.at("J").get<int>();
  const int k = j.at("K").get<int>();
  p.groups.groups = j.at("groups").get<std::vector<std::vector<int>>>();
  for (int m = 0; m < p.groups.num_groups(); ++m) p.groups.labels.push_back("group" + std::to_string(m + 1));
  p.M = matrix_from_json(j.at("M"), p.basis.num_basis);
  p.W = matrix_from_json(j.at("W"), k);
  if (p.W.rows() == 0) p.W.resize(0, k);
  p.tau = vector_from_json(j.at("tau"));
  if (p.W.cols() != k) throw std::invalid_argument("policy: W column count differs from K");
  p.validate();
  return p;
}

std::string dump_policy(const PolicyParamsd& p) { return policy_to_json(p).dump(); }

PolicyParamsd parse_policy(const std::string& text) { return policy_from_json(json::parse(text)); }

}  // namespace groups
