#pragma once

#include <string>

#include <json.hpp>

#include "groups/policy.hpp"

namespace groups {

// Row-major nested arrays.
nlohmann::json matrix_to_json(const Eigen::MatrixXd& m);
Eigen::MatrixXd matrix_from_json(const nlohmann::json& j, Eigen::Index expected_cols = -1);
nlohmann::json vector_to_json(const Eigen::VectorXd& v);
Eigen::VectorXd vector_from_json(const nlohmann::json& j);

/// {"T":..,"J":..,"K":..,"groups":[[..],..],"M":[[..]],"W":[[..]],"tau":[..]}
nlohmann::json policy_to_json(const PolicyParamsd& p);
PolicyParamsd policy_from_json(const nlohmann::json& j);

std::string dump_policy(const PolicyParamsd& p);
PolicyParamsd parse_policy(const std::string& text);

}  // namespace groups
