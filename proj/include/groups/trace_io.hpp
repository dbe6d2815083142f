#pragma once

// Trace serialization. JSON-lines: one record per iteration, preceded by an
// iteration-0 record for the initial policy. Summary CSV columns:
//
//   iteration, mean_policy_reward, batch_reward_mean, batch_reward_max,
//   elbo_final, e_tau_group1 .. e_tau_groupM, ess
//
// Rewards are in cm. A reward scale other than 1 appends one column,
// mean_policy_reward_<unit>, holding the scaled reward.

#include <filesystem>
#include <iosfwd>
#include <string>

#include <json.hpp>

#include "groups/learner.hpp"

namespace groups {

struct RewardUnit {
  double scale = 1.0;        // emitted units per cm
  std::string label = "cm";  // suffix of the scaled column
  bool identity() const { return scale == 1.0; }
};

nlohmann::json iteration_to_json(const LearningTrace& trace, const IterationRecord& rec);
void write_trace_jsonl(std::ostream& out, const LearningTrace& trace);
/// Reads back what write_trace_jsonl wrote. Only the fields needed to replay
/// policies are required: iteration, mean_policy_reward, policy.
LearningTrace read_trace_jsonl(std::istream& in, const std::string& source = "<stream>");
LearningTrace read_trace_jsonl(const std::filesystem::path& path);

std::string trace_csv_header(int num_groups, const RewardUnit& unit = {});
void write_trace_csv(std::ostream& out, const LearningTrace& trace, const RewardUnit& unit = {});

/// Shortest round-trip decimal form; "nan" for NaN.
std::string format_number(double x);

}  // namespace groups
