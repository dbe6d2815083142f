#include "groups/trace_io.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>

#include <fmt/format.h>

#include "groups/policy_io.hpp"

namespace groups {
namespace {

nlohmann::json number_or_null(double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(); }

nlohmann::json vector_json(const std::vector<double>& v) {
  auto out = nlohmann::json::array();
  for (double x : v) out.push_back(number_or_null(x));
  return out;
}

}  // namespace

std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  return fmt::format("{}", x);
}

nlohmann::json iteration_to_json(const LearningTrace& trace, const IterationRecord& rec) {
  nlohmann::json j;
  j["method"] = trace.method;
  j["session_seed"] = trace.seed;
  j["iteration"] = rec.iteration;
  j["mean_policy_reward"] = number_or_null(rec.mean_policy_reward);
  j["eval_seed"] = rec.eval_seed;
  j["batch_rewards"] = vector_json(rec.batch_rewards);
  j["weights"] = vector_json(rec.weights);
  j["rollout_seeds"] = rec.rollout_seeds;
  j["elbo"] = vector_json(rec.elbo);
  j["beta"] = rec.beta;
  j["ess"] = rec.ess;
  j["uniform_weights"] = rec.uniform_weights;
  j["temperature_saturated"] = rec.temperature_saturated;
  j["fit_converged"] = rec.fit_converged;
  j["retries"] = rec.retries;
  j["executions"] = rec.executions;
  j["e_tau"] = vector_to_json(rec.expected_tau);
  j["e_alpha"] = matrix_to_json(rec.expected_alpha);
  j["policy"] = policy_to_json(rec.params);
  return j;
}

void write_trace_jsonl(std::ostream& out, const LearningTrace& trace) {
  nlohmann::json first;
  first["method"] = trace.method;
  first["session_seed"] = trace.seed;
  first["iteration"] = 0;
  first["mean_policy_reward"] = number_or_null(trace.initial_reward);
  first["eval_seed"] = trace.initial_eval_seed;
  first["executions"] = 0;
  first["policy"] = policy_to_json(trace.initial_params);
  out << first.dump() << '\n';
  for (const auto& rec : trace.iterations) out << iteration_to_json(trace, rec).dump() << '\n';
}

LearningTrace read_trace_jsonl(std::istream& in, const std::string& source) {
  LearningTrace trace;
  std::string line;
  int line_no = 0;
  bool have_initial = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      const int iteration = j.at("iteration").get<int>();
      const auto& r = j.at("mean_policy_reward");
      const double reward = r.is_null() ? std::nan("") : r.get<double>();
      PolicyParamsd params = policy_from_json(j.at("policy"));
      if (iteration == 0) {
        trace.method = j.value("method", "");
        trace.seed = j.value("session_seed", std::uint64_t{0});
        trace.initial_params = std::move(params);
        trace.initial_reward = reward;
        trace.initial_eval_seed = j.value("eval_seed", std::uint64_t{0});
        have_initial = true;
        continue;
      }
      if (!have_initial || iteration != static_cast<int>(trace.iterations.size()) + 1)
        throw std::runtime_error("iterations out of order");
      IterationRecord rec;
      rec.iteration = iteration;
      rec.mean_policy_reward = reward;
      rec.params = std::move(params);
      rec.eval_seed = j.value("eval_seed", std::uint64_t{0});
      rec.executions = j.value("executions", 0);
      rec.retries = j.value("retries", 0);
      if (j.contains("batch_rewards"))
        for (const auto& x : j["batch_rewards"]) rec.batch_rewards.push_back(x.is_null() ? std::nan("") : x.get<double>());
      if (j.contains("e_tau")) rec.expected_tau = vector_from_json(j["e_tau"]);
      trace.iterations.push_back(std::move(rec));
    } catch (const std::exception& e) {
      throw std::runtime_error(fmt::format("{}:{}: {}", source, line_no, e.what()));
    }
  }
  if (!have_initial) throw std::runtime_error(source + ": no iteration-0 record");
  return trace;
}

LearningTrace read_trace_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open trace " + path.string());
  return read_trace_jsonl(in, path.string());
}

std::string trace_csv_header(int num_groups, const RewardUnit& unit) {
  std::string h = "iteration,mean_policy_reward,batch_reward_mean,batch_reward_max,elbo_final";
  for (int m = 1; m <= num_groups; ++m) h += fmt::format(",e_tau_group{}", m);
  h += ",ess";
  if (!unit.identity()) h += ",mean_policy_reward_" + unit.label;
  return h;
}

void write_trace_csv(std::ostream& out, const LearningTrace& trace, const RewardUnit& unit) {
  const int G = static_cast<int>(trace.initial_params.tau.size());
  out << trace_csv_header(G, unit) << '\n';
  auto row = [&](int iteration, double reward, double bmean, double bmax, double elbo, const Eigen::VectorXd& tau,
                 double ess) {
    out << iteration << ',' << format_number(reward) << ',' << format_number(bmean) << ',' << format_number(bmax)
        << ',' << format_number(elbo);
    for (int m = 0; m < G; ++m) out << ',' << format_number(m < tau.size() ? tau(m) : std::nan(""));
    out << ',' << format_number(ess);
    if (!unit.identity()) out << ',' << format_number(reward * unit.scale);
    out << '\n';
  };
  const double nan = std::nan("");
  row(0, trace.initial_reward, nan, nan, nan, trace.initial_params.tau, nan);
  for (const auto& r : trace.iterations)
    row(r.iteration, r.mean_policy_reward, r.batch_reward_mean(), r.batch_reward_max(),
        r.elbo.empty() ? nan : r.elbo.back(), r.expected_tau, r.ess);
}

}  // namespace groups
