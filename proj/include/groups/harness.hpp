#pragma once

// Experiment protocols: fin study, in-situ learning, transfer between media
// and the synthetic benchmark. Every run writes CSVs, per-session JSON-lines
// traces and a manifest under ExperimentConfig::output_dir.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "groups/baselines.hpp"
#include "groups/crawler.hpp"
#include "groups/learner.hpp"
#include "groups/synthetic.hpp"
#include "groups/trace_io.hpp"

namespace groups {

/// Invalid or unreadable experiment configuration. Maps to exit code 1.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Experiment { fin_study, transfer, insitu, synthetic };

std::string to_string(Experiment e);

struct CrawlerInit {
  double tau = 25.0;     // initial precision of every group
  double w_scale = 0.15;  // W0 entries ~ N(0, w_scale^2), drawn per session
};

struct TransferSettings {
  std::string source_media = "poppy";
  std::string target_media = "sand_day1";
  int eval_reps = 5;
  // Directory of an earlier `learn` run on source_media. Empty: learn the
  // source policies as part of the transfer run.
  std::filesystem::path source_run;
};

template <typename Stub>
struct SyntheticTask {
  Stub stub;
  int iterations = 10;
  int H = 20;
};

struct SyntheticSettings {
  int seeds = 20;
  double random_search_sigma = 0.2;
  SyntheticTask<QuadraticStub> quadratic{};
  SyntheticTask<PlantedStub> planted{PlantedStub{}, 20, 100};
};

struct ExperimentConfig {
  Experiment experiment = Experiment::fin_study;
  std::vector<std::string> fins{"A", "B", "C", "D"};
  std::vector<std::string> media{"poppy"};
  int sessions = 5;
  int iterations = 10;
  int H = 20;
  int T = 20;
  int J = 10;
  std::uint64_t master_seed = 0;
  std::filesystem::path output_dir = "runs";
  std::filesystem::path calibration_path;  // empty: shipped calibration
  RewardUnit reward_unit;
  ExplorationMode exploration = ExplorationMode::per_rollout;
  std::optional<double> heterogeneity;  // overrides every media preset
  int jobs = 0;                         // 0: hardware concurrency
  HyperParams learner;
  CrawlerInit init;
  TransferSettings transfer;
  SyntheticSettings synthetic;

  /// Paths inside `j` are resolved against `base_dir`. Unknown keys,
  /// wrong types and out-of-range values throw ConfigError.
  static ExperimentConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  static ExperimentConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
  void validate() const;

  Calibration calibration() const;
  LearnConfig learn_config() const;
  std::uint64_t session_seed(int session) const;
};

/// Top-level keys accepted by ExperimentConfig::from_json.
const std::vector<std::string>& config_keys();

/// Git blob hash ("blob <size>\0" + contents) as 40 hex digits.
std::string git_blob_sha1(const std::filesystem::path& path);

struct RunManifest {
  nlohmann::json config;
  std::string calibration_path;
  std::string calibration_sha1;
  std::vector<std::uint64_t> session_seeds;
  std::string tool_version;
  std::string started_at;  // UTC, ISO 8601
  double wall_clock_seconds = 0.0;
  std::vector<std::string> outputs;

  nlohmann::json to_json() const;
};

/// M0 = 0, W0 drawn from the session seed, every tau = init.tau. Shared by all
/// fins and media of a session.
PolicyParamsd crawler_initial_policy(const ExperimentConfig& config, int session);
CrawlerEnvironment make_crawler(const ExperimentConfig& config, const Calibration& cal, const std::string& media,
                                const std::string& fin);

struct SessionStats {
  std::vector<double> mean, std;  // per iteration 0..N across sessions
};
/// Mean and sample standard deviation (0 for one session) of the mean-policy
/// reward at every iteration.
SessionStats session_stats(const std::vector<LearningTrace>& sessions);

struct RunResult {
  std::vector<std::filesystem::path> outputs;
  RunManifest manifest;
};

struct FinStudyResult : RunResult {
  // media -> fin -> one trace per session
  std::map<std::string, std::map<std::string, std::vector<LearningTrace>>> traces;
  int executions_per_fin(const std::string& media, const std::string& fin) const;
};

/// Used for both fin_study and insitu: learns every media x fin x session.
FinStudyResult run_fin_study(const ExperimentConfig& config);

struct TransferRow {
  std::string fin;
  int session = 0;
  int iteration = 0;
  double source_on_source = 0, source_on_target = 0, target_on_target = 0;
};

struct TransferResult : RunResult {
  std::vector<TransferRow> rows;
};

TransferResult run_transfer(const ExperimentConfig& config);

struct SyntheticRow {
  std::string stub;
  std::uint64_t seed = 0;
  std::string method;
  int iteration = 0;
  double mean_policy_reward = 0, batch_reward_max = 0;
  int executions = 0;
  double angle_deg = 0;  // NaN where no latent subspace exists
};

struct SyntheticResult : RunResult {
  std::vector<SyntheticRow> rows;
};

SyntheticResult run_synthetic(const ExperimentConfig& config);

struct CurveSeries {
  std::string label;
  std::vector<std::filesystem::path> session_csvs;  // trace summary CSVs
};

/// Mean and sample std of `column` across the CSVs, one entry per iteration.
/// All files must share the same iteration column.
SessionStats curve_stats(const std::vector<std::filesystem::path>& csvs,
                         const std::string& column = "mean_policy_reward");

/// One SVG with a mean line and a mean +- std band per series.
void render_curves(const std::vector<CurveSeries>& series, const std::filesystem::path& out,
                   const std::string& title = "");

/// Renders one SVG per comparison found in a run directory: every
/// <media>/ directory holding fin_<X>/session_*.csv, and transfer.csv.
std::vector<std::filesystem::path> render_run(const std::filesystem::path& run_dir,
                                              const std::filesystem::path& out_dir);

int cli_main(int argc, const char* const* argv);

}  // namespace groups
