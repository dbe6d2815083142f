#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <numeric>
#include <thread>

#include <fmt/chrono.h>
#include <fmt/format.h>

#include "groups/harness.hpp"
#include "groups/stubs.hpp"

namespace groups {
namespace {

namespace fs = std::filesystem;

// Runs f(0..n-1) on up to `jobs` threads. The first failure by index is
// rethrown once every job has finished.
template <typename F>
void parallel_for(int n, int jobs, F&& f) {
  if (jobs <= 0) jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  jobs = std::min(jobs, n);
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i = next++; i < n; i = next++) {
      try {
        f(i);
      } catch (...) {
        errors[static_cast<std::size_t>(i)] = std::current_exception();
      }
    }
  };
  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

class Outputs {
 public:
  explicit Outputs(fs::path root) : root_(std::move(root)) {}
  std::ofstream open(const fs::path& relative) {
    const fs::path p = root_ / relative;
    fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    paths_.push_back(p);
    return out;
  }
  const std::vector<fs::path>& paths() const { return paths_; }
  const fs::path& root() const { return root_; }

 private:
  fs::path root_;
  std::vector<fs::path> paths_;
};

struct Clock {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  std::string started_at = fmt::format("{:%Y-%m-%dT%H:%M:%SZ}", fmt::gmtime(std::time(nullptr)));
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

RunManifest make_manifest(const ExperimentConfig& config, int seeds, const Clock& clock) {
  RunManifest m;
  m.config = config.to_json();
  const auto cal = config.calibration_path.empty() ? Calibration::shipped_path() : config.calibration_path;
  m.calibration_path = cal.string();
  m.calibration_sha1 = git_blob_sha1(cal);
  for (int s = 0; s < seeds; ++s) m.session_seeds.push_back(config.session_seed(s));
  m.tool_version = GROUPS_VERSION;
  m.started_at = clock.started_at;
  return m;
}

void finish(RunResult& result, Outputs& out, RunManifest manifest, const Clock& clock) {
  for (const auto& p : out.paths()) manifest.outputs.push_back(p.string());
  manifest.wall_clock_seconds = clock.seconds();
  auto file = out.open("manifest.json");
  file << manifest.to_json().dump(2) << '\n';
  result.outputs = out.paths();
  result.manifest = std::move(manifest);
}

void write_session(Outputs& out, const fs::path& dir, int session, const LearningTrace& trace,
                   const RewardUnit& unit) {
  auto jsonl = out.open(dir / fmt::format("session_{}.jsonl", session));
  write_trace_jsonl(jsonl, trace);
  auto csv = out.open(dir / fmt::format("session_{}.csv", session));
  write_trace_csv(csv, trace, unit);
}

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string n2s(double x) { return format_number(x); }

const PolicyParamsd& policy_at(const LearningTrace& t, int iteration) {
  return iteration == 0 ? t.initial_params : t.iterations.at(static_cast<std::size_t>(iteration - 1)).params;
}

}  // namespace

SessionStats session_stats(const std::vector<LearningTrace>& sessions) {
  if (sessions.empty()) throw std::invalid_argument("session_stats: no sessions");
  const std::size_t n = sessions.front().iterations.size();
  SessionStats s;
  for (std::size_t i = 0; i <= n; ++i) {
    std::vector<double> r;
    for (const auto& t : sessions) {
      if (t.iterations.size() != n) throw std::invalid_argument("session_stats: sessions differ in length");
      r.push_back(i == 0 ? t.initial_reward : t.iterations[i - 1].mean_policy_reward);
    }
    s.mean.push_back(mean_of(r));
    s.std.push_back(sample_std(r));
  }
  return s;
}

int FinStudyResult::executions_per_fin(const std::string& media, const std::string& fin) const {
  int total = 0;
  for (const auto& t : traces.at(media).at(fin)) total += t.total_executions();
  return total;
}

FinStudyResult run_fin_study(const ExperimentConfig& config) {
  config.validate();
  if (config.experiment != Experiment::fin_study && config.experiment != Experiment::insitu)
    throw ConfigError("run_fin_study: experiment is " + to_string(config.experiment));
  const Clock clock;
  const Calibration cal = config.calibration();
  const LearnConfig lc = config.learn_config();
  const int F = static_cast<int>(config.fins.size()), S = config.sessions;
  const int jobs = static_cast<int>(config.media.size()) * F * S;

  std::vector<LearningTrace> traces(static_cast<std::size_t>(jobs));
  parallel_for(jobs, config.jobs, [&](int k) {
    const int s = k % S, f = (k / S) % F, m = k / (S * F);
    const auto env = make_crawler(config, cal, config.media[m], config.fins[f]);
    traces[k] = learn(env, crawler_initial_policy(config, s), lc, config.session_seed(s));
  });

  FinStudyResult result;
  Outputs out(config.output_dir);
  const auto& unit = config.reward_unit;
  for (std::size_t m = 0; m < config.media.size(); ++m) {
    const auto& media = config.media[m];
    auto summary = out.open(fs::path(media) / "summary.csv");
    auto final_csv = out.open(fs::path(media) / "final.csv");
    summary << "fin,iteration,mean_policy_reward_mean,mean_policy_reward_std,sessions";
    final_csv << "fin,final_mean,final_std,sessions,executions";
    if (!unit.identity()) {
      summary << fmt::format(",mean_{0},std_{0}", unit.label);
      final_csv << fmt::format(",final_mean_{0},final_std_{0}", unit.label);
    }
    summary << '\n';
    final_csv << '\n';
    for (int f = 0; f < F; ++f) {
      const auto& fin = config.fins[f];
      auto& sessions = result.traces[media][fin];
      for (int s = 0; s < S; ++s) {
        sessions.push_back(std::move(traces[(m * F + f) * S + s]));
        write_session(out, fs::path(media) / ("fin_" + fin), s, sessions.back(), unit);
      }
      const auto stats = session_stats(sessions);
      for (std::size_t i = 0; i < stats.mean.size(); ++i) {
        summary << fin << ',' << i << ',' << n2s(stats.mean[i]) << ',' << n2s(stats.std[i]) << ',' << S;
        if (!unit.identity()) summary << ',' << n2s(stats.mean[i] * unit.scale) << ',' << n2s(stats.std[i] * unit.scale);
        summary << '\n';
      }
      final_csv << fin << ',' << n2s(stats.mean.back()) << ',' << n2s(stats.std.back()) << ',' << S << ','
                << result.executions_per_fin(media, fin);
      if (!unit.identity())
        final_csv << ',' << n2s(stats.mean.back() * unit.scale) << ',' << n2s(stats.std.back() * unit.scale);
      final_csv << '\n';
    }
  }
  finish(result, out, make_manifest(config, S, clock), clock);
  return result;
}

TransferResult run_transfer(const ExperimentConfig& config) {
  config.validate();
  if (config.experiment != Experiment::transfer)
    throw ConfigError("run_transfer: experiment is " + to_string(config.experiment));
  const Clock clock;
  const Calibration cal = config.calibration();
  const LearnConfig lc = config.learn_config();
  const auto& P = config.transfer.source_media;
  const auto& Sm = config.transfer.target_media;
  const int F = static_cast<int>(config.fins.size()), S = config.sessions, N = config.iterations;
  const int reps = config.transfer.eval_reps;
  const fs::path& source_run = config.transfer.source_run;

  if (!source_run.empty()) {
    if (!fs::is_directory(source_run)) throw std::runtime_error("source run not found: " + source_run.string());
    for (const auto& fin : config.fins)
      for (int s = 0; s < S; ++s) {
        const auto p = source_run / P / ("fin_" + fin) / fmt::format("session_{}.jsonl", s);
        if (!fs::exists(p)) throw std::runtime_error("source run is missing trace " + p.string());
      }
  }

  const int jobs = F * S;
  std::vector<LearningTrace> source(jobs), target(jobs);
  std::vector<std::vector<TransferRow>> rows(jobs);
  parallel_for(jobs, config.jobs, [&](int k) {
    const int s = k % S, f = k / S;
    const auto& fin = config.fins[f];
    const auto env_p = make_crawler(config, cal, P, fin);
    const auto env_s = make_crawler(config, cal, Sm, fin);
    const auto init = crawler_initial_policy(config, s);
    const auto seed = config.session_seed(s);
    if (source_run.empty()) {
      source[k] = learn(env_p, init, lc, seed);
    } else {
      const auto p = source_run / P / ("fin_" + fin) / fmt::format("session_{}.jsonl", s);
      source[k] = read_trace_jsonl(p);
      if (static_cast<int>(source[k].iterations.size()) < N)
        throw std::runtime_error(fmt::format("{}: {} iterations, need {}", p.string(), source[k].iterations.size(), N));
      if (!source[k].initial_params.M.isApprox(init.M, 1e-12) || !source[k].initial_params.W.isApprox(init.W, 1e-12) ||
          source[k].initial_params.tau != init.tau)
        throw std::runtime_error(p.string() + ": initial policy differs from this config's (master_seed or init)");
    }
    target[k] = learn(env_s, init, lc, seed);
    for (int i = 0; i <= N; ++i) {
      const auto src = PolicyExecutor::mean_policy(policy_at(source[k], i));
      const auto tgt = PolicyExecutor::mean_policy(policy_at(target[k], i));
      TransferRow row{fin, s, i, 0, 0, 0};
      for (int r = 0; r < reps; ++r) {
        const auto e = derive_seed(seed, {0x7e57, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(r)});
        row.source_on_source += env_p.evaluate(src, e) / reps;
        row.source_on_target += env_s.evaluate(src, e) / reps;
        row.target_on_target += env_s.evaluate(tgt, e) / reps;
      }
      rows[k].push_back(row);
    }
  });

  TransferResult result;
  Outputs out(config.output_dir);
  const auto& unit = config.reward_unit;
  const char* cols[] = {"learned_source_eval_source", "learned_source_eval_target", "learned_target_eval_target"};
  auto csv = out.open("transfer.csv");
  csv << "fin,session,iteration," << cols[0] << ',' << cols[1] << ',' << cols[2];
  if (!unit.identity())
    for (const char* c : cols) csv << ',' << c << '_' << unit.label;
  csv << '\n';
  for (const auto& block : rows)
    for (const auto& r : block) {
      csv << r.fin << ',' << r.session << ',' << r.iteration << ',' << n2s(r.source_on_source) << ','
          << n2s(r.source_on_target) << ',' << n2s(r.target_on_target);
      if (!unit.identity())
        for (double v : {r.source_on_source, r.source_on_target, r.target_on_target}) csv << ',' << n2s(v * unit.scale);
      csv << '\n';
      result.rows.push_back(r);
    }

  auto summary = out.open("transfer_summary.csv");
  summary << "fin,iteration";
  for (const char* c : cols) summary << fmt::format(",{0}_median,{0}_mean,{0}_std", c);
  summary << '\n';
  for (int f = 0; f < F; ++f)
    for (int i = 0; i <= N; ++i) {
      std::vector<double> v[3];
      for (int s = 0; s < S; ++s) {
        const auto& r = rows[f * S + s][i];
        v[0].push_back(r.source_on_source);
        v[1].push_back(r.source_on_target);
        v[2].push_back(r.target_on_target);
      }
      summary << config.fins[f] << ',' << i;
      for (auto& c : v) summary << ',' << n2s(median_of(c)) << ',' << n2s(mean_of(c)) << ',' << n2s(sample_std(c));
      summary << '\n';
    }

  for (int f = 0; f < F; ++f)
    for (int s = 0; s < S; ++s) {
      if (source_run.empty() && P != Sm)
        write_session(out, fs::path(P) / ("fin_" + config.fins[f]), s, source[f * S + s], unit);
      write_session(out, fs::path(Sm) / ("fin_" + config.fins[f]), s, target[f * S + s], unit);
    }
  finish(result, out, make_manifest(config, S, clock), clock);
  return result;
}

SyntheticResult run_synthetic(const ExperimentConfig& config) {
  config.validate();
  if (config.experiment != Experiment::synthetic)
    throw ConfigError("run_synthetic: experiment is " + to_string(config.experiment));
  const Clock clock;
  const auto& syn = config.synthetic;
  const int n = syn.seeds;
  const char* stubs[] = {"quadratic", "planted"};
  const char* methods[] = {"groups", "diagonal", "random_search"};

  // One job per (stub, seed); each produces the rows of all three methods.
  std::vector<std::vector<SyntheticRow>> rows(2 * static_cast<std::size_t>(n));
  parallel_for(2 * n, config.jobs, [&](int k) {
    const int stub = k / n, s = k % n;
    const auto seed = config.session_seed(s);
    LearnConfig lc = config.learn_config();
    const Environment* env = nullptr;
    PolicyParamsd init;
    Eigen::VectorXd direction;
    QuadraticProblem q;
    PlantedProblem p;
    if (stub == 0) {
      q = make_quadratic(syn.quadratic.stub, config.learner.latent_dim, seed);
      env = q.env.get();
      init = q.init;
      lc.iterations = syn.quadratic.iterations;
      lc.H = syn.quadratic.H;
    } else {
      p = make_planted(syn.planted.stub, config.learner.latent_dim, seed);
      env = p.env.get();
      init = p.init;
      direction = p.direction();
      lc.iterations = syn.planted.iterations;
      lc.H = syn.planted.H;
    }
    const LearningTrace traces[] = {learn(*env, init, lc, seed), diagonal_gaussian_ps(*env, init, lc, seed),
                                    random_search(*env, init, {lc.iterations, lc.H, syn.random_search_sigma}, seed)};
    for (int m = 0; m < 3; ++m) {
      const auto& t = traces[m];
      for (int i = 0; i <= lc.iterations; ++i) {
        SyntheticRow row{stubs[stub], seed, methods[m], i, 0, 0, 0, std::nan("")};
        if (i == 0) {
          row.mean_policy_reward = t.initial_reward;
          row.batch_reward_max = std::nan("");
        } else {
          const auto& it = t.iterations[i - 1];
          row.mean_policy_reward = it.mean_policy_reward;
          row.batch_reward_max = it.batch_reward_max();
          row.executions = it.executions;
        }
        const auto& W = policy_at(t, i).W;
        if (m == 0 && direction.size() > 0 && W.cols() > 0)
          row.angle_deg = largest_principal_angle_deg(direction, dominant_subspace(W, 1));
        rows[k].push_back(row);
      }
    }
  });

  SyntheticResult result;
  Outputs out(config.output_dir);
  auto csv = out.open("synthetic.csv");
  csv << "stub,seed,method,iteration,mean_policy_reward,batch_reward_max,executions,subspace_angle_deg\n";
  for (const auto& block : rows)
    for (const auto& r : block) {
      csv << r.stub << ',' << r.seed << ',' << r.method << ',' << r.iteration << ',' << n2s(r.mean_policy_reward) << ','
          << n2s(r.batch_reward_max) << ',' << r.executions << ',' << n2s(r.angle_deg) << '\n';
      result.rows.push_back(r);
    }

  auto summary = out.open("synthetic_summary.csv");
  summary << "stub,method,final_mean,final_median,total_executions,wins_over_diagonal,seeds,median_final_angle_deg\n";
  for (int stub = 0; stub < 2; ++stub) {
    std::map<std::string, std::vector<double>> finals, angles;
    std::map<std::string, int> executions;
    for (int s = 0; s < n; ++s)
      for (const auto& r : rows[stub * n + s]) {
        executions[r.method] += r.executions;
        if (r.iteration == (stub == 0 ? syn.quadratic.iterations : syn.planted.iterations)) {
          finals[r.method].push_back(r.mean_policy_reward);
          angles[r.method].push_back(r.angle_deg);
        }
      }
    for (const char* m : methods) {
      int wins = 0;
      for (int s = 0; s < n; ++s) wins += finals[m][s] > finals["diagonal"][s];
      const bool has_angle = !std::isnan(angles[m].front());
      summary << stubs[stub] << ',' << m << ',' << n2s(mean_of(finals[m])) << ',' << n2s(median_of(finals[m])) << ','
              << executions[m] << ',' << wins << ',' << n << ','
              << n2s(has_angle ? median_of(angles[m]) : std::nan("")) << '\n';
    }
  }
  finish(result, out, make_manifest(config, n, clock), clock);
  return result;
}

}  // namespace groups
