#include <algorithm>
#include <cctype>
#include <fstream>
#include <iterator>
#include <random>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <openssl/evp.h>

#include "groups/harness.hpp"

namespace groups {
namespace {

using nlohmann::json;

void check_keys(const json& j, const std::vector<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, value] : j.items())
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw ConfigError(fmt::format("{}: unknown key '{}'", where, key));
}

std::string path_of(const std::string& where, const std::string& key) {
  return where.empty() ? key : where + "." + key;
}

int get_int(const json& j, const std::string& key, int fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  const auto& v = j[key];
  if (!v.is_number_integer()) throw ConfigError(path_of(where, key) + ": expected an integer");
  return v.get<int>();
}

double get_double(const json& j, const std::string& key, double fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  const auto& v = j[key];
  if (!v.is_number()) throw ConfigError(path_of(where, key) + ": expected a number");
  return v.get<double>();
}

std::optional<double> get_optional(const json& j, const std::string& key, std::optional<double> fallback,
                                   const std::string& where) {
  if (!j.contains(key)) return fallback;
  if (j[key].is_null()) return std::nullopt;
  return get_double(j, key, 0.0, where);
}

std::string get_string(const json& j, const std::string& key, const std::string& fallback,
                       const std::string& where) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_string()) throw ConfigError(path_of(where, key) + ": expected a string");
  return j[key].get<std::string>();
}

std::vector<std::string> get_strings(const json& j, const std::string& key, std::vector<std::string> fallback,
                                     const std::string& where) {
  if (!j.contains(key)) return fallback;
  const auto& v = j[key];
  if (!v.is_array()) throw ConfigError(path_of(where, key) + ": expected an array of strings");
  std::vector<std::string> out;
  for (const auto& x : v) {
    if (!x.is_string()) throw ConfigError(path_of(where, key) + ": expected an array of strings");
    out.push_back(x.get<std::string>());
  }
  return out;
}

std::filesystem::path resolve(const std::filesystem::path& p, const std::filesystem::path& base) {
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return (base / p).lexically_normal();
}

HyperParams parse_learner(const json& j, HyperParams h) {
  const std::string w = "learner";
  check_keys(j, {"latent_dim", "rank", "a_tau", "b_tau", "a_alpha", "b_alpha", "reward_temperature",
                 "inner_max_iters", "inner_rel_tol", "tau_cap"},
             w);
  h.latent_dim = get_int(j, "latent_dim", h.latent_dim, w);
  h.rank = get_int(j, "rank", h.rank, w);
  h.a_tau = get_double(j, "a_tau", h.a_tau, w);
  h.b_tau = get_double(j, "b_tau", h.b_tau, w);
  h.a_alpha = get_double(j, "a_alpha", h.a_alpha, w);
  h.b_alpha = get_double(j, "b_alpha", h.b_alpha, w);
  h.reward_temperature = get_optional(j, "reward_temperature", h.reward_temperature, w);
  h.inner_max_iters = get_int(j, "inner_max_iters", h.inner_max_iters, w);
  h.inner_rel_tol = get_double(j, "inner_rel_tol", h.inner_rel_tol, w);
  h.tau_cap = get_double(j, "tau_cap", h.tau_cap, w);
  return h;
}

json learner_json(const HyperParams& h) {
  return {{"latent_dim", h.latent_dim},
          {"rank", h.rank},
          {"a_tau", h.a_tau},
          {"b_tau", h.b_tau},
          {"a_alpha", h.a_alpha},
          {"b_alpha", h.b_alpha},
          {"reward_temperature", h.reward_temperature ? json(*h.reward_temperature) : json()},
          {"inner_max_iters", h.inner_max_iters},
          {"inner_rel_tol", h.inner_rel_tol},
          {"tau_cap", h.tau_cap}};
}

void parse_quadratic(const json& j, SyntheticTask<QuadraticStub>& t) {
  const std::string w = "synthetic.quadratic";
  check_keys(j, {"action_dim", "num_groups", "num_basis", "optimum_scale", "init_tau", "init_w_scale", "iterations", "H"},
             w);
  auto& s = t.stub;
  s.action_dim = get_int(j, "action_dim", s.action_dim, w);
  s.num_groups = get_int(j, "num_groups", s.num_groups, w);
  s.num_basis = get_int(j, "num_basis", s.num_basis, w);
  s.optimum_scale = get_double(j, "optimum_scale", s.optimum_scale, w);
  s.init_tau = get_double(j, "init_tau", s.init_tau, w);
  s.init_w_scale = get_double(j, "init_w_scale", s.init_w_scale, w);
  t.iterations = get_int(j, "iterations", t.iterations, w);
  t.H = get_int(j, "H", t.H, w);
}

void parse_planted(const json& j, SyntheticTask<PlantedStub>& t) {
  const std::string w = "synthetic.planted";
  check_keys(j, {"action_dim", "num_groups", "num_basis", "slope", "curvature", "init_tau", "init_w_scale", "iterations", "H"},
             w);
  auto& s = t.stub;
  s.action_dim = get_int(j, "action_dim", s.action_dim, w);
  s.num_groups = get_int(j, "num_groups", s.num_groups, w);
  s.num_basis = get_int(j, "num_basis", s.num_basis, w);
  s.slope = get_double(j, "slope", s.slope, w);
  s.curvature = get_double(j, "curvature", s.curvature, w);
  s.init_tau = get_double(j, "init_tau", s.init_tau, w);
  s.init_w_scale = get_double(j, "init_w_scale", s.init_w_scale, w);
  t.iterations = get_int(j, "iterations", t.iterations, w);
  t.H = get_int(j, "H", t.H, w);
}

Experiment parse_experiment(const std::string& s) {
  if (s == "fin_study") return Experiment::fin_study;
  if (s == "transfer") return Experiment::transfer;
  if (s == "insitu") return Experiment::insitu;
  if (s == "synthetic") return Experiment::synthetic;
  throw ConfigError("experiment: expected fin_study, transfer, insitu or synthetic, got '" + s + "'");
}

// 1-based line and column of a 1-based byte offset.
std::pair<int, int> line_column(const std::string& text, std::size_t byte) {
  int line = 1, col = 1;
  for (std::size_t i = 0; i + 1 < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

}  // namespace

std::string to_string(Experiment e) {
  switch (e) {
    case Experiment::fin_study: return "fin_study";
    case Experiment::transfer: return "transfer";
    case Experiment::insitu: return "insitu";
    case Experiment::synthetic: return "synthetic";
  }
  return "?";
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys{
      "experiment", "fins",        "media",         "sessions",    "iterations", "H",    "T",
      "J",          "master_seed", "output_dir",    "calibration_path", "reward_scale", "reward_unit",
      "exploration", "heterogeneity", "jobs",       "learner",     "init",       "transfer", "synthetic"};
  return keys;
}

ExperimentConfig ExperimentConfig::from_json(const json& j, const std::filesystem::path& base_dir) {
  check_keys(j, config_keys(), "config");
  ExperimentConfig c;
  const std::string w;
  if (!j.contains("experiment")) throw ConfigError("experiment: required");
  c.experiment = parse_experiment(get_string(j, "experiment", "", w));
  c.fins = get_strings(j, "fins", c.fins, w);
  c.media = get_strings(j, "media", c.media, w);
  c.sessions = get_int(j, "sessions", c.sessions, w);
  c.iterations = get_int(j, "iterations", c.iterations, w);
  c.H = get_int(j, "H", c.H, w);
  c.T = get_int(j, "T", c.T, w);
  c.J = get_int(j, "J", c.J, w);
  if (j.contains("master_seed")) {
    if (!j["master_seed"].is_number_unsigned()) throw ConfigError("master_seed: expected a nonnegative integer");
    c.master_seed = j["master_seed"].get<std::uint64_t>();
  }
  c.output_dir = get_string(j, "output_dir", c.output_dir.string(), w);
  c.calibration_path = resolve(get_string(j, "calibration_path", "", w), base_dir);
  c.reward_unit.scale = get_double(j, "reward_scale", c.reward_unit.scale, w);
  c.reward_unit.label = get_string(j, "reward_unit", c.reward_unit.label, w);
  const std::string mode = get_string(j, "exploration", "per_rollout", w);
  if (mode == "per_rollout")
    c.exploration = ExplorationMode::per_rollout;
  else if (mode == "per_timestep")
    c.exploration = ExplorationMode::per_timestep;
  else
    throw ConfigError("exploration: expected per_rollout or per_timestep, got '" + mode + "'");
  c.heterogeneity = get_optional(j, "heterogeneity", c.heterogeneity, w);
  c.jobs = get_int(j, "jobs", c.jobs, w);
  if (j.contains("learner")) c.learner = parse_learner(j["learner"], c.learner);
  if (j.contains("init")) {
    check_keys(j["init"], {"tau", "w_scale"}, "init");
    c.init.tau = get_double(j["init"], "tau", c.init.tau, "init");
    c.init.w_scale = get_double(j["init"], "w_scale", c.init.w_scale, "init");
  }
  if (j.contains("transfer")) {
    const auto& t = j["transfer"];
    check_keys(t, {"source_media", "target_media", "eval_reps", "source_run"}, "transfer");
    c.transfer.source_media = get_string(t, "source_media", c.transfer.source_media, "transfer");
    c.transfer.target_media = get_string(t, "target_media", c.transfer.target_media, "transfer");
    c.transfer.eval_reps = get_int(t, "eval_reps", c.transfer.eval_reps, "transfer");
    c.transfer.source_run = get_string(t, "source_run", "", "transfer");
  }
  if (j.contains("synthetic")) {
    const auto& s = j["synthetic"];
    check_keys(s, {"seeds", "random_search_sigma", "quadratic", "planted"}, "synthetic");
    c.synthetic.seeds = get_int(s, "seeds", c.synthetic.seeds, "synthetic");
    c.synthetic.random_search_sigma = get_double(s, "random_search_sigma", c.synthetic.random_search_sigma, "synthetic");
    if (s.contains("quadratic")) parse_quadratic(s["quadratic"], c.synthetic.quadratic);
    if (s.contains("planted")) parse_planted(s["planted"], c.synthetic.planted);
  }
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    const auto [line, col] = line_column(text, e.byte);
    throw ConfigError(fmt::format("{}:{}:{}: malformed JSON: {}", path.string(), line, col, e.what()));
  }
  try {
    return from_json(j, path.parent_path());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

json ExperimentConfig::to_json() const {
  json j;
  j["experiment"] = to_string(experiment);
  j["fins"] = fins;
  j["media"] = media;
  j["sessions"] = sessions;
  j["iterations"] = iterations;
  j["H"] = H;
  j["T"] = T;
  j["J"] = J;
  j["master_seed"] = master_seed;
  j["output_dir"] = output_dir.string();
  j["calibration_path"] = calibration_path.string();
  j["reward_scale"] = reward_unit.scale;
  j["reward_unit"] = reward_unit.label;
  j["exploration"] = exploration == ExplorationMode::per_rollout ? "per_rollout" : "per_timestep";
  j["heterogeneity"] = heterogeneity ? json(*heterogeneity) : json();
  j["jobs"] = jobs;
  j["learner"] = learner_json(learner);
  j["init"] = {{"tau", init.tau}, {"w_scale", init.w_scale}};
  j["transfer"] = {{"source_media", transfer.source_media},
                   {"target_media", transfer.target_media},
                   {"eval_reps", transfer.eval_reps},
                   {"source_run", transfer.source_run.string()}};
  const auto& q = synthetic.quadratic;
  const auto& p = synthetic.planted;
  j["synthetic"] = {{"seeds", synthetic.seeds},
                    {"random_search_sigma", synthetic.random_search_sigma},
                    {"quadratic",
                     {{"action_dim", q.stub.action_dim},
                      {"num_groups", q.stub.num_groups},
                      {"num_basis", q.stub.num_basis},
                      {"optimum_scale", q.stub.optimum_scale},
                      {"init_tau", q.stub.init_tau},
                      {"init_w_scale", q.stub.init_w_scale},
                      {"iterations", q.iterations},
                      {"H", q.H}}},
                    {"planted",
                     {{"action_dim", p.stub.action_dim},
                      {"num_groups", p.stub.num_groups},
                      {"num_basis", p.stub.num_basis},
                      {"slope", p.stub.slope},
                      {"curvature", p.stub.curvature},
                      {"init_tau", p.stub.init_tau},
                      {"init_w_scale", p.stub.init_w_scale},
                      {"iterations", p.iterations},
                      {"H", p.H}}}};
  return j;
}

void ExperimentConfig::validate() const {
  if (sessions < 1) throw ConfigError("sessions must be >= 1");
  if (iterations < 1) throw ConfigError("iterations must be >= 1");
  if (H < 2) throw ConfigError("H must be >= 2");
  if (T < 2 || T % 2 != 0) throw ConfigError("T must be even and >= 2");
  if (J < 1) throw ConfigError("J must be >= 1");
  if (jobs < 0) throw ConfigError("jobs must be >= 0");
  if (!(reward_unit.scale > 0) || !std::isfinite(reward_unit.scale)) throw ConfigError("reward_scale must be positive");
  if (reward_unit.label.empty() ||
      !std::all_of(reward_unit.label.begin(), reward_unit.label.end(),
                   [](unsigned char ch) { return std::isalnum(ch) || ch == '_'; }))
    throw ConfigError("reward_unit must be a nonempty identifier");
  if (!reward_unit.identity() && reward_unit.label == "cm")
    throw ConfigError("reward_unit must name the scaled unit when reward_scale != 1");
  if (heterogeneity && !(*heterogeneity >= 0)) throw ConfigError("heterogeneity must be >= 0");
  if (!(init.tau > 0) || !(init.w_scale >= 0)) throw ConfigError("init: tau must be positive, w_scale >= 0");
  const bool robot = experiment != Experiment::synthetic;
  if (robot && fins.empty()) throw ConfigError("fins must be nonempty");
  if ((experiment == Experiment::fin_study || experiment == Experiment::insitu) && media.empty())
    throw ConfigError("media must be nonempty");
  if (std::set<std::string>(fins.begin(), fins.end()).size() != fins.size()) throw ConfigError("fins repeat");
  if (std::set<std::string>(media.begin(), media.end()).size() != media.size()) throw ConfigError("media repeat");
  if (transfer.eval_reps < 1) throw ConfigError("transfer.eval_reps must be >= 1");
  if (synthetic.seeds < 1) throw ConfigError("synthetic.seeds must be >= 1");
  if (!(synthetic.random_search_sigma >= 0)) throw ConfigError("synthetic.random_search_sigma must be >= 0");
  for (const auto* t : {&synthetic.quadratic.iterations, &synthetic.planted.iterations})
    if (*t < 1) throw ConfigError("synthetic iterations must be >= 1");
  for (const auto* h : {&synthetic.quadratic.H, &synthetic.planted.H})
    if (*h < 2) throw ConfigError("synthetic H must be >= 2");
  try {
    learner.validate(2);
    synthetic.quadratic.stub.validate();
    synthetic.planted.stub.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

Calibration ExperimentConfig::calibration() const {
  const auto path = calibration_path.empty() ? Calibration::shipped_path() : calibration_path;
  Calibration cal;
  try {
    cal = Calibration::load(path);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  std::vector<std::string> media_used = media;
  if (experiment == Experiment::transfer) media_used = {transfer.source_media, transfer.target_media};
  if (experiment != Experiment::synthetic) {
    for (const auto& f : fins)
      if (!cal.fins.count(f)) throw ConfigError("fin '" + f + "' is not in calibration " + path.string());
    for (const auto& m : media_used)
      if (!cal.media.count(m)) throw ConfigError("media '" + m + "' is not in calibration " + path.string());
  }
  return cal;
}

LearnConfig ExperimentConfig::learn_config() const {
  LearnConfig lc;
  lc.iterations = iterations;
  lc.H = H;
  lc.hyper = learner;
  lc.mode = exploration;
  return lc;
}

std::uint64_t ExperimentConfig::session_seed(int session) const {
  return derive_seed(master_seed, {static_cast<std::uint64_t>(session)});
}

std::string git_blob_sha1(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  const std::string body((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string header = fmt::format("blob {}", body.size());
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || !EVP_DigestInit_ex(ctx.get(), EVP_sha1(), nullptr) ||
      !EVP_DigestUpdate(ctx.get(), header.data(), header.size() + 1) ||
      !EVP_DigestUpdate(ctx.get(), body.data(), body.size()) || !EVP_DigestFinal_ex(ctx.get(), digest, &len))
    throw std::runtime_error("sha1 failed");
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

json RunManifest::to_json() const {
  return {{"config", config},
          {"calibration_path", calibration_path},
          {"calibration_sha1", calibration_sha1},
          {"session_seeds", session_seeds},
          {"tool_version", tool_version},
          {"started_at", started_at},
          {"wall_clock_seconds", wall_clock_seconds},
          {"outputs", outputs}};
}

PolicyParamsd crawler_initial_policy(const ExperimentConfig& config, int session) {
  auto p = PolicyParamsd::zeros(GroupStructure::crawler(), BasisConfig{config.T, config.J}, config.learner.latent_dim);
  Rng rng(derive_seed(config.session_seed(session), {0x1a17}));
  std::normal_distribution<double> n(0.0, 1.0);
  p.W = config.init.w_scale * standard_normal_matrix<double>(rng, p.action_dim(), p.latent_dim(), n);
  p.tau.setConstant(config.init.tau);
  return p;
}

CrawlerEnvironment make_crawler(const ExperimentConfig& config, const Calibration& cal, const std::string& media,
                                const std::string& fin) {
  CrawlerConfig cc{preset_media(media, cal), preset_fin(fin, cal), cal.geometry};
  if (config.heterogeneity) cc.media.heterogeneity = *config.heterogeneity;
  return CrawlerEnvironment(std::move(cc));
}

}  // namespace groups
