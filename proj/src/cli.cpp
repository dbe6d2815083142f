#include <iostream>

#include <CLI11.hpp>

#include "groups/harness.hpp"

namespace groups {
namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string calibration;
  std::string run_dir;
};

ExperimentConfig load_config(const Options& o) {
  auto c = ExperimentConfig::load(o.config);
  if (o.seed) c.master_seed = *o.seed;
  if (!o.out.empty()) c.output_dir = o.out;
  if (!o.calibration.empty()) c.calibration_path = o.calibration;
  c.validate();
  return c;
}

void expect(const ExperimentConfig& c, std::initializer_list<Experiment> allowed, const std::string& command) {
  for (auto e : allowed)
    if (c.experiment == e) return;
  throw ConfigError("'" + command + "' cannot run experiment '" + to_string(c.experiment) + "'");
}

void print_paths(const std::vector<std::filesystem::path>& paths) {
  for (const auto& p : paths) std::cout << p.string() << '\n';
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
  CLI::App app{"Group factor policy search: crawler experiments and synthetic benchmarks", "groups"};
  app.require_subcommand(1, 1);
  Options o;

  auto add_run_flags = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "experiment config (JSON)")->required();
    sub->add_option("--seed", o.seed, "master seed, overrides the config");
    sub->add_option("--out", o.out, "output directory, overrides the config");
    sub->add_option("--calibration", o.calibration, "calibration file, overrides the config");
  };
  auto* learn_cmd = app.add_subcommand("learn", "fin study or in-situ learning");
  add_run_flags(learn_cmd);
  auto* transfer_cmd = app.add_subcommand("transfer", "learn on one medium, evaluate on another");
  add_run_flags(transfer_cmd);
  auto* synthetic_cmd = app.add_subcommand("synthetic", "GrouPS against the baselines on the synthetic stubs");
  add_run_flags(synthetic_cmd);
  auto* render_cmd = app.add_subcommand("render", "SVG learning curves from a run directory");
  render_cmd->add_option("run_dir", o.run_dir, "output directory of an earlier run")->required();
  render_cmd->add_option("--out", o.out, "where to write the SVGs (default <run_dir>/plots)");
  auto* validate_cmd = app.add_subcommand("validate-config", "check a config and its calibration");
  validate_cmd->add_option("--config", o.config, "experiment config (JSON)")->required();
  validate_cmd->add_option("--calibration", o.calibration, "calibration file, overrides the config");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    if (*render_cmd) {
      const std::filesystem::path out = o.out.empty() ? std::filesystem::path(o.run_dir) / "plots" : std::filesystem::path(o.out);
      print_paths(render_run(o.run_dir, out));
      return 0;
    }
    const ExperimentConfig config = load_config(o);
    if (*validate_cmd) {
      config.calibration();
      std::cout << "config ok: " << o.config << '\n';
      return 0;
    }
    if (*learn_cmd) {
      expect(config, {Experiment::fin_study, Experiment::insitu}, "learn");
      print_paths(run_fin_study(config).outputs);
    } else if (*transfer_cmd) {
      expect(config, {Experiment::transfer}, "transfer");
      print_paths(run_transfer(config).outputs);
    } else if (*synthetic_cmd) {
      expect(config, {Experiment::synthetic}, "synthetic");
      print_paths(run_synthetic(config).outputs);
    }
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}

}  // namespace groups
