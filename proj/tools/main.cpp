// Command-line front end: simulate datasets, fit calibrations, localize,
// train fingerprint maps and emit evaluation reports.
//
// Exit codes: 0 success, 1 computational failure (solver/fit), 2
// configuration or input error.

#include "magloc/io.hpp"
#include "magloc/pipeline.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>

namespace {

using namespace magloc;

struct Cli {
  std::string scenario;
  std::string out = "out";
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string method;
  bool method_given = false;
  double train_frac = 0.3;
  double recal_frac = 0.1;
  double lambda = 0.01;
  int workers = 1;
  std::string kind = "lasso";
  bool cross_validate = false;
};

void add_common(CLI::App* cmd, Cli& cli) {
  cmd->add_option("--scenario", cli.scenario, "Scenario description file")
      ->required();
  cmd->add_option("--seed", cli.seed, "Run seed (defaults to the scenario's)")
      ->each([&cli](const std::string&) { cli.seed_given = true; });
  cmd->add_option("--out", cli.out, "Output directory");
  cmd->add_option("--method", cli.method,
                  "model | recalibrated | fingerprint | all")
      ->each([&cli](const std::string&) { cli.method_given = true; });
  cmd->add_option("--train-frac", cli.train_frac,
                  "Fingerprint training share of the dataset");
  cmd->add_option("--recal-frac", cli.recal_frac,
                  "Recalibration share of the dataset");
  cmd->add_option("--lambda", cli.lambda, "LASSO penalty");
  cmd->add_option("--workers", cli.workers, "Simulation worker threads");
  cmd->add_option("--kind", cli.kind, "Fingerprint map kind: lasso | poly3-lasso");
  cmd->add_flag("--cv", cli.cross_validate,
                "Pick lambda by 5-fold cross-validation");
}

PipelineOptions options_of(const ScenarioFile& file, const Cli& cli,
                           const std::string& default_method) {
  PipelineOptions flags;
  flags.seed = cli.seed;
  flags.method = cli.method_given ? cli.method : default_method;
  flags.train_frac = cli.train_frac;
  flags.recal_frac = cli.recal_frac;
  flags.lambda = cli.lambda;
  flags.cross_validate = cli.cross_validate;
  flags.kind = parse_map_kind(cli.kind);
  flags.workers = cli.workers;
  return resolve_options(file, flags, cli.seed_given);
}

std::string hex_hash(std::uint64_t h) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void print_methods(const PipelineResult& result) {
  std::cout << "config " << hex_hash(result.hash) << " seed "
            << result.options.seed << "\n";
  for (const auto& m : result.methods) {
    std::cout << "median[" << m.method << "] = " << format_double(m.median_error)
              << " m over " << m.solved << "/" << result.eval_count
              << " evaluation points";
    if (m.failed > 0) std::cout << " (" << m.failed << " unsolved)";
    std::cout << "\n";
  }
}

int cmd_simulate(const Cli& cli) {
  const ScenarioFile file = load_scenario(cli.scenario);
  const PipelineOptions opt = options_of(file, cli, "all");
  if (opt.workers < 1) throw InvalidArgumentError("workers must be >= 1");
  const Scenario& sc = file.scenario;
  const auto grid = generate_grid(sc.grid_rect, sc.grid_spacing, sc.grid_height);
  const Dataset dataset =
      generate_dataset(sc.env, grid, sc.id, opt.seed, opt.workers);
  std::filesystem::create_directories(cli.out);
  const std::string path =
      (std::filesystem::path(cli.out) / "dataset.jsonl").string();
  save_dataset(dataset, path, config_hash(file, opt));
  std::cout << "simulated " << dataset.cycles.size() << " points (seed "
            << opt.seed << ", config " << hex_hash(config_hash(file, opt))
            << ") -> " << path << "\n";
  return 0;
}

int cmd_calibrate(const Cli& cli) {
  const ScenarioFile file = load_scenario(cli.scenario);
  const PipelineOptions opt = options_of(file, cli, "model");
  const Scenario& sc = file.scenario;
  const Vec3 aim(0.5 * (sc.bounds.x0 + sc.bounds.x1),
                 0.5 * (sc.bounds.y0 + sc.bounds.y1), sc.grid_height);
  double max_radius = 0.0;
  for (const auto& tx : sc.env.transmitters) {
    for (const auto& coil : tx.pose.coils)
      max_radius = std::max(max_radius, coil.radius);
  }
  const double d_min = std::max(0.5, 3.5 * max_radius);
  double d_max = 2.0 * d_min;
  const double xs[2] = {sc.grid_rect.x0, sc.grid_rect.x1};
  const double ys[2] = {sc.grid_rect.y0, sc.grid_rect.y1};
  for (const auto& tx : sc.env.transmitters) {
    for (double cx : xs) {
      for (double cy : ys) {
        d_max = std::max(d_max,
                         (Vec3(cx, cy, sc.grid_height) - tx.pose.origin).norm());
      }
    }
  }
  const CalibrationSet cal = factory_calibration(sc.env, aim, d_min, d_max, 64);
  std::filesystem::create_directories(cli.out);
  const std::string path =
      (std::filesystem::path(cli.out) / "calibration_factory.json").string();
  save_calibration(cal, path, config_hash(file, opt), opt.seed);
  std::cout << "calibrated " << cal.transmitters.size()
            << " transmitters (seed " << opt.seed << ", config "
            << hex_hash(config_hash(file, opt)) << ") -> " << path << "\n";
  return 0;
}

int cmd_localize(const Cli& cli) {
  const ScenarioFile file = load_scenario(cli.scenario);
  const PipelineOptions opt = options_of(file, cli, "model");
  if (opt.method != "model" && opt.method != "recalibrated")
    throw InvalidArgumentError(
        "localize supports --method model or recalibrated; use the "
        "fingerprint subcommand for map-based positioning");
  const PipelineResult result = run_pipeline(file, opt);
  write_reports(result, cli.out);
  print_methods(result);
  return 0;
}

int cmd_fingerprint(const Cli& cli) {
  const ScenarioFile file = load_scenario(cli.scenario);
  PipelineOptions opt = options_of(file, cli, "fingerprint");
  opt.method = "fingerprint";
  const PipelineResult result = run_pipeline(file, opt);
  write_reports(result, cli.out);
  print_methods(result);
  return 0;
}

int cmd_evaluate(const Cli& cli) {
  const ScenarioFile file = load_scenario(cli.scenario);
  const PipelineOptions opt = options_of(file, cli, "all");
  const std::string dataset_path =
      (std::filesystem::path(cli.out) / "dataset.jsonl").string();
  Dataset dataset = load_dataset(dataset_path);
  const PipelineResult result =
      evaluate_dataset(file, opt, std::move(dataset));
  write_reports(result, cli.out, /*include_dataset=*/false);
  print_methods(result);
  return 0;
}

int cmd_pipeline(const Cli& cli) {
  const ScenarioFile file = load_scenario(cli.scenario);
  const PipelineOptions opt = options_of(file, cli, "all");
  const PipelineResult result = run_pipeline(file, opt);
  write_reports(result, cli.out);
  print_methods(result);
  return 0;
}

int dispatch(const std::string& name, const Cli& cli) {
  try {
    if (name == "simulate") return cmd_simulate(cli);
    if (name == "calibrate") return cmd_calibrate(cli);
    if (name == "localize") return cmd_localize(cli);
    if (name == "fingerprint") return cmd_fingerprint(cli);
    if (name == "evaluate") return cmd_evaluate(cli);
    return cmd_pipeline(cli);
  } catch (const SchemaError& e) {
    std::cerr << name << ": " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << name << ": " << e.what() << "\n";
    return 2;
  } catch (const InvalidArgumentError& e) {
    std::cerr << name << ": " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    // Convergence, insufficient data, geometry, singularity, domain:
    // computational failures.
    std::cerr << name << ": " << e.what() << "\n";
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Magneto-inductive indoor positioning toolkit"};
  app.require_subcommand(1);
  Cli cli;

  CLI::App* simulate =
      app.add_subcommand("simulate", "Generate a measurement dataset");
  CLI::App* calibrate =
      app.add_subcommand("calibrate", "Fit the factory calibration");
  CLI::App* localize =
      app.add_subcommand("localize", "Model-based localization of the "
                                     "evaluation split");
  CLI::App* fingerprint =
      app.add_subcommand("fingerprint", "Train and evaluate a fingerprint map");
  CLI::App* evaluate =
      app.add_subcommand("evaluate", "Evaluate methods on an existing dataset");
  CLI::App* pipeline =
      app.add_subcommand("pipeline", "Simulate, fit and compare all methods");
  for (CLI::App* cmd :
       {simulate, calibrate, localize, fingerprint, evaluate, pipeline}) {
    add_common(cmd, cli);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  return dispatch(app.get_subcommands().front()->get_name(), cli);
}
