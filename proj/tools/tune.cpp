// Developer utility for calibrating scenario noise and distorter strengths:
// prints the range-error band profile, pipeline medians and regressor
// comparisons for a scenario so parameter choices can be frozen.

#include "magloc/calibration.hpp"
#include "magloc/environment.hpp"
#include "magloc/evaluation.hpp"
#include "magloc/fingerprint.hpp"
#include "magloc/io.hpp"
#include "magloc/localization.hpp"
#include "magloc/pipeline.hpp"
#include "magloc/rng.hpp"
#include "magloc/signal_chain.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

using namespace magloc;

namespace {

struct Args {
  std::string scenario;
  double rms = -1.0;          // <0 keeps the scenario's value
  double scale_alpha = 1.0;   // multiplies every distorter polarizability
  std::uint64_t seed = 1;
  int train_n = 90;
  double lambda = 0.01;
};

ScenarioFile load_patched(const Args& args) {
  ScenarioFile file = load_scenario(args.scenario);
  if (args.rms >= 0.0) file.scenario.env.chain.noise.rms = args.rms;
  for (auto& d : file.scenario.env.distorters) d.polarizability *= args.scale_alpha;
  return file;
}

CalibrationSet calibrate(const Scenario& sc) {
  const Vec3 aim(0.5 * (sc.bounds.x0 + sc.bounds.x1),
                 0.5 * (sc.bounds.y0 + sc.bounds.y1), sc.grid_height);
  double d_max = 1.0;
  const double xs[2] = {sc.grid_rect.x0, sc.grid_rect.x1};
  const double ys[2] = {sc.grid_rect.y0, sc.grid_rect.y1};
  for (const auto& tx : sc.env.transmitters) {
    for (double cx : xs)
      for (double cy : ys)
        d_max = std::max(d_max,
                         (Vec3(cx, cy, sc.grid_height) - tx.pose.origin).norm());
  }
  return factory_calibration(sc.env, aim, 0.5, d_max, 64);
}

int cmd_reference(const Args& args) {
  const ScenarioFile file = load_patched(args);
  const Scenario& sc = file.scenario;
  const auto grid = generate_grid(sc.grid_rect, sc.grid_spacing, sc.grid_height);
  const Dataset data = generate_dataset(sc.env, grid, sc.id, args.seed, 4);
  const CalibrationSet cal = calibrate(sc);
  const double floor_mag = floor_magnitude(sc.env.chain, sc.env.excitation_freq);
  const double rail = channel_floor(floor_mag, kCombinedChannel) * (1.0 + 1e-6);

  std::vector<std::pair<double, double>> samples;
  double min_mag_to8 = 1e9;
  int railed_to8 = 0;
  for (const auto& cycle : data.cycles) {
    for (std::size_t t = 0; t < cycle.transmitters.size(); ++t) {
      const double m =
          channel_magnitude(cycle.transmitters[t].magnitudes, kCombinedChannel);
      const double true_d =
          (*cycle.true_position - sc.env.transmitters[t].pose.origin).norm();
      if (true_d <= 8.0) {
        min_mag_to8 = std::min(min_mag_to8, m);
        if (m <= rail) ++railed_to8;
      }
      if (m <= rail) continue;
      samples.emplace_back(true_d,
                           magnitude_to_distance(cal.transmitters[t].combined, m));
    }
  }
  const auto report = rmse_by_interval(samples);
  std::printf("rms=%g scale=%g: bands", sc.env.chain.noise.rms, args.scale_alpha);
  for (const auto& b : report.bands) {
    std::printf("  [%g,%g): %.4f (n=%d)", b.band.low, b.band.high, b.rmse, b.count);
  }
  std::printf("\n  min combined magnitude (d<=8): %.3g (floor %.3g, railed %d)\n",
              min_mag_to8, rail, railed_to8);

  // Probes at exactly 8 m from the transmitter, in the receiver plane.
  const auto& tx = sc.env.transmitters[0];
  double worst = 0.0;
  for (int k = 0; k < 16; ++k) {
    const double angle = 0.05 + 0.085 * k;  // stay inside the quarter-plane
    const Vec3 p = tx.pose.origin + 8.0 * Vec3(std::sin(angle), std::cos(angle), 0.0);
    ReceiverPose rx = sc.env.receiver;
    rx.origin = p;
    Rng rng = Rng::stream(args.seed + 1000, static_cast<std::uint64_t>(k));
    const MeasurementCycle cycle = run_cycle(sc.env, rx, rng);
    const double m =
        channel_magnitude(cycle.transmitters[0].magnitudes, kCombinedChannel);
    if (m <= rail) {
      std::printf("  8m probe %d RAILED\n", k);
      continue;
    }
    const double est = magnitude_to_distance(cal.transmitters[0].combined, m);
    worst = std::max(worst, std::abs(est - 8.0));
  }
  std::printf("  worst |err| at 8 m over 16 probes: %.3f\n", worst);
  return 0;
}

int cmd_pipeline_medians(const Args& args) {
  const ScenarioFile file = load_patched(args);
  PipelineOptions flags;
  flags.seed = args.seed;
  const PipelineOptions opt = resolve_options(file, flags, true);
  const PipelineResult result = run_pipeline(file, opt);
  std::printf("rms=%g scale=%g eval=%zu\n", file.scenario.env.chain.noise.rms,
              args.scale_alpha, result.eval_count);
  for (const auto& m : result.methods) {
    std::printf("  median[%s] = %.4f m (solved %zu, failed %zu)\n",
                m.method.c_str(), m.median_error, m.solved, m.failed);
  }
  return 0;
}

int cmd_crossover(const Args& args) {
  const ScenarioFile file = load_patched(args);
  const Scenario& sc = file.scenario;
  const auto grid = generate_grid(sc.grid_rect, sc.grid_spacing, sc.grid_height);
  const Dataset data = generate_dataset(sc.env, grid, sc.id, args.seed, 4);
  const double frac =
      (static_cast<double>(args.train_n) + 0.5) / static_cast<double>(data.cycles.size());
  BuildOptions opt;
  opt.lambda = args.lambda;
  const FingerprintModel lasso = build_map(data, frac, MapKind::kLasso, args.seed, opt);
  const FingerprintModel poly3 =
      build_map(data, frac, MapKind::kPoly3Lasso, args.seed, opt);
  std::printf(
      "n=%zu train=%d lambda=%g: lasso held-out median %.4f, poly3 %.4f -> %s\n",
      data.cycles.size(), args.train_n, args.lambda, lasso.held_out_median,
      poly3.held_out_median,
      lasso.held_out_median < poly3.held_out_median ? "lasso wins" : "poly3 wins");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Scenario tuning probes"};
  app.require_subcommand(1);
  Args args;

  CLI::App* reference = app.add_subcommand("reference", "Band RMSE profile");
  CLI::App* medians = app.add_subcommand("medians", "Pipeline method medians");
  CLI::App* crossover = app.add_subcommand("crossover", "Regressor comparison");
  for (CLI::App* cmd : {reference, medians, crossover}) {
    cmd->add_option("--scenario", args.scenario)->required();
    cmd->add_option("--rms", args.rms);
    cmd->add_option("--scale", args.scale_alpha);
    cmd->add_option("--seed", args.seed);
  }
  crossover->add_option("--train-n", args.train_n);
  crossover->add_option("--lambda", args.lambda);

  CLI11_PARSE(app, argc, argv);
  try {
    if (app.got_subcommand(reference)) return cmd_reference(args);
    if (app.got_subcommand(medians)) return cmd_pipeline_medians(args);
    return cmd_crossover(args);
  } catch (const std::exception& e) {
    std::cerr << "tune: " << e.what() << "\n";
    return 1;
  }
}
