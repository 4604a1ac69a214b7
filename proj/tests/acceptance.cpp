// Acceptance gate: ten release criteria, each printed as one PASS/FAIL line
// with the measured value, the required tolerance and the elapsed time.
// Exits with the number of failed criteria.

#include "magloc/calibration.hpp"
#include "magloc/environment.hpp"
#include "magloc/evaluation.hpp"
#include "magloc/field_model.hpp"
#include "magloc/fingerprint.hpp"
#include "magloc/io.hpp"
#include "magloc/localization.hpp"
#include "magloc/pipeline.hpp"
#include "magloc/rng.hpp"
#include "magloc/signal_chain.hpp"

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <iterator>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

using namespace magloc;

namespace {

std::string scenario_path(const std::string& name) {
  return (std::filesystem::path(MAGLOC_SCENARIO_DIR) / name).string();
}

std::string fmt(const char* format, ...) {
  char buf[512];
  va_list args;
  va_start(args, format);
  std::vsnprintf(buf, sizeof(buf), format, args);
  va_end(args);
  return buf;
}

double ls_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Results shared between criteria so the expensive simulations run once.
struct Cache {
  std::optional<PipelineResult> industrial;

  struct ReferenceProbe {
    IntervalReport report;
    double min_mag_to8 = std::numeric_limits<double>::infinity();
    int railed_to8 = 0;
    double worst_err_8m = 0.0;
    int railed_probes = 0;
  };
  std::optional<ReferenceProbe> reference;

  const PipelineResult& industrial_result() {
    if (!industrial) {
      const ScenarioFile file = load_scenario(scenario_path("industrial.json"));
      PipelineOptions opt = resolve_options(file, PipelineOptions{}, false);
      opt.workers = 4;
      industrial = run_pipeline(file, opt);
    }
    return *industrial;
  }

  // Single-transmitter sweep: per-point distance estimates from the factory
  // calibration, bucketed by true range, plus dedicated probes at 8 m.
  const ReferenceProbe& reference_probe() {
    if (reference) return *reference;
    const ScenarioFile file = load_scenario(scenario_path("reference.json"));
    const Scenario& sc = file.scenario;
    const auto grid = generate_grid(sc.grid_rect, sc.grid_spacing, sc.grid_height);
    const Dataset data = generate_dataset(sc.env, grid, sc.id, sc.seed, 4);

    const Vec3 aim(0.5 * (sc.bounds.x0 + sc.bounds.x1),
                   0.5 * (sc.bounds.y0 + sc.bounds.y1), sc.grid_height);
    double d_max = 1.0;
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
    const CalibrationSet cal = factory_calibration(sc.env, aim, 0.5, d_max, 64);
    const double floor_mag = floor_magnitude(sc.env.chain, sc.env.excitation_freq);
    const double rail = channel_floor(floor_mag, kCombinedChannel) * (1.0 + 1e-6);

    ReferenceProbe probe;
    std::vector<std::pair<double, double>> samples;
    for (const auto& cycle : data.cycles) {
      for (std::size_t t = 0; t < cycle.transmitters.size(); ++t) {
        const double m =
            channel_magnitude(cycle.transmitters[t].magnitudes, kCombinedChannel);
        const double true_d =
            (*cycle.true_position - sc.env.transmitters[t].pose.origin).norm();
        if (true_d <= 8.0) {
          probe.min_mag_to8 = std::min(probe.min_mag_to8, m);
          if (m <= rail) ++probe.railed_to8;
        }
        if (m <= rail) continue;
        samples.emplace_back(true_d,
                             magnitude_to_distance(cal.transmitters[t].combined, m));
      }
    }
    probe.report = rmse_by_interval(samples);

    const auto& tx = sc.env.transmitters[0];
    for (int k = 0; k < 16; ++k) {
      const double angle = 0.05 + 0.085 * k;  // stay inside the quarter-plane
      const Vec3 p =
          tx.pose.origin + 8.0 * Vec3(std::sin(angle), std::cos(angle), 0.0);
      ReceiverPose rx = sc.env.receiver;
      rx.origin = p;
      Rng rng = Rng::stream(sc.seed + 1000, static_cast<std::uint64_t>(k));
      const MeasurementCycle cycle = run_cycle(sc.env, rx, rng);
      const double m =
          channel_magnitude(cycle.transmitters[0].magnitudes, kCombinedChannel);
      if (m <= rail) {
        ++probe.railed_probes;
        continue;
      }
      const double est = magnitude_to_distance(cal.transmitters[0].combined, m);
      probe.worst_err_8m = std::max(probe.worst_err_8m, std::abs(est - 8.0));
    }
    reference = std::move(probe);
    return *reference;
  }
};

struct Verdict {
  bool pass = false;
  std::string detail;
};

// 1. On-axis field magnitude falls as the inverse cube of distance:
//    least-squares log-log slope over z in [5a, 100a] within -3 +/- 0.01.
Verdict criterion_slope(Cache&) {
  CoilSpec coil;
  coil.turns = 100;
  coil.radius = 0.1;
  coil.current = 1.0;
  std::vector<double> lx, ly;
  const double lo = 5.0 * coil.radius, hi = 100.0 * coil.radius;
  for (int k = 0; k < 50; ++k) {
    const double z = lo * std::pow(hi / lo, k / 49.0);
    lx.push_back(std::log(z));
    ly.push_back(std::log(on_axis_field(coil, z)));
  }
  const double slope = ls_slope(lx, ly);
  return {std::abs(slope + 3.0) <= 0.01,
          fmt("log-log slope %.4f, required -3 +/- 0.01", slope)};
}

// 2. The magnitude-to-distance transfer round-trips: noiseless samples from
//    (a, b) = (2, 3) refit to 1e-6 relative, as do 1000 random pairs.
Verdict criterion_calibration(Cache&) {
  auto samples_from = [](double a, double b, const std::vector<double>& ds) {
    std::vector<CalibrationSample> s;
    for (double d : ds) s.push_back({std::pow(d, b) / a, d});
    return s;
  };
  auto rel_ok = [](const AxisCalibration& cal, double a, double b) {
    return std::abs(cal.scale - a) / a < 1e-6 &&
           std::abs(cal.exponent - b) / b < 1e-6;
  };

  const AxisCalibration fixed =
      fit_axis(samples_from(2.0, 3.0, {0.5, 1.0, 2.0, 4.0, 8.0}));
  if (!rel_ok(fixed, 2.0, 3.0)) {
    return {false, fmt("(2, 3) refit as (%.8f, %.8f), tolerance 1e-6 relative",
                       fixed.scale, fixed.exponent)};
  }

  Rng rng(99);
  int failures = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const double a = std::exp(rng.uniform(std::log(0.1), std::log(10.0)));
    const double b = rng.uniform(0.5, 6.0);
    std::vector<double> ds;
    for (int k = 0; k < 8; ++k) ds.push_back(rng.uniform(0.3, 10.0));
    ds.push_back(0.25);
    ds.push_back(12.0);  // guarantee spread
    if (!rel_ok(fit_axis(samples_from(a, b, ds)), a, b)) ++failures;
  }
  return {failures == 0,
          fmt("(2, 3) and %d/1000 random pairs within 1e-6 relative",
              1000 - failures)};
}

// 3. Multilateration: exact ranges recover the hand-built 4-anchor fix to
//    1e-9 m; perturbed ranges land within one step of a 1 cm grid search.
Verdict criterion_trilateration(Cache&) {
  const std::vector<Vec3> hand = {Vec3(0, 0, 0), Vec3(6, 0, 0), Vec3(0, 8, 0),
                                  Vec3(0, 0, 5)};
  const Vec3 truth(3, 4, 0);
  std::vector<DistanceObservation> obs;
  for (std::size_t k = 0; k < hand.size(); ++k) {
    obs.push_back({static_cast<int>(k), (truth - hand[k]).norm(), 1.0});
  }
  const double exact_err = (trilaterate(hand, obs).position - truth).norm();
  if (!(exact_err < 1e-9)) {
    return {false, fmt("exact 4-anchor fix off by %.3g m (limit 1e-9)", exact_err)};
  }

  const std::vector<Vec3> anchors = {Vec3(0, 0, 1), Vec3(6, 0, 1), Vec3(3, 5, 1)};
  struct Case {
    Vec3 truth;
    double factors[3];
  };
  const Case cases[] = {
      {Vec3(2.2, 1.7, 0.0), {1.010, 0.990, 1.005}},
      {Vec3(4.1, 2.6, 0.0), {0.980, 1.020, 1.010}},
      {Vec3(1.2, 3.9, 0.0), {1.015, 0.995, 0.980}},
  };
  double worst_gap = 0.0;
  for (const Case& c : cases) {
    std::vector<DistanceObservation> noisy;
    for (std::size_t k = 0; k < anchors.size(); ++k) {
      noisy.push_back({static_cast<int>(k),
                       (c.truth - anchors[k]).norm() * c.factors[k], 1.0});
    }
    TrilaterateOptions topt;
    topt.fixed_z = 0.0;
    const Vec3 est = trilaterate(anchors, noisy, topt).position;

    auto cost = [&](const Vec3& p) {
      double f = 0.0;
      for (const auto& o : noisy) {
        const double miss = (p - anchors[o.transmitter_id]).norm() - o.distance;
        f += miss * miss;
      }
      return f;
    };
    Vec3 best = Vec3::Zero();
    double best_f = std::numeric_limits<double>::infinity();
    for (int ix = 0; ix <= 600; ++ix) {
      for (int iy = 0; iy <= 600; ++iy) {
        const Vec3 p(0.01 * ix, 0.01 * iy, 0.0);
        const double f = cost(p);
        if (f < best_f) {
          best_f = f;
          best = p;
        }
      }
    }
    worst_gap = std::max(worst_gap, (est - best).norm());
  }
  // One diagonal step of the 1 cm search grid.
  return {worst_gap <= 0.015,
          fmt("exact fix %.2g m; solver at most %.4f m from the 1 cm grid optimum",
              exact_err, worst_gap)};
}

// 4. Crosstalk averages of the measured coupling ratios: the legacy coil
//    design should average (57, 66, 63)% per axis and the orthogonal
//    redesign (9, 9, 10)%, each within one percentage point.
Verdict criterion_crosstalk(Cache&) {
  CrosstalkMatrix old_coil;
  old_coil.mix << 1.00, 0.63, 0.58,
                  0.68, 1.00, 0.67,
                  0.63, 0.68, 1.00;
  CrosstalkMatrix new_coil;
  new_coil.mix << 1.00, 0.08, 0.11,
                  0.06, 1.00, 0.09,
                  0.11, 0.10, 1.00;

  const auto old_avg = crosstalk_ratio(old_coil);
  const auto new_avg = crosstalk_ratio(new_coil);
  const double old_target[3] = {57.0, 66.0, 63.0};
  const double new_target[3] = {9.0, 9.0, 10.0};
  bool pass = true;
  for (int k = 0; k < 3; ++k) {
    if (std::abs(old_avg[k] - old_target[k]) > 1.0) pass = false;
    if (std::abs(new_avg[k] - new_target[k]) > 1.0) pass = false;
  }
  return {pass,
          fmt("legacy (%.1f, %.1f, %.1f)%% vs (57, 66, 63); redesign "
              "(%.1f, %.1f, %.1f)%% vs (9, 9, 10); +/- 1 point",
              old_avg[0], old_avg[1], old_avg[2], new_avg[0], new_avg[1],
              new_avg[2])};
}

// 5. Range-error calibration: the single-transmitter reference sweep puts
//    0-3 m RMSE at 0.166 +/- 0.05 m and band RMSE never decreases with range.
Verdict criterion_bands(Cache& cache) {
  const auto& probe = cache.reference_probe();
  const auto& bands = probe.report.bands;
  if (bands.size() != 3 || !bands[0].present || !bands[1].present ||
      !bands[2].present) {
    return {false, "expected populated 0-3, 3-5 and 5-8 m bands"};
  }
  const double b0 = bands[0].rmse, b1 = bands[1].rmse, b2 = bands[2].rmse;
  const bool anchor_ok = std::abs(b0 - 0.166) <= 0.05;
  const bool monotone = b0 <= b1 && b1 <= b2;
  return {anchor_ok && monotone,
          fmt("band RMSE %.4f / %.4f / %.4f m; 0-3 m target 0.166 +/- 0.05, "
              "non-decreasing",
              b0, b1, b2)};
}

// 6. Operating range: no reading inside 8 m rails at the chain floor, and a
//    distance estimate at exactly 8 m stays within 1.2 m.
Verdict criterion_range(Cache& cache) {
  const auto& probe = cache.reference_probe();
  const bool pass = probe.railed_to8 == 0 && probe.railed_probes == 0 &&
                    probe.worst_err_8m < 1.2;
  return {pass,
          fmt("%d railed readings inside 8 m (min magnitude %.2g V); worst "
              "8 m estimate off by %.3f m (limit 1.2)",
              probe.railed_to8 + probe.railed_probes, probe.min_mag_to8,
              probe.worst_err_8m)};
}

// 7. Method ordering on the distorted industrial scenario: fingerprint
//    beats recalibrated beats model-based, and fingerprint cuts the
//    model-based median by at least half.
Verdict criterion_ordering(Cache& cache) {
  const PipelineResult& result = cache.industrial_result();
  double model = 0.0, recal = 0.0, fp = 0.0;
  for (const auto& m : result.methods) {
    if (m.method == "model") model = m.median_error;
    if (m.method == "recalibrated") recal = m.median_error;
    if (m.method == "fingerprint") fp = m.median_error;
  }
  const bool order = fp < recal && recal < model;
  const bool halved = fp <= 0.5 * model;
  return {order && halved,
          fmt("medians: model %.3f, recalibrated %.3f, fingerprint %.3f m "
              "(%.0f%% below model; need ordering and >= 50%%)",
              model, recal, fp, 100.0 * (1.0 - fp / model))};
}

// 8. Regressor crossover: with the penalty removed, the linear map wins the
//    90-sample office split while the cubic map wins the 300-sample
//    industrial split.
Verdict criterion_crossover(Cache& cache) {
  BuildOptions bo;
  bo.lambda = 0.0;

  const ScenarioFile office = load_scenario(scenario_path("office.json"));
  const Scenario& sc = office.scenario;
  const auto grid = generate_grid(sc.grid_rect, sc.grid_spacing, sc.grid_height);
  const Dataset data = generate_dataset(sc.env, grid, sc.id, sc.seed, 4);
  const double frac90 = 90.5 / static_cast<double>(data.cycles.size());
  const FingerprintModel office_lasso =
      build_map(data, frac90, MapKind::kLasso, sc.seed, bo);
  const FingerprintModel office_poly3 =
      build_map(data, frac90, MapKind::kPoly3Lasso, sc.seed, bo);

  const Dataset& industrial = cache.industrial_result().dataset;
  const std::uint64_t iseed = cache.industrial_result().options.seed;
  const double frac300 = 300.5 / static_cast<double>(industrial.cycles.size());
  const FingerprintModel ind_lasso =
      build_map(industrial, frac300, MapKind::kLasso, iseed, bo);
  const FingerprintModel ind_poly3 =
      build_map(industrial, frac300, MapKind::kPoly3Lasso, iseed, bo);

  const bool office_ok =
      office_lasso.held_out_median < office_poly3.held_out_median;
  const bool industrial_ok =
      ind_poly3.held_out_median < ind_lasso.held_out_median;
  return {office_ok && industrial_ok,
          fmt("office@90: linear %.3f vs cubic %.3f m (linear must win); "
              "industrial@300: cubic %.3f vs linear %.3f m (cubic must win)",
              office_lasso.held_out_median, office_poly3.held_out_median,
              ind_poly3.held_out_median, ind_lasso.held_out_median)};
}

// 9. Coordinate-descent optimizer: zero penalty equals least squares to
//    1e-8, the null-threshold penalty zeroes every weight, and the
//    2-feature objective matches a brute-force grid to 1e-4.
Verdict criterion_lasso(Cache&) {
  auto standardize = [](Eigen::MatrixXd& x) {
    for (int j = 0; j < x.cols(); ++j) {
      const double mean = x.col(j).mean();
      x.col(j).array() -= mean;
      const double sd = std::sqrt(x.col(j).squaredNorm() / x.rows());
      if (sd > 0.0) x.col(j) /= sd;
    }
  };

  Eigen::MatrixXd x(40, 4);
  {
    Rng rng(11);
    for (int i = 0; i < 40; ++i) {
      for (int j = 0; j < 4; ++j) x(i, j) = rng.gaussian();
    }
    standardize(x);
  }
  Eigen::VectorXd w_true(4);
  w_true << 1.5, -0.7, 0.0, 0.3;
  Eigen::VectorXd y = x * w_true + Eigen::VectorXd::Constant(40, 2.0);
  {
    Rng rng(12);
    for (int i = 0; i < y.size(); ++i) y(i) += 0.01 * rng.gaussian();
  }
  Eigen::MatrixXd design(40, 5);
  design.col(0).setOnes();
  design.rightCols(4) = x;
  const Eigen::VectorXd theta = design.colPivHouseholderQr().solve(y);
  const LassoFit at_zero = lasso_fit(x, y, 0.0, 1e-12, 100000);
  double ls_gap = std::abs(at_zero.intercept - theta(0));
  for (int j = 0; j < 4; ++j) {
    ls_gap = std::max(ls_gap, std::abs(at_zero.weights(j) - theta(j + 1)));
  }
  if (!(ls_gap < 1e-8)) {
    return {false, fmt("zero-penalty fit differs from least squares by %.3g "
                       "(limit 1e-8)",
                       ls_gap)};
  }

  Eigen::MatrixXd xn(30, 3);
  Eigen::VectorXd yn(30);
  {
    Rng rng(21);
    for (int i = 0; i < 30; ++i) {
      for (int j = 0; j < 3; ++j) xn(i, j) = rng.gaussian();
    }
    standardize(xn);
    Rng rng2(22);
    for (int i = 0; i < 30; ++i) yn(i) = 5.0 + rng2.gaussian();
  }
  const double ybar = yn.mean();
  double lambda_max = 0.0;
  for (int j = 0; j < 3; ++j) {
    lambda_max = std::max(
        lambda_max,
        std::abs(xn.col(j).dot(yn - Eigen::VectorXd::Constant(30, ybar))) / 30.0);
  }
  const LassoFit null_fit = lasso_fit(xn, yn, lambda_max, 1e-12, 10000);
  if (null_fit.weights.cwiseAbs().maxCoeff() != 0.0) {
    return {false, fmt("null-threshold penalty %.4g left nonzero weights",
                       lambda_max)};
  }

  Eigen::MatrixXd xb(3, 2);
  xb << 1.0, 0.2, -0.5, 1.0, -0.5, -1.2;
  standardize(xb);
  Eigen::VectorXd yb(3);
  yb << 1.0, 0.4, -1.4;
  const double lambda = 0.1;
  const LassoFit fit = lasso_fit(xb, yb, lambda, 1e-12, 100000);
  double best = std::numeric_limits<double>::infinity();
  for (int i = -2000; i <= 2000; ++i) {
    for (int j = -2000; j <= 2000; ++j) {
      const double w0 = 1e-3 * i, w1 = 1e-3 * j;
      double resid = 0.0;
      for (int r = 0; r < 3; ++r) resid += yb(r) - xb(r, 0) * w0 - xb(r, 1) * w1;
      const double c = resid / 3.0;
      double sq = 0.0;
      for (int r = 0; r < 3; ++r) {
        const double miss = yb(r) - xb(r, 0) * w0 - xb(r, 1) * w1 - c;
        sq += miss * miss;
      }
      best = std::min(best, sq / 6.0 + lambda * (std::abs(w0) + std::abs(w1)));
    }
  }
  const Eigen::VectorXd r =
      yb - xb * fit.weights - Eigen::VectorXd::Constant(3, fit.intercept);
  const double got = r.squaredNorm() / 6.0 + lambda * fit.weights.lpNorm<1>();
  if (!(std::abs(got - best) < 1e-4 && got <= best + 1e-12)) {
    return {false, fmt("2-feature objective %.6f vs grid optimum %.6f "
                       "(limit 1e-4)",
                       got, best)};
  }
  return {true, fmt("zero-penalty gap %.2g; null threshold zeroes all "
                    "weights; 2-feature objective within %.2g of grid",
                    ls_gap, std::abs(got - best))};
}

// 10. Determinism: rerunning the office pipeline with the same seed and
//     configuration reproduces every report byte for byte.
Verdict criterion_determinism(Cache&) {
  const ScenarioFile file = load_scenario(scenario_path("office.json"));
  PipelineOptions opt = resolve_options(file, PipelineOptions{}, false);
  opt.workers = 4;

  const std::filesystem::path root =
      std::filesystem::temp_directory_path() / "magloc_acceptance";
  std::filesystem::remove_all(root);
  write_reports(run_pipeline(file, opt), (root / "first").string());
  write_reports(run_pipeline(file, opt), (root / "second").string());

  int mismatched = 0;
  int files = 0;
  for (const char* name :
       {"dataset.jsonl", "calibration_factory.json", "calibration_recal.json",
        "fingerprint_model.json", "medians.csv", "intervals.csv", "boxplot.csv",
        "error_map.csv"}) {
    const std::string a = slurp(root / "first" / name);
    const std::string b = slurp(root / "second" / name);
    ++files;
    if (a.empty() || a != b) ++mismatched;
  }
  std::filesystem::remove_all(root);
  return {mismatched == 0,
          fmt("%d/%d report files byte-identical across reruns",
              files - mismatched, files)};
}

struct Entry {
  int id;
  const char* name;
  Verdict (*fn)(Cache&);
  double budget_s;  // <= 0: untimed
};

}  // namespace

int main() {
  const Entry entries[] = {
      {1, "on-axis field slope", criterion_slope, 1.0},
      {2, "calibration round-trip", criterion_calibration, 1.0},
      {3, "multilateration accuracy", criterion_trilateration, 10.0},
      {4, "coil crosstalk averages", criterion_crosstalk, 0.0},
      {5, "range error bands", criterion_bands, 30.0},
      {6, "operating range", criterion_range, 30.0},
      {7, "method ordering", criterion_ordering, 120.0},
      {8, "regressor crossover", criterion_crossover, 0.0},
      {9, "lasso optimizer", criterion_lasso, 5.0},
      {10, "determinism", criterion_determinism, 0.0},
  };

  Cache cache;
  int failures = 0;
  for (const Entry& e : entries) {
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = e.fn(cache);
    } catch (const std::exception& ex) {
      v = {false, fmt("exception: %s", ex.what())};
    }
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    if (e.budget_s > 0.0 && elapsed > e.budget_s) {
      v.pass = false;
      v.detail += fmt("; exceeded the %.0f s budget", e.budget_s);
    }
    if (!v.pass) ++failures;
    std::printf("criterion %2d  %-26s  %s  %s  [%.1f s]\n", e.id, e.name,
                v.pass ? "PASS" : "FAIL", v.detail.c_str(), elapsed);
    std::fflush(stdout);
  }
  std::printf("%d/10 criteria passed\n",
              static_cast<int>(std::size(entries)) - failures);
  return failures;
}
