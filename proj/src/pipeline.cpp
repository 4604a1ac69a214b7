#include "magloc/pipeline.hpp"

#include "magloc/localization.hpp"
#include "magloc/rng.hpp"
#include "magloc/signal_chain.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

namespace magloc {

namespace {

const char* kind_name(MapKind kind) {
  return kind == MapKind::kPoly3Lasso ? "poly3-lasso" : "lasso";
}

bool method_selected(const std::string& selector, const char* name) {
  return selector == "all" || selector == name;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  return out;
}

// Reruns `f`, prefixing the failing stage's name onto any library error so
// an aborted run names where it died. Error types survive so exit-code
// classification still works.
template <typename F>
auto with_stage(const char* stage, F&& f) -> decltype(f()) {
  const auto tag = [stage](const char* what) {
    return std::string(stage) + ": " + what;
  };
  try {
    return f();
  } catch (const ConvergenceError& e) {
    throw ConvergenceError(tag(e.what()), e.last_iterate);
  } catch (const SingularityError& e) {
    throw SingularityError(tag(e.what()));
  } catch (const DomainError& e) {
    throw DomainError(tag(e.what()));
  } catch (const InvalidArgumentError& e) {
    throw InvalidArgumentError(tag(e.what()));
  } catch (const InsufficientDataError& e) {
    throw InsufficientDataError(tag(e.what()));
  } catch (const GeometryError& e) {
    throw GeometryError(tag(e.what()));
  } catch (const SchemaError& e) {
    throw SchemaError(tag(e.what()));
  } catch (const IoError& e) {
    throw IoError(tag(e.what()));
  }
}

void close_out(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace

MapKind parse_map_kind(const std::string& name) {
  if (name == "lasso") return MapKind::kLasso;
  if (name == "poly3-lasso") return MapKind::kPoly3Lasso;
  throw InvalidArgumentError("unknown map kind '" + name +
                             "' (expected lasso or poly3-lasso)");
}

PipelineOptions resolve_options(const ScenarioFile& file,
                                const PipelineOptions& flags,
                                bool flags_have_seed) {
  PipelineOptions out = flags;
  const RunOverrides& run = file.run;
  if (run.seed) {
    out.seed = *run.seed;
  } else if (!flags_have_seed) {
    out.seed = file.scenario.seed;
  }
  if (run.method) out.method = *run.method;
  if (run.train_frac) out.train_frac = *run.train_frac;
  if (run.recal_frac) out.recal_frac = *run.recal_frac;
  if (run.lambda) out.lambda = *run.lambda;
  if (run.workers) out.workers = *run.workers;
  if (run.kind) out.kind = parse_map_kind(*run.kind);
  return out;
}

std::uint64_t config_hash(const ScenarioFile& file, const PipelineOptions& options) {
  std::string blob = file.raw_text;
  blob += "\nseed=" + std::to_string(options.seed);
  blob += ";method=" + options.method;
  blob += ";train_frac=" + format_double(options.train_frac);
  blob += ";recal_frac=" + format_double(options.recal_frac);
  blob += ";lambda=" + format_double(options.lambda);
  blob += ";cv=" + std::string(options.cross_validate ? "1" : "0");
  blob += ";kind=" + std::string(kind_name(options.kind));
  return fnv1a64(blob);
}

std::string config_stamp(std::uint64_t hash, std::uint64_t seed) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "config_hash=%016llx\nseed=%llu",
                static_cast<unsigned long long>(hash),
                static_cast<unsigned long long>(seed));
  return buf;
}

namespace {

// Localizes every evaluation cycle with one method and collects its error
// statistics. Model-based methods also report range-domain interval RMSE
// from the combined channel of every non-railed transmitter.
MethodOutcome evaluate_method(const Dataset& eval, const Scenario& sc,
                              const std::vector<TransmitterPose>& anchors,
                              double floor_mag, Method tag,
                              const CalibrationSet* cal,
                              const FingerprintModel* map,
                              std::vector<ErrorMapRecord>& error_map) {
  MethodOutcome outcome;
  outcome.method = method_name(tag);

  EstimateOptions eo;
  eo.fixed_z = sc.fixed_z;
  eo.method = tag;
  eo.floor_magnitude = floor_mag;

  std::vector<Vec3> estimates;
  std::vector<Vec3> truths;
  for (const auto& cycle : eval.cycles) {
    if (!cycle.true_position)
      throw InvalidArgumentError("evaluation cycles need ground truth");
    try {
      const PositionEstimate est =
          cal ? estimate_position(cycle, *cal, anchors, eo) : predict(*map, cycle);
      estimates.push_back(est.position);
      truths.push_back(*cycle.true_position);
    } catch (const InsufficientDataError&) {
      ++outcome.failed;
    } catch (const GeometryError&) {
      ++outcome.failed;
    } catch (const ConvergenceError&) {
      ++outcome.failed;
    }
  }
  outcome.solved = estimates.size();

  if (!estimates.empty()) {
    outcome.median_error = median_position_error(estimates, truths);
    std::vector<double> norms(estimates.size());
    std::vector<double> axis[3];
    for (std::size_t i = 0; i < estimates.size(); ++i) {
      const Vec3 miss = estimates[i] - truths[i];
      norms[i] = miss.norm();
      for (int k = 0; k < 3; ++k) axis[k].push_back(std::abs(miss(k)));
      error_map.push_back({truths[i], norms[i], outcome.method});
    }
    outcome.error_norm = boxplot_stats(norms);
    for (int k = 0; k < 3; ++k) outcome.axis_abs[k] = boxplot_stats(axis[k]);
  } else {
    outcome.median_error = std::numeric_limits<double>::quiet_NaN();
  }

  if (cal) {
    std::vector<std::pair<double, double>> samples;
    const double rail =
        channel_floor(floor_mag, kCombinedChannel) * (1.0 + 1e-6);
    for (const auto& cycle : eval.cycles) {
      for (std::size_t t = 0; t < cycle.transmitters.size(); ++t) {
        const double m =
            channel_magnitude(cycle.transmitters[t].magnitudes, kCombinedChannel);
        if (m <= rail) continue;
        const double true_d =
            (*cycle.true_position - anchors[t].origin).norm();
        samples.emplace_back(
            true_d, magnitude_to_distance(cal->transmitters[t].combined, m));
      }
    }
    outcome.intervals = rmse_by_interval(samples);
  }
  return outcome;
}

}  // namespace

PipelineResult run_pipeline(const ScenarioFile& file, const PipelineOptions& options) {
  if (options.workers < 1) throw InvalidArgumentError("workers must be >= 1");
  const Scenario& sc = file.scenario;
  Dataset dataset = with_stage("simulate", [&] {
    const std::vector<Vec3> grid =
        generate_grid(sc.grid_rect, sc.grid_spacing, sc.grid_height);
    return generate_dataset(sc.env, grid, sc.id, options.seed, options.workers);
  });
  return evaluate_dataset(file, options, std::move(dataset));
}

PipelineResult evaluate_dataset(const ScenarioFile& file,
                                const PipelineOptions& options, Dataset dataset) {
  if (options.method != "all" && options.method != "model" &&
      options.method != "recalibrated" && options.method != "fingerprint")
    throw InvalidArgumentError("unknown method '" + options.method + "'");
  if (!(options.train_frac > 0.0) || !(options.train_frac < 1.0))
    throw InvalidArgumentError("train fraction must lie in (0, 1)");
  if (!(options.recal_frac > 0.0) || !(options.recal_frac < 1.0))
    throw InvalidArgumentError("recalibration fraction must lie in (0, 1)");
  if (options.train_frac + options.recal_frac >= 1.0)
    throw InvalidArgumentError("split fractions leave no evaluation subset");
  if (!(options.lambda >= 0.0) || !std::isfinite(options.lambda))
    throw InvalidArgumentError("lambda must be finite and >= 0");

  const Scenario& sc = file.scenario;
  if (dataset.scenario_id != sc.id)
    throw SchemaError("dataset belongs to scenario '" + dataset.scenario_id +
                      "', not '" + sc.id + "'");

  PipelineResult out;
  out.hash = config_hash(file, options);
  out.options = options;
  out.scenario = sc;
  out.dataset = std::move(dataset);

  out.factory = with_stage("factory-calibration", [&] {
    // Sweep toward the floor-plan center, reaching the farthest grid corner
    // so every operating range is covered.
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
          d_max = std::max(
              d_max, (Vec3(cx, cy, sc.grid_height) - tx.pose.origin).norm());
        }
      }
    }
    return factory_calibration(sc.env, aim, d_min, d_max, 64);
  });

  const std::vector<Dataset> parts = with_stage("split", [&] {
    return split_dataset(out.dataset, {options.recal_frac, options.train_frac},
                         options.seed);
  });
  const Dataset& recal_part = parts[0];
  const Dataset& train_part = parts[1];
  const Dataset& eval_part = parts[2];
  if (eval_part.cycles.empty())
    throw InsufficientDataError("split: evaluation subset is empty");
  out.eval_count = eval_part.cycles.size();

  const bool want_model = method_selected(options.method, "model");
  const bool want_recal = method_selected(options.method, "recalibrated");
  const bool want_fp = method_selected(options.method, "fingerprint");

  if (want_recal) {
    out.recalibrated = with_stage("recalibration", [&] {
      return local_recalibration(recal_part, sc.env, 1.0, options.seed);
    });
  }
  if (want_fp) {
    out.fingerprint = with_stage("fingerprint-training", [&] {
      BuildOptions bo;
      bo.lambda = options.lambda;
      bo.cross_validate = options.cross_validate;
      return fit_map(train_part, options.kind, options.seed, bo);
    });
  }

  std::vector<TransmitterPose> anchors;
  for (const auto& tx : sc.env.transmitters) anchors.push_back(tx.pose);
  const double floor_mag = floor_magnitude(sc.env.chain, sc.env.excitation_freq);

  with_stage("evaluation", [&] {
    if (want_model) {
      out.methods.push_back(evaluate_method(eval_part, sc, anchors, floor_mag,
                                            Method::kModel, &out.factory,
                                            nullptr, out.error_map));
    }
    if (want_recal) {
      out.methods.push_back(evaluate_method(eval_part, sc, anchors, floor_mag,
                                            Method::kRecalibrated,
                                            &*out.recalibrated, nullptr,
                                            out.error_map));
    }
    if (want_fp) {
      out.methods.push_back(evaluate_method(eval_part, sc, anchors, floor_mag,
                                            Method::kFingerprint, nullptr,
                                            &*out.fingerprint, out.error_map));
    }
  });
  return out;
}

void write_reports(const PipelineResult& result, const std::string& out_dir,
                   bool include_dataset) {
  namespace fs = std::filesystem;
  const fs::path dir(out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("report-writing: cannot create output directory: " + out_dir);

  const std::string stamp = config_stamp(result.hash, result.options.seed);
  const auto write_stamp = [&stamp](std::ofstream& out) {
    std::istringstream lines(stamp);
    std::string line;
    while (std::getline(lines, line)) out << "# " << line << "\n";
  };

  if (include_dataset)
    save_dataset(result.dataset, (dir / "dataset.jsonl").string(), result.hash);
  save_calibration(result.factory, (dir / "calibration_factory.json").string(),
                   result.hash, result.options.seed);
  if (result.recalibrated) {
    save_calibration(*result.recalibrated,
                     (dir / "calibration_recal.json").string(), result.hash,
                     result.options.seed);
  }
  if (result.fingerprint) {
    save_model(*result.fingerprint, (dir / "fingerprint_model.json").string(),
               result.hash);
  }

  {
    const fs::path path = dir / "medians.csv";
    std::ofstream out = open_out(path);
    write_stamp(out);
    out << "method,median_error,solved,failed,eval_count\n";
    for (const auto& m : result.methods) {
      out << m.method << "," << format_double(m.median_error) << "," << m.solved
          << "," << m.failed << "," << result.eval_count << "\n";
    }
    close_out(out, path);
  }

  {
    const fs::path path = dir / "intervals.csv";
    std::ofstream out = open_out(path);
    write_stamp(out);
    out << "method,band_low,band_high,rmse,count\n";
    for (const auto& m : result.methods) {
      if (!m.intervals) continue;
      for (const auto& band : m.intervals->bands) {
        out << m.method << "," << format_double(band.band.low) << ","
            << format_double(band.band.high) << ","
            << format_double(band.present
                                 ? band.rmse
                                 : std::numeric_limits<double>::quiet_NaN())
            << "," << band.count << "\n";
      }
    }
    close_out(out, path);
  }

  {
    const fs::path path = dir / "boxplot.csv";
    std::ofstream out = open_out(path);
    write_stamp(out);
    out << "method,component,min,q1,median,q3,max\n";
    const char* axes[3] = {"x", "y", "z"};
    for (const auto& m : result.methods) {
      if (m.solved == 0) continue;
      const auto row = [&](const char* component, const BoxplotStats& s) {
        out << m.method << "," << component << "," << format_double(s.min) << ","
            << format_double(s.q1) << "," << format_double(s.median) << ","
            << format_double(s.q3) << "," << format_double(s.max) << "\n";
      };
      for (int k = 0; k < 3; ++k) row(axes[k], m.axis_abs[k]);
      row("norm", m.error_norm);
    }
    close_out(out, path);
  }

  export_error_map(result.error_map, (dir / "error_map.csv").string(), stamp);
}

}  // namespace magloc
