// End-to-end run: simulate a scenario, calibrate, localize the evaluation
// split with every requested method and write the comparison reports.
#pragma once

#include "magloc/calibration.hpp"
#include "magloc/environment.hpp"
#include "magloc/evaluation.hpp"
#include "magloc/fingerprint.hpp"
#include "magloc/io.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace magloc {

/// Resolved run parameters. `method` is one of "model", "recalibrated",
/// "fingerprint" or "all".
struct PipelineOptions {
  std::uint64_t seed = 0;
  std::string method = "all";
  double train_frac = 0.3;   // fingerprint training share of the dataset
  double recal_frac = 0.1;   // recalibration share of the dataset
  double lambda = 0.01;
  bool cross_validate = false;
  MapKind kind = MapKind::kLasso;
  int workers = 1;
};

/// Applies the scenario's `run` section on top of `flags`: populated file
/// fields win. The scenario-level seed acts as a fallback when neither the
/// file's run section nor the flags carry one.
PipelineOptions resolve_options(const ScenarioFile& file,
                                const PipelineOptions& flags,
                                bool flags_have_seed);

/// Parses "lasso" / "poly3-lasso"; throws InvalidArgumentError otherwise.
MapKind parse_map_kind(const std::string& name);

/// Fingerprint of everything that shapes the outputs: the scenario file
/// bytes plus every resolved option except `workers` (outputs are
/// worker-count invariant).
std::uint64_t config_hash(const ScenarioFile& file, const PipelineOptions& options);

/// `config_hash=<16 hex digits>` + newline + `seed=<n>`, the stamp written
/// at the top of every text report.
std::string config_stamp(std::uint64_t hash, std::uint64_t seed);

struct MethodOutcome {
  std::string method;
  double median_error = 0.0;           // meters over solved points
  std::size_t solved = 0;
  std::size_t failed = 0;              // points the solver rejected
  BoxplotStats error_norm;             // position error magnitudes
  BoxplotStats axis_abs[3];            // per-coordinate absolute deviations
  std::optional<IntervalReport> intervals;  // range-domain, model methods only
};

struct PipelineResult {
  std::uint64_t hash = 0;
  PipelineOptions options;
  Scenario scenario;
  Dataset dataset;                     // full simulated sweep
  std::size_t eval_count = 0;          // cycles in the evaluation split
  CalibrationSet factory;
  std::optional<CalibrationSet> recalibrated;
  std::optional<FingerprintModel> fingerprint;
  std::vector<MethodOutcome> methods;
  std::vector<ErrorMapRecord> error_map;  // one record per point and method
};

/// Simulates the grid sweep, splits it into recalibration / fingerprint
/// training / evaluation subsets, fits the requested methods and localizes
/// the evaluation split with each. Stage failures rethrow with the stage
/// name prefixed.
PipelineResult run_pipeline(const ScenarioFile& file, const PipelineOptions& options);

/// Same as run_pipeline but works on an existing dataset instead of
/// simulating one. The dataset's scenario id must match the scenario.
PipelineResult evaluate_dataset(const ScenarioFile& file,
                                const PipelineOptions& options, Dataset dataset);

/// Writes dataset.jsonl, calibration and model JSON plus medians.csv,
/// intervals.csv, boxplot.csv and error_map.csv under `out_dir` (created
/// when absent). Every file carries the config hash and seed.
/// `include_dataset` = false skips dataset.jsonl (for runs that read it).
void write_reports(const PipelineResult& result, const std::string& out_dir,
                   bool include_dataset = true);

}  // namespace magloc
