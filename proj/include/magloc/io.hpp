// Persistence: scenario descriptions (JSON), datasets (JSON lines),
// calibration sets and fingerprint models (JSON). All writers are
// byte-deterministic for a fixed input so reruns can be diffed.
#pragma once

#include "magloc/calibration.hpp"
#include "magloc/environment.hpp"
#include "magloc/fingerprint.hpp"
#include "magloc/types.hpp"

#include <cstdint>
#include <optional>
#include <string>

namespace magloc {

/// A fully described simulation setup: the physical environment plus the
/// sampling grid, solver hints and default seed.
struct Scenario {
  std::string id;
  Environment env;
  Rect bounds;                    // floor plan, meters
  Rect grid_rect;                 // sampled sub-rectangle
  double grid_spacing = 0.5;      // meters
  double grid_height = 0.9;       // receiver plane, meters
  std::optional<double> fixed_z;  // planar solve hint
  std::uint64_t seed = 0;         // default seed when the CLI passes none
};

/// Optional `run` section of a scenario file; populated fields override
/// command-line flags.
struct RunOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> method;
  std::optional<double> train_frac;
  std::optional<double> recal_frac;
  std::optional<double> lambda;
  std::optional<int> workers;
  std::optional<std::string> kind;
};

struct ScenarioFile {
  Scenario scenario;
  RunOverrides run;
  std::string raw_text;  // exact bytes read, hashed into the config stamp
};

/// Parses a scenario file. Throws IoError when unreadable and SchemaError
/// (with field context) on malformed content.
ScenarioFile load_scenario(const std::string& path);

/// Serializes a scenario to the canonical JSON layout accepted by
/// load_scenario.
std::string scenario_to_json(const Scenario& scenario);

void save_dataset(const Dataset& dataset, const std::string& path,
                  std::uint64_t config_hash);
Dataset load_dataset(const std::string& path);

void save_calibration(const CalibrationSet& cal, const std::string& path,
                      std::uint64_t config_hash, std::uint64_t seed);
CalibrationSet load_calibration(const std::string& path);

void save_model(const FingerprintModel& model, const std::string& path,
                std::uint64_t config_hash);
FingerprintModel load_model(const std::string& path);

/// `%.17g` rendering used by every text report; round-trips doubles.
std::string format_double(double v);

}  // namespace magloc
