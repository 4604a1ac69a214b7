// Error statistics over localization runs: RMSE bucketed by true range,
// median position error, quartile summaries and exportable error maps.
#pragma once

#include "magloc/environment.hpp"
#include "magloc/types.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace magloc {

struct Band {
  double low = 0.0;
  double high = 0.0;
};

/// Range buckets used by the headline accuracy tables: 0-3, 3-5, 5-8 m.
std::vector<Band> default_bands();

struct IntervalReport {
  struct BandStats {
    Band band;
    double rmse = 0.0;  // meaningless when !present
    int count = 0;
    bool present = false;
  };
  std::vector<BandStats> bands;
};

/// Per-band RMSE of (estimated - true) over samples of (true distance,
/// estimated distance). A sample lands in the band with low <= true < high;
/// empty bands are flagged absent. Bands must be ascending, non-overlapping.
IntervalReport rmse_by_interval(const std::vector<std::pair<double, double>>& samples,
                                const std::vector<Band>& bands = default_bands());

/// Median Euclidean error between paired estimates and truths; an even
/// count averages the central pair. Throws DomainError when empty.
double median_position_error(const std::vector<Vec3>& estimates,
                             const std::vector<Vec3>& truths);

struct ErrorMapRecord {
  Vec3 position = Vec3::Zero();  // true position
  double error = 0.0;            // meters, >= 0
  std::string method;
};

/// Writes `x,y,z,error,method` lines (17-significant-digit floats) under a
/// header. A non-empty preamble is emitted first as `# `-prefixed lines.
/// Throws IoError with the path on failure.
void export_error_map(const std::vector<ErrorMapRecord>& records,
                      const std::string& path, const std::string& preamble = {});

/// Reads a file written by export_error_map, skipping `#` comment lines.
/// Throws IoError when the file cannot be opened and SchemaError on
/// malformed content.
std::vector<ErrorMapRecord> import_error_map(const std::string& path);

/// Seeded shuffle followed by a contiguous partition: one subset per
/// fraction (floor of fraction * size), remainder appended as the final
/// evaluation subset. Fractions must lie in [0, 1] and sum to <= 1.
std::vector<Dataset> split_dataset(const Dataset& dataset,
                                   const std::vector<double>& fractions,
                                   std::uint64_t seed);

struct BoxplotStats {
  double min = 0.0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double max = 0.0;
};

/// Five-number summary with linearly interpolated quartiles.
BoxplotStats boxplot_stats(std::vector<double> values);

}  // namespace magloc
