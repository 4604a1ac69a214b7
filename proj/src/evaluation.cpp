#include "magloc/evaluation.hpp"

#include "magloc/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

namespace magloc {

std::vector<Band> default_bands() { return {{0.0, 3.0}, {3.0, 5.0}, {5.0, 8.0}}; }

namespace {

void validate_bands(const std::vector<Band>& bands) {
  double prev_high = -std::numeric_limits<double>::infinity();
  for (const auto& b : bands) {
    if (!std::isfinite(b.low) || !std::isfinite(b.high) || !(b.low < b.high))
      throw InvalidArgumentError("band bounds must be finite with low < high");
    if (b.low < prev_high)
      throw InvalidArgumentError("bands must be ascending and non-overlapping");
    prev_high = b.high;
  }
}

}  // namespace

IntervalReport rmse_by_interval(const std::vector<std::pair<double, double>>& samples,
                                const std::vector<Band>& bands) {
  validate_bands(bands);
  IntervalReport report;
  for (const auto& band : bands) {
    IntervalReport::BandStats stats;
    stats.band = band;
    double sq = 0.0;
    for (const auto& [truth, estimate] : samples) {
      if (truth >= band.low && truth < band.high) {
        const double miss = estimate - truth;
        sq += miss * miss;
        ++stats.count;
      }
    }
    stats.present = stats.count > 0;
    stats.rmse = stats.present ? std::sqrt(sq / stats.count) : 0.0;
    report.bands.push_back(stats);
  }
  return report;
}

double median_position_error(const std::vector<Vec3>& estimates,
                             const std::vector<Vec3>& truths) {
  if (estimates.size() != truths.size())
    throw InvalidArgumentError("estimate and truth counts differ");
  if (estimates.empty()) throw DomainError("median of an empty error set");
  std::vector<double> errors(estimates.size());
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    errors[i] = (estimates[i] - truths[i]).norm();
  }
  std::sort(errors.begin(), errors.end());
  const std::size_t n = errors.size();
  return n % 2 == 1 ? errors[n / 2] : 0.5 * (errors[n / 2 - 1] + errors[n / 2]);
}

void export_error_map(const std::vector<ErrorMapRecord>& records,
                      const std::string& path, const std::string& preamble) {
  for (const auto& r : records) {
    if (!(r.error >= 0.0) || !std::isfinite(r.error))
      throw InvalidArgumentError("error map records need finite error >= 0");
    if (r.method.find(',') != std::string::npos ||
        r.method.find('\n') != std::string::npos)
      throw InvalidArgumentError("method tag must not contain ',' or newline");
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  if (!preamble.empty()) {
    std::istringstream lines(preamble);
    std::string pl;
    while (std::getline(lines, pl)) out << "# " << pl << "\n";
  }
  out << "x,y,z,error,method\n";
  char buf[160];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g,", r.position.x(),
                  r.position.y(), r.position.z(), r.error);
    out << buf << r.method << "\n";
  }
  out.flush();
  if (!out) throw IoError("write failed: " + path);
}

std::vector<ErrorMapRecord> import_error_map(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for reading: " + path);
  std::string line;
  while (std::getline(in, line) && (line.empty() || line[0] == '#')) {
  }
  if (line != "x,y,z,error,method")
    throw SchemaError("missing error map header in " + path);
  std::vector<ErrorMapRecord> records;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    ErrorMapRecord r;
    char sep = 0;
    if (!(ss >> r.position.x() >> sep) || sep != ',' ||
        !(ss >> r.position.y() >> sep) || sep != ',' ||
        !(ss >> r.position.z() >> sep) || sep != ',' ||
        !(ss >> r.error >> sep) || sep != ',')
      throw SchemaError("malformed error map line in " + path + ": " + line);
    std::getline(ss, r.method);
    if (!(r.error >= 0.0))
      throw SchemaError("negative error in " + path + ": " + line);
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<Dataset> split_dataset(const Dataset& dataset,
                                   const std::vector<double>& fractions,
                                   std::uint64_t seed) {
  double total = 0.0;
  for (const double f : fractions) {
    if (!(f >= 0.0) || !(f <= 1.0) || !std::isfinite(f))
      throw DomainError("split fractions must lie in [0, 1]");
    total += f;
  }
  if (total > 1.0 + 1e-12) throw DomainError("split fractions must sum to <= 1");

  const std::size_t n = dataset.cycles.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);

  std::vector<Dataset> subsets;
  std::size_t cursor = 0;
  auto take = [&](std::size_t count) {
    Dataset part;
    part.scenario_id = dataset.scenario_id;
    part.seed = dataset.seed;
    for (std::size_t i = 0; i < count && cursor < n; ++i, ++cursor) {
      part.cycles.push_back(dataset.cycles[order[cursor]]);
    }
    subsets.push_back(std::move(part));
  };
  for (const double f : fractions) {
    take(static_cast<std::size_t>(std::floor(f * static_cast<double>(n) + 1e-9)));
  }
  take(n - cursor);  // remainder = evaluation split
  return subsets;
}

BoxplotStats boxplot_stats(std::vector<double> values) {
  if (values.empty()) throw DomainError("boxplot of an empty value set");
  std::sort(values.begin(), values.end());
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(values.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
    const double frac = pos - static_cast<double>(lo);
    if (lo + 1 >= values.size()) return values.back();
    return values[lo] + frac * (values[lo + 1] - values[lo]);
  };
  return {values.front(), quantile(0.25), quantile(0.5), quantile(0.75),
          values.back()};
}

}  // namespace magloc
