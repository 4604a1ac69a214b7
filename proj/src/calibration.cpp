#include "magloc/calibration.hpp"

#include <cmath>

namespace magloc {

AxisCalibration fit_axis(const std::vector<CalibrationSample>& samples) {
  if (samples.size() < 2)
    throw InsufficientDataError("axis calibration needs at least 2 samples");

  double sx = 0.0, sy = 0.0;
  for (const auto& s : samples) {
    if (!(s.magnitude > 0.0) || !(s.true_distance > 0.0))
      throw DomainError("calibration samples must have positive magnitude and distance");
    sx += std::log(s.magnitude);
    sy += std::log(s.true_distance);
  }
  const double n = static_cast<double>(samples.size());
  const double mx = sx / n, my = sy / n;

  double sxx = 0.0, sxy = 0.0;
  for (const auto& s : samples) {
    const double dx = std::log(s.magnitude) - mx;
    sxx += dx * dx;
    sxy += dx * (std::log(s.true_distance) - my);
  }
  if (!(sxx > 0.0))
    throw InsufficientDataError("axis calibration needs at least 2 distinct magnitudes");

  // log d = slope * log m + intercept
  const double slope = sxy / sxx;
  const double intercept = my - slope * mx;
  if (slope == 0.0)
    throw InsufficientDataError("degenerate fit: magnitude carries no distance information");

  AxisCalibration cal;
  cal.slope_sign = slope > 0.0 ? +1 : -1;
  cal.exponent = 1.0 / std::abs(slope);
  cal.scale = std::exp(intercept * cal.exponent);

  double ss = 0.0;
  for (const auto& s : samples) {
    const double pred = slope * std::log(s.magnitude) + intercept;
    const double r = std::log(s.true_distance) - pred;
    ss += r * r;
  }
  cal.residual_rms = std::sqrt(ss / n);
  return cal;
}

double magnitude_to_distance(const AxisCalibration& cal, double magnitude) {
  if (!(magnitude > 0.0)) throw DomainError("magnitude must be > 0");
  const double m = cal.slope_sign > 0 ? magnitude : 1.0 / magnitude;
  return std::pow(cal.scale * m, 1.0 / cal.exponent);
}

double channel_magnitude(const Mat3& magnitudes, int channel) {
  if (channel >= 0 && channel <= 2) return magnitudes.row(channel).norm();
  if (channel == kCombinedChannel) return magnitudes.norm();
  throw InvalidArgumentError("channel must be 0..2 or the combined channel");
}

double channel_floor(double floor_mag, int channel) {
  const double entries = channel == kCombinedChannel ? 9.0 : 3.0;
  return floor_mag * std::sqrt(entries);
}

namespace {

// Readings where every entry rails at the floor carry no distance signal.
bool above_floor(double magnitude, double floor_mag, int channel) {
  return magnitude > channel_floor(floor_mag, channel) * (1.0 + 1e-6);
}

CalibrationSet fit_all_channels(
    const std::vector<std::vector<std::vector<CalibrationSample>>>& samples) {
  CalibrationSet set;
  set.transmitters.resize(samples.size());
  for (std::size_t t = 0; t < samples.size(); ++t) {
    for (int c = 0; c <= kCombinedChannel; ++c) {
      AxisCalibration cal = fit_axis(samples[t][c]);
      cal.tx_index = static_cast<int>(t);
      cal.axis_index = c;
      (c == kCombinedChannel ? set.transmitters[t].combined
                             : set.transmitters[t].axis[c]) = cal;
    }
  }
  return set;
}

}  // namespace

CalibrationSet factory_calibration(const Environment& env, const Vec3& aim_point,
                                   double d_min, double d_max, int n_samples) {
  env.validate();
  if (!(d_min > 0.0) || !(d_max > d_min))
    throw InvalidArgumentError("calibration sweep needs 0 < d_min < d_max");
  if (n_samples < 2)
    throw InvalidArgumentError("calibration sweep needs at least 2 samples");

  Environment quiet = env;
  quiet.distorters.clear();
  quiet.chain.noise.rms = 0.0;
  const double floor_mag = floor_magnitude(quiet.chain, quiet.excitation_freq);
  const double gain =
      2.0 * kPi * quiet.excitation_freq * quiet.receiver.turns * quiet.receiver.area;

  std::vector<std::vector<std::vector<CalibrationSample>>> samples(
      env.transmitters.size(),
      std::vector<std::vector<CalibrationSample>>(kCombinedChannel + 1));

  Rng rng(0);
  for (std::size_t t = 0; t < env.transmitters.size(); ++t) {
    const TransmitterPose& pose = env.transmitters[t].pose;
    const Vec3 offset = aim_point - pose.origin;
    if (!(offset.norm() > 0.0))
      throw GeometryError("aim point coincides with a transmitter");
    const Vec3 dir = offset.normalized();

    for (int k = 0; k < n_samples; ++k) {
      const double frac = static_cast<double>(k) / (n_samples - 1);
      const double d = d_min * std::pow(d_max / d_min, frac);
      const Vec3 p = pose.origin + d * dir;

      CouplingMatrix ideal;
      for (int i = 0; i < 3; ++i) {
        const Vec3 b = dipole_field(pose.origin, pose.axis(i), pose.coils[i], p);
        for (int j = 0; j < 3; ++j) {
          ideal(i, j) = gain * b.dot(quiet.receiver.axes.row(j).transpose());
        }
      }
      const CouplingMatrix mixed = apply_crosstalk(env.transmitters[t].crosstalk, ideal);
      Mat3 mags;
      for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
          mags(i, j) =
              sense(quiet.chain, std::abs(mixed(i, j)), quiet.excitation_freq, rng)
                  .magnitude;
        }
      }
      for (int c = 0; c <= kCombinedChannel; ++c) {
        const double m = channel_magnitude(mags, c);
        if (above_floor(m, floor_mag, c)) samples[t][c].push_back({m, d});
      }
    }
  }
  return fit_all_channels(samples);
}

CalibrationSet local_recalibration(const Dataset& dataset, const Environment& env,
                                   double fraction, std::uint64_t seed) {
  env.validate();
  if (!(fraction > 0.0) || fraction > 1.0)
    throw InvalidArgumentError("recalibration fraction must be in (0, 1]");
  const std::size_t n = dataset.cycles.size();
  const std::size_t n_sub =
      std::min(n, static_cast<std::size_t>(std::floor(fraction * n + 1e-9)));
  if (n_sub < 2) throw InsufficientDataError("recalibration subset has fewer than 2 cycles");

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);

  const double floor_mag = floor_magnitude(env.chain, env.excitation_freq);
  std::vector<std::vector<std::vector<CalibrationSample>>> samples(
      env.transmitters.size(),
      std::vector<std::vector<CalibrationSample>>(kCombinedChannel + 1));

  for (std::size_t k = 0; k < n_sub; ++k) {
    const MeasurementCycle& cycle = dataset.cycles[order[k]];
    if (!cycle.true_position)
      throw InvalidArgumentError("recalibration needs ground-truth positions");
    if (cycle.transmitters.size() != env.transmitters.size())
      throw SchemaError("cycle transmitter count does not match environment");
    for (std::size_t t = 0; t < env.transmitters.size(); ++t) {
      const double d = (*cycle.true_position - env.transmitters[t].pose.origin).norm();
      if (!(d > 0.0)) continue;
      for (int c = 0; c <= kCombinedChannel; ++c) {
        const double m = channel_magnitude(cycle.transmitters[t].magnitudes, c);
        if (above_floor(m, floor_mag, c)) samples[t][c].push_back({m, d});
      }
    }
  }
  return fit_all_channels(samples);
}

}  // namespace magloc
