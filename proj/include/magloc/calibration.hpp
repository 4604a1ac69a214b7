// Magnitude-to-distance transfer fitting, one calibration per transmitter
// axis plus one for the combined three-axis magnitude.
//
// The transfer is d = (a * m^s)^(1/b) with scale a > 0, exponent b > 0 and
// slope sign s in {-1, +1}. Fitting is ordinary least squares in log space:
// b is the reciprocal of the absolute log-log slope and s its sign. Hand
// built calibrations default to s = +1, so (a, b) act as d = (a*m)^(1/b).
// Far-field coil data has magnitude falling with distance, so fits on
// physical data come back with s = -1 and b near 3.
#pragma once

#include "magloc/environment.hpp"
#include "magloc/types.hpp"

#include <cstdint>
#include <vector>

namespace magloc {

struct AxisCalibration {
  double scale = 1.0;       // a
  double exponent = 1.0;    // b, always > 0
  int slope_sign = +1;      // s
  int tx_index = 0;
  int axis_index = 0;       // 0..2 per-axis, 3 = combined magnitude channel
  double residual_rms = 0.0;  // log-distance RMS of the fit
};

struct CalibrationSample {
  double magnitude = 0.0;      // volts
  double true_distance = 0.0;  // meters
};

/// Per-axis index of the combined-magnitude channel.
inline constexpr int kCombinedChannel = 3;

/// All calibrations of one environment: per transmitter, one per axis plus
/// the combined channel.
struct CalibrationSet {
  struct PerTransmitter {
    AxisCalibration axis[3];
    AxisCalibration combined;
  };
  std::vector<PerTransmitter> transmitters;
};

/// Least-squares fit of the transfer in log space. Throws
/// InsufficientDataError with fewer than 2 distinct magnitudes and
/// DomainError on non-positive samples.
AxisCalibration fit_axis(const std::vector<CalibrationSample>& samples);

/// Applies the transfer: d = (a * m^s)^(1/b). Throws DomainError for m <= 0.
double magnitude_to_distance(const AxisCalibration& cal, double magnitude);

/// Euclidean norm of one activated-axis row (channel 0..2) or the Frobenius
/// norm of the whole 3x3 magnitude matrix (kCombinedChannel).
double channel_magnitude(const Mat3& magnitudes, int channel);

/// Smallest value channel_magnitude can report when every contributing
/// entry sits at the per-entry floor `floor_mag`.
double channel_floor(double floor_mag, int channel);

/// Fits every channel of every transmitter from noise-free sweeps along the
/// ray from each transmitter toward `aim_point`, n log-spaced distances in
/// [d_min, d_max]. Distorters are ignored; crosstalk and the signal chain
/// are applied. Floor-clamped readings are skipped.
CalibrationSet factory_calibration(const Environment& env, const Vec3& aim_point,
                                   double d_min, double d_max, int n_samples);

/// Refits all channels from a seeded random `fraction` of the dataset using
/// ground-truth distances; fraction in (0, 1]. Readings with every entry at
/// the chain floor are skipped; a channel left with fewer than 2 samples
/// raises InsufficientDataError.
CalibrationSet local_recalibration(const Dataset& dataset, const Environment& env,
                                   double fraction, std::uint64_t seed);

}  // namespace magloc
