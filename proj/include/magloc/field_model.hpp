// Quasi-static magnetic field of excited coil axes and the voltages they
// induce on a 3-axis receiver.
//
// Conventions:
//  - SI units throughout: meters, amperes, teslas, volts, rad/s.
//  - Off-axis fields use the point-dipole model with moment m = N*I*pi*a^2.
//    Points closer than kNearFieldRadiusFactor * a to a source are rejected
//    (the dipole approximation does not hold there).
//  - A coupling matrix row is one transmitter axis, a column is one receiver
//    coil; entries are signed induced-voltage amplitudes.
#pragma once

#include "magloc/types.hpp"

namespace magloc {

/// Dipole model validity cutoff, in units of coil radius.
inline constexpr double kNearFieldRadiusFactor = 3.0;

/// Single excitation coil: N turns of radius a carrying current I.
struct CoilSpec {
  int turns = 1;            // N
  double radius = 0.1;      // a, meters
  double current = 1.0;     // I, amperes
  Vec3 axis_unit = Vec3::UnitZ();

  /// Magnetic dipole moment magnitude N*I*pi*a^2 [A*m^2].
  double moment() const { return turns * current * kPi * radius * radius; }

  void validate() const;
};

/// Three mutually orthogonal excitation coils at one anchor.
struct TransmitterPose {
  Vec3 origin = Vec3::Zero();
  Mat3 axes = Mat3::Identity();   // rows are the three axis directions
  CoilSpec coils[3];

  Vec3 axis(int i) const { return axes.row(i).transpose(); }
  void validate() const;
};

/// 3-axis sensing coil; all three coils share turns and area here.
struct ReceiverPose {
  Vec3 origin = Vec3::Zero();
  Mat3 axes = Mat3::Identity();   // rows are the three coil normals
  int turns = 400;
  double area = 2.0e-3;           // m^2 per coil

  void validate() const;
};

/// Signed induced-voltage amplitudes; row = transmitter axis, col = receiver coil.
using CouplingMatrix = Mat3;

/// On-axis field magnitude of a circular coil at axial distance z:
///   B = mu0 * N * a^2 * I / (2 * sqrt(a^2 + z^2)^3)
double on_axis_field(const CoilSpec& coil, double z);

/// Field of an arbitrary point dipole with moment vector `moment` [A*m^2]:
///   B = (mu0 / 4pi) * (3 (m.rhat) rhat - m) / r^3.
/// Throws SingularityError when `point` coincides with `origin`.
Vec3 point_dipole_field(const Vec3& origin, const Vec3& moment, const Vec3& point);

/// Point-dipole field of one transmitter coil at `point` (world frame),
/// with m = N*I*pi*a^2 * axis. Throws SingularityError inside the
/// near-field cutoff.
Vec3 dipole_field(const Vec3& tx_origin, const Vec3& moment_axis,
                  const CoilSpec& coil, const Vec3& point);

/// Induced-voltage amplitudes between every transmitter axis and receiver
/// coil: entry (i, j) = w * N_rx * A_rx * (B_i(rx.origin) . rx_axis_j).
CouplingMatrix coupling_matrix(const TransmitterPose& tx, const ReceiverPose& rx,
                               double angular_freq);

/// Euclidean norm of one coupling row: the per-transmitter-axis magnitude,
/// invariant under receiver orientation.
double axis_magnitude(const Vec3& row);

}  // namespace magloc
