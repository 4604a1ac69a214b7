#include "magloc/field_model.hpp"

#include <cmath>

namespace magloc {

namespace {

void require_finite(const Vec3& v, const char* what) {
  if (!v.allFinite()) throw InvalidArgumentError(std::string(what) + " must be finite");
}

}  // namespace

void CoilSpec::validate() const {
  if (turns < 1) throw InvalidArgumentError("coil turns must be >= 1");
  if (!(radius > 0.0)) throw InvalidArgumentError("coil radius must be > 0");
  if (!(current > 0.0)) throw InvalidArgumentError("coil current must be > 0");
  require_finite(axis_unit, "coil axis");
  if (std::abs(axis_unit.norm() - 1.0) > 1e-12)
    throw InvalidArgumentError("coil axis must be a unit vector");
}

void TransmitterPose::validate() const {
  require_finite(origin, "transmitter origin");
  for (int i = 0; i < 3; ++i) {
    if (std::abs(axes.row(i).norm() - 1.0) > 1e-12)
      throw InvalidArgumentError("transmitter axis must be a unit vector");
    for (int j = i + 1; j < 3; ++j) {
      if (std::abs(axes.row(i).dot(axes.row(j))) > 1e-9)
        throw InvalidArgumentError("transmitter axes must be orthogonal");
    }
    coils[i].validate();
  }
}

void ReceiverPose::validate() const {
  require_finite(origin, "receiver origin");
  if (turns < 1) throw InvalidArgumentError("receiver turns must be >= 1");
  if (!(area > 0.0)) throw InvalidArgumentError("receiver coil area must be > 0");
  for (int i = 0; i < 3; ++i) {
    if (std::abs(axes.row(i).norm() - 1.0) > 1e-12)
      throw InvalidArgumentError("receiver axis must be a unit vector");
    for (int j = i + 1; j < 3; ++j) {
      if (std::abs(axes.row(i).dot(axes.row(j))) > 1e-9)
        throw InvalidArgumentError("receiver axes must be orthogonal");
    }
  }
}

double on_axis_field(const CoilSpec& coil, double z) {
  if (!std::isfinite(z)) throw InvalidArgumentError("axial distance must be finite");
  if (z < 0.0) throw InvalidArgumentError("axial distance must be >= 0");
  const double a2 = coil.radius * coil.radius;
  const double denom = std::pow(std::sqrt(a2 + z * z), 3);
  return kVacuumPermeability * coil.turns * a2 * coil.current / (2.0 * denom);
}

Vec3 point_dipole_field(const Vec3& origin, const Vec3& moment, const Vec3& point) {
  require_finite(origin, "dipole origin");
  require_finite(moment, "dipole moment");
  require_finite(point, "field point");
  const Vec3 rvec = point - origin;
  const double r = rvec.norm();
  if (r <= 0.0) throw SingularityError("field point coincides with the dipole origin");
  const Vec3 rhat = rvec / r;
  return (kVacuumPermeability / (4.0 * kPi)) *
         (3.0 * moment.dot(rhat) * rhat - moment) / (r * r * r);
}

Vec3 dipole_field(const Vec3& tx_origin, const Vec3& moment_axis,
                  const CoilSpec& coil, const Vec3& point) {
  const double r = (point - tx_origin).norm();
  if (r < kNearFieldRadiusFactor * coil.radius)
    throw SingularityError("field point inside the near-field cutoff (r < 3a)");
  return point_dipole_field(tx_origin, coil.moment() * moment_axis, point);
}

CouplingMatrix coupling_matrix(const TransmitterPose& tx, const ReceiverPose& rx,
                               double angular_freq) {
  const double gain = angular_freq * rx.turns * rx.area;
  CouplingMatrix out;
  for (int i = 0; i < 3; ++i) {
    const Vec3 b = dipole_field(tx.origin, tx.axis(i), tx.coils[i], rx.origin);
    for (int j = 0; j < 3; ++j) {
      out(i, j) = gain * b.dot(rx.axes.row(j).transpose());
    }
  }
  return out;
}

double axis_magnitude(const Vec3& row) {
  if (!row.allFinite()) throw InvalidArgumentError("coupling row must be finite");
  return row.norm();
}

}  // namespace magloc
