#include "magloc/localization.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>

namespace magloc {

namespace {

constexpr double kInitialLambda = 1e-3;
constexpr double kMaxLambda = 1e12;
constexpr double kStepTolerance = 1e-9;
constexpr int kMaxIterations = 100;
// Fraction of the largest reconstructed coupling entry below which a sign
// is treated as unknown.
constexpr double kSignDeadZone = 0.02;

struct Solver {
  const std::vector<Vec3>& anchors;
  const std::vector<DistanceObservation>& obs;
  std::optional<double> fixed_z;

  int dims() const { return fixed_z ? 2 : 3; }

  double weighted_sq(const Vec3& p) const {
    double f = 0.0;
    for (const auto& o : obs) {
      const double miss = (p - anchors[o.transmitter_id]).norm() - o.distance;
      f += o.weight * miss * miss;
    }
    return f;
  }

  double weight_sum() const {
    double s = 0.0;
    for (const auto& o : obs) s += o.weight;
    return s;
  }

  double rms(const Vec3& p) const {
    const double sw = weight_sum();
    return sw > 0.0 ? std::sqrt(weighted_sq(p) / sw) : 0.0;
  }

  // Difference-of-spheres linear seed, referenced to the shortest range.
  Vec3 linear_seed() const {
    std::size_t ref = 0;
    for (std::size_t k = 1; k < obs.size(); ++k) {
      if (obs[k].distance < obs[ref].distance) ref = k;
    }
    const Vec3 a0 = anchors[obs[ref].transmitter_id];
    const double d0 = obs[ref].distance;

    const int cols = dims();
    Eigen::MatrixXd m(static_cast<int>(obs.size()) - 1, cols);
    Eigen::VectorXd rhs(static_cast<int>(obs.size()) - 1);
    int row = 0;
    for (std::size_t k = 0; k < obs.size(); ++k) {
      if (k == ref) continue;
      const Vec3 ai = anchors[obs[k].transmitter_id];
      const double di = obs[k].distance;
      double b = (ai.squaredNorm() - a0.squaredNorm()) - (di * di - d0 * d0);
      m(row, 0) = 2.0 * (ai.x() - a0.x());
      m(row, 1) = 2.0 * (ai.y() - a0.y());
      if (fixed_z) {
        b -= 2.0 * (ai.z() - a0.z()) * *fixed_z;
      } else {
        m(row, 2) = 2.0 * (ai.z() - a0.z());
      }
      rhs(row) = b;
      ++row;
    }
    const Eigen::VectorXd sol = m.colPivHouseholderQr().solve(rhs);
    Vec3 p;
    p.x() = sol(0);
    p.y() = sol(1);
    p.z() = fixed_z ? *fixed_z : sol(2);
    return p;
  }

  Vec3 refine(Vec3 p) const {
    const int cols = dims();
    double f = weighted_sq(p);
    double lambda = kInitialLambda;

    for (int iter = 0; iter < kMaxIterations; ++iter) {
      Eigen::MatrixXd jac(static_cast<int>(obs.size()), cols);
      Eigen::VectorXd res(static_cast<int>(obs.size()));
      for (std::size_t k = 0; k < obs.size(); ++k) {
        const Vec3 e = p - anchors[obs[k].transmitter_id];
        const double len = std::max(e.norm(), 1e-12);
        const double sw = std::sqrt(obs[k].weight);
        res(static_cast<int>(k)) = sw * (len - obs[k].distance);
        jac(static_cast<int>(k), 0) = sw * e.x() / len;
        jac(static_cast<int>(k), 1) = sw * e.y() / len;
        if (!fixed_z) jac(static_cast<int>(k), 2) = sw * e.z() / len;
      }
      const Eigen::MatrixXd h = jac.transpose() * jac;
      const Eigen::VectorXd g = jac.transpose() * res;
      if (g.norm() < 1e-15) return p;

      const Eigen::MatrixXd damped =
          h + lambda * (Eigen::MatrixXd(h.diagonal().asDiagonal()) +
                        1e-30 * Eigen::MatrixXd::Identity(cols, cols));
      const Eigen::VectorXd step = damped.ldlt().solve(-g);

      Vec3 next = p;
      next.x() += step(0);
      next.y() += step(1);
      if (!fixed_z) next.z() += step(2);

      const double f_next = step.allFinite() ? weighted_sq(next)
                                             : std::numeric_limits<double>::infinity();
      if (std::isfinite(f_next) && f_next <= f) {
        p = next;
        f = f_next;
        lambda = std::max(lambda / 10.0, 1e-12);
        if (step.norm() < kStepTolerance) return p;
      } else {
        lambda *= 10.0;
        if (lambda > kMaxLambda)
          throw ConvergenceError("multilateration damping exhausted", p);
      }
    }
    throw ConvergenceError("multilateration failed to converge", p);
  }
};

std::vector<DistanceObservation> usable_observations(
    const std::vector<Vec3>& anchors, const std::vector<DistanceObservation>& raw) {
  std::vector<DistanceObservation> obs;
  for (const auto& o : raw) {
    if (o.transmitter_id < 0 || o.transmitter_id >= static_cast<int>(anchors.size()))
      throw InvalidArgumentError("observation references an unknown anchor");
    if (!(o.distance >= 0.0) || !std::isfinite(o.distance))
      throw InvalidArgumentError("observation distance must be finite and >= 0");
    if (!(o.weight >= 0.0) || !std::isfinite(o.weight))
      throw InvalidArgumentError("observation weight must be finite and >= 0");
    if (o.weight > 0.0) obs.push_back(o);
  }
  return obs;
}

// Eigenvalue ratio test on the anchor spread, in the solve's free dimensions.
void require_nondegenerate(const std::vector<Vec3>& anchors,
                           const std::vector<DistanceObservation>& obs,
                           bool planar) {
  const int cols = planar ? 2 : 3;
  Vec3 mean = Vec3::Zero();
  for (const auto& o : obs) mean += anchors[o.transmitter_id];
  mean /= static_cast<double>(obs.size());

  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(cols, cols);
  for (const auto& o : obs) {
    const Vec3 e = anchors[o.transmitter_id] - mean;
    const Eigen::VectorXd v = e.head(cols);
    cov += v * v.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  const double largest = eig.eigenvalues()(cols - 1);
  const double smallest = eig.eigenvalues()(0);
  if (!(largest > 0.0) || smallest < 1e-12 * largest)
    throw GeometryError(planar ? "anchors are collinear in the solve plane"
                               : "anchors are coplanar; full 3-D solve needs spread");
}

PositionEstimate finish(const Solver& solver, const Vec3& p, int count) {
  PositionEstimate est;
  est.position = p;
  est.residual = solver.rms(p);
  est.observation_count = count;
  return est;
}

}  // namespace

std::string method_name(Method m) {
  switch (m) {
    case Method::kModel: return "model";
    case Method::kRecalibrated: return "recalibrated";
    case Method::kFingerprint: return "fingerprint";
  }
  throw InvalidArgumentError("unknown method tag");
}

PositionEstimate trilaterate(const std::vector<Vec3>& anchors,
                             const std::vector<DistanceObservation>& observations,
                             const TrilaterateOptions& options) {
  for (const auto& a : anchors) {
    if (!a.allFinite()) throw InvalidArgumentError("anchor positions must be finite");
  }
  const auto obs = usable_observations(anchors, observations);
  if (obs.size() < 3) throw GeometryError("multilateration needs at least 3 anchors");
  if (!options.fixed_z && obs.size() < 4)
    throw GeometryError("full 3-D multilateration needs at least 4 anchors");

  Solver solver{anchors, obs, options.fixed_z};
  for (const auto& o : obs) {
    if (o.distance == 0.0)
      return finish(solver, anchors[o.transmitter_id], static_cast<int>(obs.size()));
  }
  require_nondegenerate(anchors, obs, options.fixed_z.has_value());
  const Vec3 refined = solver.refine(solver.linear_seed());
  return finish(solver, refined, static_cast<int>(obs.size()));
}

namespace {

// Pairwise products of local coordinate signs observable in the coupling's
// off-diagonal entries; 0 marks entries inside the dead zone.
struct SignProducts {
  int xy = 0, xz = 0, yz = 0;
  bool informative() const { return xy != 0 || xz != 0 || yz != 0; }
};

SignProducts measured_products(const MeasurementCycle::PerTransmitter& slot,
                               const TransmitterPose& tx) {
  Mat3 coupling;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      coupling(i, j) = slot.signs[i][j] * slot.magnitudes(i, j);
    }
  }
  // With a world-aligned receiver, C = diag(G) * (3 rr^T - I) * axes, so
  // C * axes^T recovers the transmitter-local field pattern up to positive
  // per-row factors.
  const Mat3 local = coupling * tx.axes.transpose();
  const double scale = local.cwiseAbs().maxCoeff();
  auto entry_sign = [&](int i, int j) -> int {
    const double v = local(i, j) + local(j, i);
    if (scale <= 0.0 || std::abs(v) < 2.0 * kSignDeadZone * scale) return 0;
    return v > 0.0 ? +1 : -1;
  };
  return {entry_sign(0, 1), entry_sign(0, 2), entry_sign(1, 2)};
}

bool octant_consistent(const Vec3& candidate, const SignProducts& m,
                       const TransmitterPose& tx) {
  const Vec3 local = tx.axes * (candidate - tx.origin);
  auto coord_sign = [&](int k) -> int {
    if (std::abs(local(k)) < 1e-12) return 0;
    return local(k) > 0.0 ? +1 : -1;
  };
  const int sx = coord_sign(0), sy = coord_sign(1), sz = coord_sign(2);
  auto match = [](int measured, int cand) {
    return measured == 0 || cand == 0 || measured == cand;
  };
  return match(m.xy, sx * sy) && match(m.xz, sx * sz) && match(m.yz, sy * sz);
}

}  // namespace

OctantFilterResult octant_filter(const std::vector<Vec3>& candidates,
                                 const MeasurementCycle& cycle, int tx_index,
                                 const TransmitterPose& tx) {
  if (candidates.empty())
    throw InvalidArgumentError("octant filter needs at least one candidate");
  if (tx_index < 0 || tx_index >= static_cast<int>(cycle.transmitters.size()))
    throw InvalidArgumentError("transmitter index out of range for this cycle");

  const SignProducts products = measured_products(cycle.transmitters[tx_index], tx);
  if (!products.informative()) return {candidates, false};

  std::vector<Vec3> kept;
  for (const auto& c : candidates) {
    if (octant_consistent(c, products, tx)) kept.push_back(c);
  }
  if (kept.empty()) return {candidates, false};
  return {std::move(kept), true};
}

namespace {

struct FusedRange {
  int tx = 0;
  double distance = 0.0;
  double weight = 1.0;
};

std::optional<FusedRange> fuse_ranges(const MeasurementCycle::PerTransmitter& slot,
                                      const CalibrationSet::PerTransmitter& cal,
                                      int tx, const EstimateOptions& opt) {
  if (opt.fusion == FusionMode::kCombined) {
    const double m = channel_magnitude(slot.magnitudes, kCombinedChannel);
    if (opt.floor_magnitude &&
        m <= channel_floor(*opt.floor_magnitude, kCombinedChannel) * (1.0 + 1e-6))
      return std::nullopt;
    const double d = magnitude_to_distance(cal.combined, m);
    const double sigma = std::max(cal.combined.residual_rms, 1e-6) * d;
    return FusedRange{tx, d, 1.0 / (sigma * sigma)};
  }

  double num = 0.0, den = 0.0;
  for (int i = 0; i < 3; ++i) {
    const double m = channel_magnitude(slot.magnitudes, i);
    if (opt.floor_magnitude &&
        m <= channel_floor(*opt.floor_magnitude, i) * (1.0 + 1e-6))
      continue;
    const double d = magnitude_to_distance(cal.axis[i], m);
    const double sigma = std::max(cal.axis[i].residual_rms, 1e-6) * d;
    const double w = 1.0 / (sigma * sigma);
    num += w * d;
    den += w;
  }
  if (den <= 0.0) return std::nullopt;
  return FusedRange{tx, num / den, den};
}

}  // namespace

PositionEstimate estimate_position(const MeasurementCycle& cycle,
                                   const CalibrationSet& cals,
                                   const std::vector<TransmitterPose>& anchors,
                                   const EstimateOptions& options) {
  if (cycle.transmitters.size() != anchors.size() ||
      cals.transmitters.size() != anchors.size())
    throw SchemaError("cycle, calibration set and anchor list must align");

  std::vector<DistanceObservation> obs;
  std::vector<int> used;
  for (std::size_t t = 0; t < anchors.size(); ++t) {
    const auto fused = fuse_ranges(cycle.transmitters[t], cals.transmitters[t],
                                   static_cast<int>(t), options);
    if (!fused) continue;
    obs.push_back({fused->tx, fused->distance, fused->weight});
    used.push_back(fused->tx);
  }
  if (obs.size() < 3)
    throw InsufficientDataError("fewer than 3 usable transmitters in this cycle");

  std::vector<Vec3> positions(anchors.size());
  for (std::size_t t = 0; t < anchors.size(); ++t) positions[t] = anchors[t].origin;

  std::vector<PositionEstimate> candidates;
  if (options.fixed_z) {
    candidates.push_back(trilaterate(positions, obs, {options.fixed_z}));
  } else {
    double z_lo = positions[used.front()].z(), z_hi = z_lo;
    for (int t : used) {
      z_lo = std::min(z_lo, positions[t].z());
      z_hi = std::max(z_hi, positions[t].z());
    }
    if (z_hi - z_lo < 1e-9) {
      // Coplanar anchors: build both mirror candidates about the plane.
      const double plane_z = positions[used.front()].z();
      const PositionEstimate planar = trilaterate(positions, obs, {plane_z});
      double num = 0.0, den = 0.0;
      for (const auto& o : obs) {
        const double horiz_sq =
            (planar.position - positions[o.transmitter_id]).squaredNorm();
        num += o.weight * (o.distance * o.distance - horiz_sq);
        den += o.weight;
      }
      const double h = std::sqrt(std::max(num / den, 0.0));
      Solver solver{positions, obs, std::nullopt};
      for (const double dz : {h, -h}) {
        Vec3 start = planar.position;
        start.z() = plane_z + dz;
        candidates.push_back(
            finish(solver, solver.refine(start), static_cast<int>(obs.size())));
        if (h == 0.0) break;
      }
    } else {
      candidates.push_back(trilaterate(positions, obs, {}));
    }
  }

  std::vector<SignProducts> products;
  products.reserve(used.size());
  for (int t : used) {
    products.push_back(measured_products(cycle.transmitters[t], anchors[t]));
  }
  auto fully_consistent = [&](const Vec3& p) {
    for (std::size_t k = 0; k < used.size(); ++k) {
      if (!octant_consistent(p, products[k], anchors[used[k]])) return false;
    }
    return true;
  };

  const PositionEstimate* best = nullptr;
  for (const auto& c : candidates) {
    if (fully_consistent(c.position) && (!best || c.residual < best->residual))
      best = &c;
  }
  if (!best) {
    for (const auto& c : candidates) {
      if (!best || c.residual < best->residual) best = &c;
    }
  }
  PositionEstimate out = *best;
  out.method = options.method;
  return out;
}

}  // namespace magloc
