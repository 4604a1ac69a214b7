#include "magloc/environment.hpp"

#include <cmath>
#include <thread>

namespace magloc {

void CrosstalkMatrix::validate() const {
  if (!mix.allFinite()) throw InvalidArgumentError("crosstalk matrix must be finite");
  for (int j = 0; j < 3; ++j) {
    if (mix(j, j) == 0.0)
      throw InvalidArgumentError("crosstalk matrix diagonal must be nonzero");
  }
}

void Distorter::validate() const {
  if (!position.allFinite()) throw InvalidArgumentError("distorter position must be finite");
  if (!polarizability.allFinite())
    throw InvalidArgumentError("distorter polarizability must be finite");
  const double asym = (polarizability - polarizability.transpose()).cwiseAbs().maxCoeff();
  const double scale = std::max(1.0, polarizability.cwiseAbs().maxCoeff());
  if (asym > 1e-12 * scale)
    throw InvalidArgumentError("distorter polarizability must be symmetric");
}

void Environment::validate() const {
  if (transmitters.empty())
    throw InvalidArgumentError("environment needs at least one transmitter");
  for (const auto& tx : transmitters) {
    tx.pose.validate();
    tx.crosstalk.validate();
  }
  for (std::size_t i = 0; i < transmitters.size(); ++i) {
    for (std::size_t j = i + 1; j < transmitters.size(); ++j) {
      if (transmitters[i].pose.origin == transmitters[j].pose.origin)
        throw InvalidArgumentError("transmitter origins must be pairwise distinct");
    }
  }
  for (const auto& d : distorters) d.validate();
  receiver.validate();
  chain.validate();
  if (!(excitation_freq > 0.0) || !std::isfinite(excitation_freq))
    throw InvalidArgumentError("excitation frequency must be positive");
}

CouplingMatrix apply_crosstalk(const CrosstalkMatrix& xtalk, const CouplingMatrix& ideal) {
  return xtalk.mix * ideal;
}

std::array<double, 3> crosstalk_ratio(const CrosstalkMatrix& xtalk) {
  std::array<double, 3> out{};
  for (int j = 0; j < 3; ++j) {
    const double diag = std::abs(xtalk.mix(j, j));
    if (diag == 0.0) throw DomainError("crosstalk ratio undefined for zero diagonal");
    double sum = 0.0;
    for (int i = 0; i < 3; ++i) {
      if (i != j) sum += std::abs(xtalk.mix(i, j));
    }
    out[j] = 100.0 * sum / (2.0 * diag);
  }
  return out;
}

Vec3 total_field(const Environment& env, int tx_index, int axis_index, const Vec3& point) {
  if (tx_index < 0 || tx_index >= static_cast<int>(env.transmitters.size()))
    throw InvalidArgumentError("transmitter index out of range");
  if (axis_index < 0 || axis_index > 2)
    throw InvalidArgumentError("axis index out of range");
  const TransmitterPose& pose = env.transmitters[tx_index].pose;
  Vec3 field = dipole_field(pose.origin, pose.axis(axis_index),
                            pose.coils[axis_index], point);
  for (const auto& d : env.distorters) {
    const Vec3 incident = dipole_field(pose.origin, pose.axis(axis_index),
                                       pose.coils[axis_index], d.position);
    const Vec3 induced = (d.polarizability * incident) / kVacuumPermeability;
    field += point_dipole_field(d.position, induced, point);
  }
  return field;
}

MeasurementCycle run_cycle(const Environment& env, const ReceiverPose& rx, Rng& rng) {
  env.validate();
  rx.validate();
  const double gain = 2.0 * kPi * env.excitation_freq * rx.turns * rx.area;
  MeasurementCycle cycle;
  cycle.true_position = rx.origin;
  cycle.transmitters.resize(env.transmitters.size());
  for (std::size_t t = 0; t < env.transmitters.size(); ++t) {
    CouplingMatrix ideal;
    for (int i = 0; i < 3; ++i) {
      const Vec3 b = total_field(env, static_cast<int>(t), i, rx.origin);
      for (int j = 0; j < 3; ++j) {
        ideal(i, j) = gain * b.dot(rx.axes.row(j).transpose());
      }
    }
    const CouplingMatrix mixed = apply_crosstalk(env.transmitters[t].crosstalk, ideal);
    auto& slot = cycle.transmitters[t];
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        const double c = mixed(i, j);
        slot.signs[i][j] = (c > 0.0) - (c < 0.0);
        slot.magnitudes(i, j) =
            sense(env.chain, std::abs(c), env.excitation_freq, rng).magnitude;
      }
    }
  }
  return cycle;
}

std::vector<Vec3> generate_grid(const Rect& bounds, double spacing, double height) {
  if (!(spacing > 0.0) || !std::isfinite(spacing))
    throw InvalidArgumentError("grid spacing must be positive");
  if (!std::isfinite(bounds.x0) || !std::isfinite(bounds.y0) ||
      !std::isfinite(bounds.x1) || !std::isfinite(bounds.y1) || !std::isfinite(height))
    throw InvalidArgumentError("grid bounds must be finite");
  if (bounds.x1 < bounds.x0 || bounds.y1 < bounds.y0)
    throw DomainError("grid bounds are degenerate");
  const int nx = static_cast<int>(std::floor((bounds.x1 - bounds.x0) / spacing + 1e-9)) + 1;
  const int ny = static_cast<int>(std::floor((bounds.y1 - bounds.y0) / spacing + 1e-9)) + 1;
  std::vector<Vec3> points;
  points.reserve(static_cast<std::size_t>(nx) * ny);
  for (int iy = 0; iy < ny; ++iy) {
    for (int ix = 0; ix < nx; ++ix) {
      points.emplace_back(bounds.x0 + ix * spacing, bounds.y0 + iy * spacing, height);
    }
  }
  return points;
}

Dataset generate_dataset(const Environment& env, const std::vector<Vec3>& positions,
                         const std::string& scenario_id, std::uint64_t seed,
                         int workers) {
  env.validate();
  if (workers < 1) throw InvalidArgumentError("worker count must be >= 1");
  Dataset out;
  out.scenario_id = scenario_id;
  out.seed = seed;
  out.cycles.resize(positions.size());

  auto fill = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t i = begin; i < positions.size(); i += stride) {
      ReceiverPose rx = env.receiver;
      rx.origin = positions[i];
      Rng rng = Rng::stream(seed, i);
      out.cycles[i] = run_cycle(env, rx, rng);
      out.cycles[i].slot_index = static_cast<std::int64_t>(i);
    }
  };

  const int n = std::min<int>(workers, positions.size() > 0 ? static_cast<int>(positions.size()) : 1);
  if (n <= 1) {
    fill(0, 1);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(n);
    for (int w = 0; w < n; ++w) pool.emplace_back(fill, static_cast<std::size_t>(w), n);
    for (auto& th : pool) th.join();
  }
  return out;
}

}  // namespace magloc
