// Scenario assembly and TDMA measurement simulation: transmitter
// constellations, inter-axis crosstalk, environmental distorters, receiver
// grids and full measurement cycles.
#pragma once

#include "magloc/field_model.hpp"
#include "magloc/rng.hpp"
#include "magloc/signal_chain.hpp"
#include "magloc/types.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace magloc {

/// Row-mixing matrix: when axis i is excited, the observed row is
/// sum_k xtalk(i,k) * ideal_row_k. Diagonal near 1.
struct CrosstalkMatrix {
  Mat3 mix = Mat3::Identity();

  void validate() const;
};

/// Conductive or ferromagnetic object modeled as an induced point dipole.
/// The induced moment is alpha * B_incident / mu0, alpha in m^3 (symmetric;
/// negative eigenvalues describe an eddy-current response).
struct Distorter {
  Vec3 position = Vec3::Zero();
  Mat3 polarizability = Mat3::Zero();

  void validate() const;
};

struct Transmitter {
  TransmitterPose pose;
  CrosstalkMatrix crosstalk;
};

/// Axis-aligned rectangle on the floor plan, [x0, x1] x [y0, y1].
struct Rect {
  double x0 = 0.0, y0 = 0.0;
  double x1 = 0.0, y1 = 0.0;
};

struct Environment {
  std::vector<Transmitter> transmitters;
  std::vector<Distorter> distorters;
  ReceiverPose receiver;           // orientation + coil constants; origin set per point
  SignalChain chain;
  double excitation_freq = 20e3;   // Hz

  void validate() const;
};

/// One TDMA sweep at a fixed receiver position: per transmitter, the 3x3
/// recovered magnitudes and the sign pattern of the pre-noise couplings.
struct MeasurementCycle {
  struct PerTransmitter {
    Mat3 magnitudes = Mat3::Zero();            // volts, >= chain floor
    std::array<std::array<int, 3>, 3> signs{};  // entries in {-1, 0, +1}
  };
  std::optional<Vec3> true_position;
  std::vector<PerTransmitter> transmitters;
  std::int64_t slot_index = 0;
};

struct Dataset {
  std::string scenario_id;
  std::uint64_t seed = 0;
  std::vector<MeasurementCycle> cycles;
};

/// Mixes the rows of an ideal coupling matrix.
CouplingMatrix apply_crosstalk(const CrosstalkMatrix& xtalk, const CouplingMatrix& ideal);

/// Per-column mean of off-diagonal magnitudes over that column's diagonal,
/// in percent. Throws DomainError on a zero diagonal.
std::array<double, 3> crosstalk_ratio(const CrosstalkMatrix& xtalk);

/// Primary dipole field of transmitter axis `axis_index` plus the
/// single-scattering contribution of every distorter.
Vec3 total_field(const Environment& env, int tx_index, int axis_index, const Vec3& point);

/// Runs one full TDMA cycle at `rx` in fixed slot order
/// (tx0.axis0, tx0.axis1, tx0.axis2, tx1.axis0, ...).
MeasurementCycle run_cycle(const Environment& env, const ReceiverPose& rx, Rng& rng);

/// Closed lattice over `bounds` at `spacing`, both edges included,
/// row-major (y outer, x inner), all points at `height`.
std::vector<Vec3> generate_grid(const Rect& bounds, double spacing, double height);

/// Runs one cycle per position; each position draws from its own stream
/// derived from (seed, index), so results are order-independent.
Dataset generate_dataset(const Environment& env, const std::vector<Vec3>& positions,
                         const std::string& scenario_id, std::uint64_t seed,
                         int workers = 1);

}  // namespace magloc
