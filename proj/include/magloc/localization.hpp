// Position recovery from per-transmitter ranges: damped Gauss-Newton
// multilateration with octant-based disambiguation of mirror solutions.
#pragma once

#include "magloc/calibration.hpp"
#include "magloc/environment.hpp"
#include "magloc/types.hpp"

#include <optional>
#include <string>
#include <vector>

namespace magloc {

struct DistanceObservation {
  int transmitter_id = 0;   // index into the anchor list
  double distance = 0.0;    // meters
  double weight = 1.0;      // >= 0; zero drops the observation
};

enum class Method { kModel, kRecalibrated, kFingerprint };

std::string method_name(Method m);

struct PositionEstimate {
  Vec3 position = Vec3::Zero();
  double residual = 0.0;        // weighted RMS circle mismatch, meters
  Method method = Method::kModel;
  int observation_count = 0;
};

struct TrilaterateOptions {
  std::optional<double> fixed_z;  // solve in-plane with z pinned
};

/// Linearized least-squares seed (difference of spheres) refined by
/// Levenberg-damped Gauss-Newton. Throws GeometryError for degenerate
/// anchor sets and ConvergenceError (last iterate attached) if refinement
/// fails to settle.
PositionEstimate trilaterate(const std::vector<Vec3>& anchors,
                             const std::vector<DistanceObservation>& observations,
                             const TrilaterateOptions& options = {});

struct OctantFilterResult {
  std::vector<Vec3> candidates;
  bool consistent = true;   // false when the sign pattern carried no
                            // information or rejected every candidate
};

/// Keeps candidates whose octant in the transmitter frame matches the
/// cycle's coupling sign pattern for transmitter `tx_index`. Off-diagonal
/// entries of the reconstructed coupling fix the pairwise products of the
/// local coordinate signs (the dipole field is even under point reflection,
/// so only products are observable). Zero signs match anything. The
/// receiver frame is assumed world-aligned. If every candidate is rejected
/// the original list is returned with `consistent` lowered.
OctantFilterResult octant_filter(const std::vector<Vec3>& candidates,
                                 const MeasurementCycle& cycle, int tx_index,
                                 const TransmitterPose& tx);

enum class FusionMode {
  kCombined,         // range from the combined-channel magnitude
  kInverseVariance,  // inverse-variance mean of the three per-axis ranges
};

struct EstimateOptions {
  std::optional<double> fixed_z;
  FusionMode fusion = FusionMode::kCombined;
  Method method = Method::kModel;
  // Per-entry chain floor; transmitters with every entry railed are dropped.
  std::optional<double> floor_magnitude;
};

/// Full single-cycle pipeline: per-transmitter range recovery via the
/// calibration set, multilateration (both mirror candidates when the
/// anchors are z-coplanar and no fixed z is given), octant filtering, best
/// candidate returned. Throws InsufficientDataError with fewer than 3
/// usable transmitters.
PositionEstimate estimate_position(const MeasurementCycle& cycle,
                                   const CalibrationSet& cals,
                                   const std::vector<TransmitterPose>& anchors,
                                   const EstimateOptions& options = {});

}  // namespace magloc
