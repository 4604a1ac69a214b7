// Fingerprint positioning: regression from measurement-cycle features to
// coordinates, absorbing repeatable environmental distortion into the map.
#pragma once

#include "magloc/environment.hpp"
#include "magloc/localization.hpp"
#include "magloc/types.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <vector>

namespace magloc {

/// Per-transmitter-axis recovered magnitudes in slot order
/// (tx0.axis0, tx0.axis1, tx0.axis2, tx1.axis0, ...).
Eigen::VectorXd features_of(const MeasurementCycle& cycle);

/// Polynomial basis: per-feature powers 1..degree, then, for degree >= 2,
/// all pairwise products of distinct base features (i < j). degree in
/// {1, 2, 3}.
Eigen::VectorXd poly_expand(const Eigen::VectorXd& f, int degree);

/// Number of terms poly_expand emits for `base` features.
int poly_expand_size(int base, int degree);

/// Per-column affine map to zero mean, unit scale. Constant columns keep
/// scale 1 so the map stays invertible.
struct Standardizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;

  void fit(const Eigen::MatrixXd& columns);
  Eigen::VectorXd apply(const Eigen::VectorXd& row) const;
};

struct LassoFit {
  Eigen::VectorXd weights;
  double intercept = 0.0;
  int sweeps = 0;
};

/// Coordinate-descent minimizer of (1/2n)|y - Xw - c|^2 + lambda*|w|_1.
/// Columns are expected standardized; converged when the largest coordinate
/// change in a sweep drops below `tol`. Throws ConvergenceError carrying
/// the last weight iterate when `max_iter` sweeps are exhausted. The
/// unpenalized limit lambda = 0 is solved directly by least squares.
LassoFit lasso_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double lambda,
                   double tol = 1e-10, int max_iter = 10000);

enum class MapKind { kLasso, kPoly3Lasso };

struct FingerprintModel {
  MapKind kind = MapKind::kLasso;
  int degree = 1;
  int feature_count = 0;             // raw feature dimension
  Standardizer raw;                  // per raw feature
  Standardizer expanded;             // per expanded term
  Eigen::MatrixXd weights;           // 3 x expanded terms, one row per coordinate
  Vec3 intercepts = Vec3::Zero();
  double lambda = 0.0;
  double train_fraction = 0.0;
  std::uint64_t seed = 0;
  double held_out_median = 0.0;      // meters, over the non-training split
  bool conditioning_warning = false; // lambda = 0 with fewer rows than terms
};

struct BuildOptions {
  double lambda = 0.01;
  bool cross_validate = false;  // 5-fold search over a 10-step lambda ladder
  double tol = 1e-6;
  int max_iter = 300000;
};

/// Seeded split of the dataset, per-coordinate LASSO regressors fitted on
/// the training fraction (standardize raw, expand, standardize terms), and
/// the held-out median position error recorded on the remainder.
/// train_fraction in (0, 1).
FingerprintModel build_map(const Dataset& dataset, double train_fraction, MapKind kind,
                           std::uint64_t seed, const BuildOptions& options = {});

/// Fits a map on every cycle with nothing held out: train_fraction is
/// recorded as 1 and held_out_median as NaN. Used when the caller manages
/// its own evaluation split.
FingerprintModel fit_map(const Dataset& dataset, MapKind kind, std::uint64_t seed,
                         const BuildOptions& options = {});

/// Applies the map to one cycle. Throws SchemaError when the cycle's
/// feature count does not match the model.
PositionEstimate predict(const FingerprintModel& model, const MeasurementCycle& cycle);

}  // namespace magloc
