#include "magloc/fingerprint.hpp"

#include "magloc/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <thread>

namespace magloc {

Eigen::VectorXd features_of(const MeasurementCycle& cycle) {
  Eigen::VectorXd f(3 * static_cast<int>(cycle.transmitters.size()));
  int k = 0;
  for (const auto& slot : cycle.transmitters) {
    for (int i = 0; i < 3; ++i) f(k++) = channel_magnitude(slot.magnitudes, i);
  }
  return f;
}

int poly_expand_size(int base, int degree) {
  return base * degree + (degree >= 2 ? base * (base - 1) / 2 : 0);
}

Eigen::VectorXd poly_expand(const Eigen::VectorXd& f, int degree) {
  if (degree < 1 || degree > 3)
    throw InvalidArgumentError("expansion degree must be 1, 2 or 3");
  const int base = static_cast<int>(f.size());
  Eigen::VectorXd out(poly_expand_size(base, degree));
  int k = 0;
  for (int p = 1; p <= degree; ++p) {
    for (int i = 0; i < base; ++i) out(k++) = std::pow(f(i), p);
  }
  if (degree >= 2) {
    for (int i = 0; i < base; ++i) {
      for (int j = i + 1; j < base; ++j) out(k++) = f(i) * f(j);
    }
  }
  return out;
}

void Standardizer::fit(const Eigen::MatrixXd& columns) {
  if (columns.rows() < 1) throw InvalidArgumentError("standardizer needs rows");
  mean = columns.colwise().mean();
  scale.resize(columns.cols());
  for (int j = 0; j < columns.cols(); ++j) {
    const double var =
        (columns.col(j).array() - mean(j)).square().sum() / columns.rows();
    const double sd = std::sqrt(var);
    scale(j) = sd > 0.0 ? sd : 1.0;
  }
}

Eigen::VectorXd Standardizer::apply(const Eigen::VectorXd& row) const {
  if (row.size() != mean.size())
    throw SchemaError("feature length does not match the standardizer");
  return (row - mean).cwiseQuotient(scale);
}

namespace {

double soft_threshold(double v, double t) {
  if (v > t) return v - t;
  if (v < -t) return v + t;
  return 0.0;
}

LassoFit descend(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double lambda,
                 double tol, int max_iter, Eigen::VectorXd w) {
  const int n = static_cast<int>(x.rows());
  const int p = static_cast<int>(x.cols());
  Eigen::VectorXd col_sq(p);
  for (int j = 0; j < p; ++j) col_sq(j) = x.col(j).squaredNorm() / n;

  double c = (y - x * w).mean();
  Eigen::VectorXd r = y - x * w - Eigen::VectorXd::Constant(n, c);

  for (int sweep = 1; sweep <= max_iter; ++sweep) {
    double max_change = 0.0;
    for (int j = 0; j < p; ++j) {
      if (col_sq(j) == 0.0) continue;
      const double rho = x.col(j).dot(r) / n + col_sq(j) * w(j);
      const double next = soft_threshold(rho, lambda) / col_sq(j);
      const double delta = next - w(j);
      if (delta != 0.0) {
        r -= delta * x.col(j);
        w(j) = next;
        max_change = std::max(max_change, std::abs(delta));
      }
    }
    const double shift = r.mean();
    if (shift != 0.0) {
      c += shift;
      r.array() -= shift;
      max_change = std::max(max_change, std::abs(shift));
    }
    if (max_change < tol) return {std::move(w), c, sweep};
  }
  throw ConvergenceError("lasso coordinate descent exhausted its sweep budget", w);
}

}  // namespace

LassoFit lasso_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double lambda,
                   double tol, int max_iter) {
  if (x.rows() < 2) throw InvalidArgumentError("lasso needs at least 2 rows");
  if (x.rows() != y.size())
    throw InvalidArgumentError("design and target row counts differ");
  if (!(lambda >= 0.0) || !std::isfinite(lambda))
    throw InvalidArgumentError("lambda must be finite and >= 0");
  if (!(tol > 0.0)) throw InvalidArgumentError("tolerance must be positive");
  if (max_iter < 1) throw InvalidArgumentError("max_iter must be >= 1");
  if (lambda == 0.0) {
    // Unpenalized limit: solve the least-squares problem directly instead
    // of iterating, which stays exact on ill-conditioned designs.
    const Eigen::RowVectorXd mu = x.colwise().mean();
    const double ybar = y.mean();
    const Eigen::MatrixXd xc = x.rowwise() - mu;
    const Eigen::VectorXd w =
        xc.colPivHouseholderQr().solve((y.array() - ybar).matrix());
    return {w, ybar - mu.dot(w), 0};
  }
  return descend(x, y, lambda, tol, max_iter,
                 Eigen::VectorXd::Zero(x.cols()));
}

namespace {

struct DesignSet {
  Standardizer raw;
  Standardizer expanded;
  Eigen::MatrixXd xs;  // standardized expanded design
};

DesignSet make_design(const Eigen::MatrixXd& raw_rows, int degree) {
  DesignSet d;
  d.raw.fit(raw_rows);
  Eigen::MatrixXd e(raw_rows.rows(),
                    poly_expand_size(static_cast<int>(raw_rows.cols()), degree));
  for (int i = 0; i < raw_rows.rows(); ++i) {
    e.row(i) =
        poly_expand(d.raw.apply(raw_rows.row(i).transpose()), degree).transpose();
  }
  d.expanded.fit(e);
  d.xs.resize(e.rows(), e.cols());
  for (int i = 0; i < e.rows(); ++i) {
    d.xs.row(i) = d.expanded.apply(e.row(i).transpose()).transpose();
  }
  return d;
}

Vec3 apply_design(const DesignSet& d, int degree, const Eigen::MatrixXd& weights,
                  const Vec3& intercepts, const Eigen::VectorXd& raw) {
  const Eigen::VectorXd xs =
      d.expanded.apply(poly_expand(d.raw.apply(raw), degree));
  Vec3 out;
  for (int k = 0; k < 3; ++k) out(k) = weights.row(k).dot(xs) + intercepts(k);
  return out;
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Mean held-out position error of a 5-fold split at one lambda, fitting
// standardizers per fold.
double cv_error(const Eigen::MatrixXd& feats, const Eigen::MatrixXd& targets,
                int degree, double lambda, const BuildOptions& opt) {
  const int n = static_cast<int>(feats.rows());
  const int folds = std::min(5, n);
  double total = 0.0;
  int counted = 0;
  for (int f = 0; f < folds; ++f) {
    std::vector<int> train, test;
    for (int i = 0; i < n; ++i) (i % folds == f ? test : train).push_back(i);
    if (train.size() < 2 || test.empty()) continue;

    Eigen::MatrixXd ftrain(train.size(), feats.cols());
    Eigen::MatrixXd ttrain(train.size(), 3);
    for (std::size_t i = 0; i < train.size(); ++i) {
      ftrain.row(i) = feats.row(train[i]);
      ttrain.row(i) = targets.row(train[i]);
    }
    const DesignSet d = make_design(ftrain, degree);
    Eigen::MatrixXd w(3, d.xs.cols());
    Vec3 c;
    for (int k = 0; k < 3; ++k) {
      const LassoFit fit =
          lasso_fit(d.xs, ttrain.col(k), lambda, opt.tol, opt.max_iter);
      w.row(k) = fit.weights;
      c(k) = fit.intercept;
    }
    for (int i : test) {
      const Vec3 pred = apply_design(d, degree, w, c, feats.row(i).transpose());
      total += (pred - Vec3(targets.row(i).transpose())).norm();
      ++counted;
    }
  }
  return counted > 0 ? total / counted : std::numeric_limits<double>::infinity();
}

// Transmitter-count consistency and ground-truth checks; returns the raw
// feature width.
int checked_feature_width(const Dataset& dataset) {
  const std::size_t tx_count = dataset.cycles.front().transmitters.size();
  for (const auto& cycle : dataset.cycles) {
    if (!cycle.true_position)
      throw InvalidArgumentError("fingerprint training needs ground truth");
    if (cycle.transmitters.size() != tx_count)
      throw SchemaError("cycles disagree on transmitter count");
  }
  return 3 * static_cast<int>(tx_count);
}

// CV lambda selection (when requested) plus the final per-coordinate fits.
// Fills everything except train_fraction, seed and held_out_median.
FingerprintModel fit_rows(const Eigen::MatrixXd& feats, const Eigen::MatrixXd& targets,
                          MapKind kind, const BuildOptions& options) {
  const int degree = kind == MapKind::kPoly3Lasso ? 3 : 1;
  double lambda = options.lambda;
  if (options.cross_validate) {
    // 10 log-spaced candidates spanning [1e-4, 1]; ties go to the sparser
    // (larger) lambda, searched descending with one thread per candidate.
    std::vector<double> ladder(10);
    std::vector<double> score(10);
    for (int i = 0; i < 10; ++i) ladder[i] = std::pow(10.0, -4.0 + 4.0 * (9 - i) / 9.0);
    std::vector<std::thread> pool;
    for (int i = 0; i < 10; ++i) {
      pool.emplace_back([&, i] {
        try {
          score[i] = cv_error(feats, targets, degree, ladder[i], options);
        } catch (const ConvergenceError&) {
          score[i] = std::numeric_limits<double>::infinity();
        }
      });
    }
    for (auto& th : pool) th.join();
    int best = 0;
    for (int i = 1; i < 10; ++i) {
      if (score[i] < score[best]) best = i;
    }
    lambda = ladder[best];
  }

  FingerprintModel model;
  model.kind = kind;
  model.degree = degree;
  model.feature_count = static_cast<int>(feats.cols());
  model.lambda = lambda;

  const DesignSet design = make_design(feats, degree);
  model.raw = design.raw;
  model.expanded = design.expanded;
  model.conditioning_warning =
      lambda == 0.0 && design.xs.rows() < design.xs.cols();
  model.weights.resize(3, design.xs.cols());
  for (int k = 0; k < 3; ++k) {
    const LassoFit fit =
        lasso_fit(design.xs, targets.col(k), lambda, options.tol, options.max_iter);
    model.weights.row(k) = fit.weights;
    model.intercepts(k) = fit.intercept;
  }
  return model;
}

}  // namespace

FingerprintModel build_map(const Dataset& dataset, double train_fraction, MapKind kind,
                           std::uint64_t seed, const BuildOptions& options) {
  if (!(train_fraction > 0.0) || !(train_fraction < 1.0))
    throw InvalidArgumentError("train_fraction must lie in (0, 1)");
  if (!(options.lambda >= 0.0) || !std::isfinite(options.lambda))
    throw InvalidArgumentError("lambda must be finite and >= 0");
  const std::size_t n = dataset.cycles.size();
  if (n < 3) throw InsufficientDataError("fingerprinting needs at least 3 cycles");
  const int d_raw = checked_feature_width(dataset);

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);

  std::size_t n_train = static_cast<std::size_t>(
      std::floor(train_fraction * static_cast<double>(n) + 1e-9));
  n_train = std::min(n_train, n - 1);
  if (n_train < 2)
    throw InsufficientDataError("training split needs at least 2 cycles");

  Eigen::MatrixXd feats(n_train, d_raw);
  Eigen::MatrixXd targets(n_train, 3);
  for (std::size_t i = 0; i < n_train; ++i) {
    const auto& cycle = dataset.cycles[order[i]];
    feats.row(i) = features_of(cycle).transpose();
    targets.row(i) = cycle.true_position->transpose();
  }

  FingerprintModel model = fit_rows(feats, targets, kind, options);
  model.train_fraction = train_fraction;
  model.seed = seed;

  std::vector<double> errors;
  for (std::size_t i = n_train; i < n; ++i) {
    const auto& cycle = dataset.cycles[order[i]];
    errors.push_back((predict(model, cycle).position - *cycle.true_position).norm());
  }
  model.held_out_median = median_of(std::move(errors));
  return model;
}

FingerprintModel fit_map(const Dataset& dataset, MapKind kind, std::uint64_t seed,
                         const BuildOptions& options) {
  if (!(options.lambda >= 0.0) || !std::isfinite(options.lambda))
    throw InvalidArgumentError("lambda must be finite and >= 0");
  const std::size_t n = dataset.cycles.size();
  if (n < 2) throw InsufficientDataError("fingerprinting needs at least 2 cycles");
  const int d_raw = checked_feature_width(dataset);

  Eigen::MatrixXd feats(n, d_raw);
  Eigen::MatrixXd targets(n, 3);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& cycle = dataset.cycles[i];
    feats.row(i) = features_of(cycle).transpose();
    targets.row(i) = cycle.true_position->transpose();
  }

  FingerprintModel model = fit_rows(feats, targets, kind, options);
  model.train_fraction = 1.0;
  model.seed = seed;
  model.held_out_median = std::numeric_limits<double>::quiet_NaN();
  return model;
}

PositionEstimate predict(const FingerprintModel& model, const MeasurementCycle& cycle) {
  const Eigen::VectorXd raw = features_of(cycle);
  if (raw.size() != model.feature_count)
    throw SchemaError("cycle feature count does not match the model");
  const Eigen::VectorXd xs =
      model.expanded.apply(poly_expand(model.raw.apply(raw), model.degree));
  PositionEstimate est;
  for (int k = 0; k < 3; ++k) {
    est.position(k) = model.weights.row(k).dot(xs) + model.intercepts(k);
  }
  est.residual = 0.0;
  est.method = Method::kFingerprint;
  est.observation_count = static_cast<int>(cycle.transmitters.size());
  return est;
}

}  // namespace magloc
