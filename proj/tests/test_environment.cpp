#include "magloc/environment.hpp"
#include "magloc/calibration.hpp"

#include <doctest.h>

#include <cmath>
#include <vector>

using namespace magloc;

namespace {

Transmitter make_tx(const Vec3& origin) {
  Transmitter tx;
  tx.pose.origin = origin;
  for (auto& c : tx.pose.coils) {
    c.turns = 100;
    c.radius = 0.1;
    c.current = 1.0;
  }
  return tx;
}

Environment base_env() {
  Environment env;
  env.transmitters.push_back(make_tx(Vec3::Zero()));
  env.chain.noise.rms = 0.0;
  return env;
}

// Off-diagonal ratios of a published coil design, relative to unit diagonals.
CrosstalkMatrix old_coil_matrix() {
  CrosstalkMatrix x;
  x.mix << 1.00, 0.63, 0.58,
           0.68, 1.00, 0.67,
           0.63, 0.68, 1.00;
  return x;
}

CrosstalkMatrix new_coil_matrix() {
  CrosstalkMatrix x;
  x.mix << 1.00, 0.08, 0.11,
           0.06, 1.00, 0.09,
           0.11, 0.10, 1.00;
  return x;
}

}  // namespace

TEST_CASE("apply_crosstalk identity passthrough") {
  CouplingMatrix c;
  c << 1, 2, 3, 4, 5, 6, 7, 8, 9;
  CHECK((apply_crosstalk(CrosstalkMatrix{}, c) - c).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("apply_crosstalk mixes rows") {
  CrosstalkMatrix x;
  x.mix << 1.0, 0.5, 0.0,
           0.0, 1.0, 0.0,
           0.0, 0.0, 1.0;
  CouplingMatrix c = CouplingMatrix::Identity();
  const CouplingMatrix out = apply_crosstalk(x, c);
  CHECK(out(0, 1) == doctest::Approx(0.5));
  CHECK(out(1, 1) == doctest::Approx(1.0));
}

TEST_CASE("crosstalk_ratio identity and uniform cases") {
  const auto zero = crosstalk_ratio(CrosstalkMatrix{});
  CHECK(zero[0] == 0.0);
  CHECK(zero[1] == 0.0);
  CHECK(zero[2] == 0.0);

  CrosstalkMatrix uniform;
  uniform.mix << 1.0, 0.1, 0.1,
                 0.1, 1.0, 0.1,
                 0.1, 0.1, 1.0;
  const auto r = crosstalk_ratio(uniform);
  for (double v : r) CHECK(v == doctest::Approx(10.0).epsilon(1e-12));
}

TEST_CASE("crosstalk_ratio on the published coil ratios") {
  // Column means of the off-diagonal percentages.
  const auto old_avg = crosstalk_ratio(old_coil_matrix());
  CHECK(old_avg[0] == doctest::Approx(65.5).epsilon(1e-9));
  CHECK(old_avg[1] == doctest::Approx(65.5).epsilon(1e-9));
  CHECK(old_avg[2] == doctest::Approx(62.5).epsilon(1e-9));

  const auto new_avg = crosstalk_ratio(new_coil_matrix());
  CHECK(new_avg[0] == doctest::Approx(8.5).epsilon(1e-9));
  CHECK(new_avg[1] == doctest::Approx(9.0).epsilon(1e-9));
  CHECK(new_avg[2] == doctest::Approx(10.0).epsilon(1e-9));
}

TEST_CASE("crosstalk_ratio rejects a zero diagonal") {
  CrosstalkMatrix x;
  x.mix << 0.0, 0.1, 0.1,
           0.1, 1.0, 0.1,
           0.1, 0.1, 1.0;
  CHECK_THROWS_AS(crosstalk_ratio(x), DomainError);
}

TEST_CASE("total_field equals the primary dipole without distorters") {
  Environment env = base_env();
  const Vec3 p(1.1, -0.4, 0.8);
  const Vec3 direct = dipole_field(Vec3::Zero(), Vec3::UnitX(),
                                   env.transmitters[0].pose.coils[0], p);
  CHECK((total_field(env, 0, 0, p) - direct).norm() == 0.0);

  Distorter inert;
  inert.position = Vec3(0.5, 0.5, 0.0);
  env.distorters.push_back(inert);  // zero polarizability
  CHECK((total_field(env, 0, 0, p) - direct).norm() == 0.0);
}

TEST_CASE("total_field distorter contributions superpose") {
  Environment env = base_env();
  Distorter d1;
  d1.position = Vec3(0.8, 0.2, 0.1);
  d1.polarizability = -0.02 * Mat3::Identity();
  Distorter d2;
  d2.position = Vec3(-0.3, 0.9, -0.4);
  d2.polarizability = 0.015 * Mat3::Identity();

  const Vec3 p(1.4, 1.1, 0.6);
  Environment only1 = env, only2 = env, both = env;
  only1.distorters = {d1};
  only2.distorters = {d2};
  both.distorters = {d1, d2};

  const Vec3 primary = total_field(env, 0, 2, p);
  const Vec3 sum = total_field(only1, 0, 2, p) + total_field(only2, 0, 2, p) - primary;
  const Vec3 joint = total_field(both, 0, 2, p);
  CHECK((joint - sum).norm() <= 1e-12 * joint.norm());
}

TEST_CASE("distorter perturbation decays as the cube of range") {
  Environment env = base_env();
  Distorter d;
  d.position = Vec3(1.0, 0.0, 0.0);
  d.polarizability = 0.01 * Mat3::Identity();
  env.distorters.push_back(d);

  double sxx = 0.0, sxy = 0.0, mx = 0.0, my = 0.0;
  std::vector<double> xs, ys;
  for (int k = 0; k < 20; ++k) {
    const double s = 0.5 * std::pow(6.0, k / 19.0);
    const Vec3 p = d.position + s * Vec3(0.0, 1.0, 0.0);
    const Vec3 delta = total_field(env, 0, 2, p) -
                       dipole_field(Vec3::Zero(), Vec3::UnitZ(),
                                    env.transmitters[0].pose.coils[2], p);
    xs.push_back(std::log(s));
    ys.push_back(std::log(delta.norm()));
  }
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= xs.size();
  my /= ys.size();
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  CHECK(sxy / sxx == doctest::Approx(-3.0).epsilon(0.05 / 3.0));
}

TEST_CASE("total_field singularities and index checks") {
  Environment env = base_env();
  Distorter d;
  d.position = Vec3(1.0, 0.0, 0.0);
  d.polarizability = 0.01 * Mat3::Identity();
  env.distorters.push_back(d);
  CHECK_THROWS_AS(total_field(env, 0, 0, d.position), SingularityError);
  CHECK_THROWS_AS(total_field(env, 0, 0, Vec3::Zero()), SingularityError);
  CHECK_THROWS_AS(total_field(env, 1, 0, Vec3::Ones()), InvalidArgumentError);
  CHECK_THROWS_AS(total_field(env, 0, 3, Vec3::Ones()), InvalidArgumentError);
}

TEST_CASE("run_cycle round-trips clean couplings") {
  Environment env = base_env();
  env.chain.adc.bits = 24;
  ReceiverPose rx = env.receiver;
  rx.origin = Vec3(1.5, 1.0, 0.7);

  const CouplingMatrix ideal = coupling_matrix(env.transmitters[0].pose, rx,
                                               2.0 * kPi * env.excitation_freq);
  Rng rng(4);
  const MeasurementCycle cycle = run_cycle(env, rx, rng);
  REQUIRE(cycle.transmitters.size() == 1);
  for (int i = 0; i < 3; ++i) {
    const double got = cycle.transmitters[0].magnitudes.row(i).norm();
    const double want = axis_magnitude(ideal.row(i));
    CHECK(std::abs(got - want) / want < 1e-4);
    for (int j = 0; j < 3; ++j) {
      const int s = cycle.transmitters[0].signs[i][j];
      if (ideal(i, j) > 0.0) CHECK(s == +1);
      if (ideal(i, j) < 0.0) CHECK(s == -1);
    }
  }
  CHECK(*cycle.true_position == rx.origin);
}

TEST_CASE("run_cycle is deterministic and repeatable") {
  Environment env = base_env();
  env.chain.noise.rms = 2e-6;
  Distorter d;
  d.position = Vec3(0.9, 0.7, -0.2);
  d.polarizability = -0.05 * Mat3::Identity();
  env.distorters.push_back(d);

  ReceiverPose rx = env.receiver;
  rx.origin = Vec3(2.0, 1.1, 0.3);

  Rng a(21), b(21);
  const MeasurementCycle ca = run_cycle(env, rx, a);
  const MeasurementCycle cb = run_cycle(env, rx, b);
  CHECK((ca.transmitters[0].magnitudes - cb.transmitters[0].magnitudes)
            .cwiseAbs()
            .maxCoeff() == 0.0);

  // With noise disabled the distorted cycle is exactly repeatable.
  env.chain.noise.rms = 0.0;
  Rng c1(1), c2(999);
  const MeasurementCycle r1 = run_cycle(env, rx, c1);
  const MeasurementCycle r2 = run_cycle(env, rx, c2);
  CHECK((r1.transmitters[0].magnitudes - r2.transmitters[0].magnitudes)
            .cwiseAbs()
            .maxCoeff() == 0.0);
}

TEST_CASE("run_cycle covers every transmitter") {
  Environment env;
  for (int k = 0; k < 7; ++k) {
    env.transmitters.push_back(make_tx(Vec3(2.0 * k, 0.0, 2.0)));
  }
  env.chain.noise.rms = 0.0;
  ReceiverPose rx = env.receiver;
  rx.origin = Vec3(3.0, 4.0, 0.0);
  Rng rng(0);
  const MeasurementCycle cycle = run_cycle(env, rx, rng);
  CHECK(cycle.transmitters.size() == 7);
}

TEST_CASE("generate_grid inclusive lattice") {
  const auto grid = generate_grid({0.0, 0.0, 5.0, 8.5}, 0.5, 1.3);
  CHECK(grid.size() == 198);  // 11 x 18
  CHECK(grid.front() == Vec3(0.0, 0.0, 1.3));
  CHECK(grid[1] == Vec3(0.5, 0.0, 1.3));
  CHECK(grid[11] == Vec3(0.0, 0.5, 1.3));
  CHECK(grid.back() == Vec3(5.0, 8.5, 1.3));

  CHECK(generate_grid({0.0, 0.0, 1.0, 1.0}, 1.0, 0.0).size() == 4);
  CHECK(generate_grid({2.0, 3.0, 2.4, 3.3}, 1.0, 0.0).size() == 1);
  CHECK(generate_grid({2.0, 3.0, 2.4, 3.3}, 1.0, 0.0).front() == Vec3(2.0, 3.0, 0.0));
}

TEST_CASE("generate_grid rejects bad input") {
  CHECK_THROWS_AS(generate_grid({0, 0, -1.0, 2.0}, 0.5, 0.0), DomainError);
  CHECK_THROWS_AS(generate_grid({0, 0, 1.0, 2.0}, 0.0, 0.0), InvalidArgumentError);
  CHECK_THROWS_AS(generate_grid({0, 0, 1.0, 2.0}, -0.5, 0.0), InvalidArgumentError);
}

TEST_CASE("generate_dataset is worker-invariant and seeded") {
  Environment env = base_env();
  env.chain.noise.rms = 3e-6;
  const auto grid = generate_grid({0.5, 0.5, 2.5, 2.0}, 0.5, 0.9);

  const Dataset serial = generate_dataset(env, grid, "unit", 31, 1);
  const Dataset pooled = generate_dataset(env, grid, "unit", 31, 4);
  REQUIRE(serial.cycles.size() == grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    CHECK((serial.cycles[i].transmitters[0].magnitudes -
           pooled.cycles[i].transmitters[0].magnitudes)
              .cwiseAbs()
              .maxCoeff() == 0.0);
    CHECK(serial.cycles[i].slot_index == static_cast<std::int64_t>(i));
  }
  CHECK(serial.scenario_id == "unit");
  CHECK(serial.seed == 31);

  const Dataset other = generate_dataset(env, grid, "unit", 32, 1);
  CHECK((serial.cycles[0].transmitters[0].magnitudes -
         other.cycles[0].transmitters[0].magnitudes)
            .cwiseAbs()
            .maxCoeff() != 0.0);
}

TEST_CASE("environment validation") {
  Environment env;
  CHECK_THROWS_AS(env.validate(), InvalidArgumentError);

  env = base_env();
  env.transmitters.push_back(make_tx(Vec3::Zero()));
  CHECK_THROWS_AS(env.validate(), InvalidArgumentError);

  env = base_env();
  Distorter d;
  d.polarizability << 0, 1, 0, 0, 0, 0, 0, 0, 0;
  env.distorters.push_back(d);
  CHECK_THROWS_AS(env.validate(), InvalidArgumentError);

  env = base_env();
  env.excitation_freq = 0.0;
  CHECK_THROWS_AS(env.validate(), InvalidArgumentError);

  CrosstalkMatrix x;
  x.mix(1, 1) = 0.0;
  CHECK_THROWS_AS(x.validate(), InvalidArgumentError);
}
