// Unit tests for the time integrator: conservation, positivity, comparison
// with the diffusion reference, truncation refinement, scaling and symmetry
// consistency, and the trajectory CSV format.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <sstream>

#include "xck/evolve.hpp"
#include "xck/kernel.hpp"
#include "xck/lattice.hpp"
#include "xck/oracles.hpp"

using namespace xck;
using Catch::Matchers::WithinAbs;

TEST_CASE("integrator configuration is validated") {
  IntegratorConfig cfg;
  cfg.t_end = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.dt_max = -1.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.safety = 1.5;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.record_stride = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("zero initial state stays zero") {
  IntegratorConfig cfg;
  cfg.t_end = 0.5;
  const Trajectory traj =
      evolve(truncate(Kernel::two_rate(1.0, 3.0), 6), Density::zero(Window(6)),
             cfg);
  for (const Density& state : traj.states) {
    for (int k = -6; k <= 6; ++k) CHECK(state.at(k) == 0.0);
  }
  CHECK(traj.max_mass_drift == 0.0);
  CHECK(traj.total_clamps == 0);
}

TEST_CASE("mass and charge are conserved along trajectories") {
  IntegratorConfig cfg;
  cfg.t_end = 1.0;
  const Trajectory traj = evolve(truncate(Kernel::two_rate(1.0, 3.0), 40),
                                 Density::delta(Window(40), 0), cfg);
  CHECK(traj.max_mass_drift <= 1e-10);
  CHECK(traj.max_charge_drift <= 1e-10);
  for (const Density& state : traj.states) {
    for (int k = -40; k <= 40; ++k) CHECK(state.at(k) >= 0.0);
  }
  CHECK(traj.times.front() == 0.0);
  CHECK_THAT(traj.times.back(), WithinAbs(1.0, 1e-12));
  for (std::size_t i = 1; i < traj.times.size(); ++i) {
    CHECK(traj.times[i] > traj.times[i - 1]);
    CHECK(traj.clamp_counts[i] >= traj.clamp_counts[i - 1]);
  }
}

TEST_CASE("integration requires matching windows") {
  IntegratorConfig cfg;
  CHECK_THROWS_AS(evolve(truncate(Kernel::constant(1.0), 5),
                         Density::delta(Window(4), 0), cfg),
                  std::invalid_argument);
}

TEST_CASE("unit-kernel run reproduces the diffusion reference at the origin") {
  IntegratorConfig cfg;
  cfg.t_end = 1.0;
  cfg.dt_max = 0.01;
  cfg.record_stride = 1000000;  // keep only endpoints
  const Trajectory traj = evolve(truncate(Kernel::constant(1.0), 200),
                                 Density::delta(Window(200), 0), cfg);
  const HeatGreens oracle;
  CHECK_THAT(traj.final_state().at(0), WithinAbs(oracle.green(1.0, 0), 1e-6));
}

TEST_CASE("absolute charge grows like twice the origin density under the "
          "unit kernel") {
  IntegratorConfig cfg;
  cfg.t_end = 1.0;
  cfg.dt_max = 0.005;
  const Trajectory traj = evolve(truncate(Kernel::constant(1.0), 40),
                                 Density::delta(Window(40), 0), cfg);
  REQUIRE(traj.times.size() >= 10);
  for (std::size_t i = 1; i + 1 < traj.times.size(); ++i) {
    const double rate = (traj.moment_sets[i + 1].abs_charge -
                         traj.moment_sets[i - 1].abs_charge) /
                        (traj.times[i + 1] - traj.times[i - 1]);
    CHECK_THAT(rate, WithinAbs(2.0 * traj.states[i].at(0), 1e-4));
  }
}

TEST_CASE("trajectories satisfy the exponential floor and the weighted "
          "growth cap") {
  IntegratorConfig cfg;
  cfg.t_end = 2.0;
  const Kernel kern = Kernel::two_rate(1.0, 3.0);
  const Trajectory traj =
      evolve(truncate(kern, 20), Density::delta(Window(20), 1), cfg);
  CHECK(exp_lower_bound_defect(traj, kern.c_upper()) <= 1e-9);
  CHECK(l11_growth_defect(traj, kern.c_upper()) <= 1e-9);
}

TEST_CASE("repeated runs are bit identical") {
  IntegratorConfig cfg;
  cfg.t_end = 0.7;
  const TruncatedKernel kern = truncate(Kernel::two_rate(1.0, 3.0), 15);
  const Density f0 = Density::delta(Window(15), 2);
  const Trajectory a = evolve(kern, f0, cfg);
  const Trajectory b = evolve(kern, f0, cfg);
  REQUIRE(a.times.size() == b.times.size());
  for (std::size_t i = 0; i < a.times.size(); ++i) {
    CHECK(a.times[i] == b.times[i]);
    for (int k = -15; k <= 15; ++k) {
      CHECK(a.states[i].at(k) == b.states[i].at(k));
    }
  }
}

TEST_CASE("finer truncations track the reference run more closely") {
  const std::vector<RefinementRow> rows = refinement_study(
      Kernel::two_rate(1.0, 3.0), Density::delta(Window(4), 0), 1.0,
      {4, 8, 16});
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].n == 4);
  CHECK(rows[1].sup_discrepancy < rows[0].sup_discrepancy);
  CHECK(rows[2].sup_discrepancy < rows[1].sup_discrepancy);
}

TEST_CASE("confined short-time dynamics make truncation error negligible") {
  const std::vector<RefinementRow> rows = refinement_study(
      Kernel::constant(1.0), Density::delta(Window(15), 0), 0.01, {15, 30});
  CHECK(rows.back().sup_discrepancy <= 1e-8);
}

TEST_CASE("refinement input validation") {
  CHECK_THROWS_AS(refinement_study(Kernel::constant(1.0),
                                   Density::delta(Window(4), 0), 1.0, {}),
                  std::invalid_argument);
  CHECK_THROWS_AS(refinement_study(Kernel::constant(1.0),
                                   Density::delta(Window(4), 0), 1.0, {8, 4}),
                  std::invalid_argument);
}

TEST_CASE("time-scaled runs coincide after rescaling") {
  const TruncatedKernel unit = truncate(Kernel::constant(1.0), 12);
  const Density d0 = Density::delta(Window(12), 0);

  const RescaleReport doubled = rescale_check(unit, d0, 2.0, 0.5);
  CHECK(doubled.pass);
  CHECK(doubled.max_discrepancy <= 1e-8);

  const RescaleReport identity = rescale_check(unit, d0, 1.0, 0.5);
  CHECK(identity.max_discrepancy == 0.0);

  const RescaleReport halved = rescale_check(
      truncate(Kernel::two_rate(1.0, 3.0), 12), d0, 0.5, 0.5);
  CHECK(halved.pass);
}

TEST_CASE("mirror-symmetric data stays symmetric") {
  const Window w(10);
  std::vector<double> v(static_cast<std::size_t>(w.size()), 0.0);
  v[static_cast<std::size_t>(w.offset(1))] = 0.5;
  v[static_cast<std::size_t>(w.offset(-1))] = 0.5;
  const Density pair(w, std::move(v));

  const SymmetryReport unit =
      symmetry_check(truncate(Kernel::constant(1.0), 10), pair, 1.0);
  CHECK(unit.applicable);
  CHECK(unit.max_asymmetry <= 1e-12);

  const SymmetryReport two =
      symmetry_check(truncate(Kernel::two_rate(1.0, 3.0), 10), pair, 1.0);
  CHECK(two.applicable);
  CHECK(two.pass);
  CHECK(two.max_asymmetry <= 1e-10);

  const SymmetryReport skew = symmetry_check(
      truncate(Kernel::two_rate(1.0, 3.0), 10), Density::delta(w, 1), 1.0);
  CHECK_FALSE(skew.applicable);
  CHECK(skew.kernel_symmetric);
  CHECK_FALSE(skew.initial_symmetric);
}

TEST_CASE("trajectory CSV format") {
  IntegratorConfig cfg;
  cfg.t_end = 0.2;
  cfg.record_stride = 2;
  const Trajectory traj = evolve(truncate(Kernel::two_rate(1.0, 3.0), 8),
                                 Density::delta(Window(8), 0), cfg);
  std::stringstream plain;
  write_trajectory_csv(plain, traj);
  std::string header;
  std::getline(plain, header);
  CHECK(header == "t,mass,charge,abs_charge,l11,clamp_count");
  std::string first;
  std::getline(plain, first);
  CHECK(first.rfind("0,1,", 0) == 0);  // t = 0, unit mass
  std::size_t rows = 1;
  for (std::string line; std::getline(plain, line);) ++rows;
  CHECK(rows == traj.times.size());

  const std::vector<double> h(traj.times.size(), 0.25);
  const std::vector<double> wseries(traj.times.size(), 0.5);
  std::stringstream extended;
  write_trajectory_csv(extended, traj, &h, &wseries);
  std::getline(extended, header);
  CHECK(header == "t,mass,charge,abs_charge,l11,clamp_count,entropy,wN");
}

TEST_CASE("recording stride subsamples but keeps the endpoints") {
  IntegratorConfig fine;
  fine.t_end = 0.5;
  fine.dt_max = 0.01;
  fine.record_stride = 7;
  const Trajectory traj = evolve(truncate(Kernel::constant(1.0), 6),
                                 Density::delta(Window(6), 0), fine);
  CHECK(traj.times.front() == 0.0);
  CHECK_THAT(traj.times.back(), WithinAbs(0.5, 1e-12));
  // 50 steps at stride 7 -> records after steps 7,14,...,49 is not aligned;
  // the final state is recorded exactly once regardless.
  for (std::size_t i = 1; i < traj.times.size(); ++i) {
    CHECK(traj.times[i] > traj.times[i - 1]);
  }
}
