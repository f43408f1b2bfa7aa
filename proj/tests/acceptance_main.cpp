// Acceptance gate for the charge-exchange kinetics engine.
//
// Runs twelve end-to-end criteria covering conservation, the discrete-heat
// oracle, collision-operator equivalence, exchange-balance classification,
// equilibrium structure, charge-map inversion, stationarity, entropy
// dissipation, truncation refinement, pointwise lower bounds, weighted moment
// bounds, and the weighted total-variation stability argument.  Each criterion
// prints one [PASS]/[FAIL] line with its measured value and elapsed time; the
// process exits nonzero if any line fails (including its runtime budget).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "xck/collision.hpp"
#include "xck/entropy.hpp"
#include "xck/equilibrium.hpp"
#include "xck/evolve.hpp"
#include "xck/kernel.hpp"
#include "xck/lattice.hpp"
#include "xck/oracles.hpp"

using namespace xck;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int g_failures = 0;

// Shared across criteria: the pointwise exponential lower bound must hold on
// every trajectory this gate accepts, and criterion 11 reuses criterion 8's
// run.
double g_exp_defect = 0.0;
std::optional<Trajectory> g_entropy_traj;
std::optional<Density> g_entropy_ref;

std::string sci(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

void criterion(int id, const char* name, double budget_s,
               const std::function<Outcome()>& body) {
  const auto start = std::chrono::steady_clock::now();
  Outcome out;
  try {
    out = body();
  } catch (const std::exception& e) {
    out.pass = false;
    out.detail = std::string("exception: ") + e.what();
  }
  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  const bool pass = out.pass && elapsed <= budget_s;
  if (!pass) ++g_failures;
  std::printf("[%s] %2d %-28s %s  [%.2fs/%.0fs]\n", pass ? "PASS" : "FAIL",
              id, name, out.detail.c_str(), elapsed, budget_s);
  std::fflush(stdout);
}

Density random_unit_density(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const Window w(n);
  std::vector<double> v(static_cast<std::size_t>(w.size()));
  double s = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i] = (i % 7 == 3) ? 0.0 : u(rng);  // keep some empty sites in play
    s += v[i];
  }
  for (double& x : v) x /= s;
  return Density(w, std::move(v));
}

Density random_state(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const Window w(n);
  std::vector<double> v(static_cast<std::size_t>(w.size()));
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i] = (i % 5 == 2) ? 0.0 : u(rng);
  }
  return Density(w, std::move(v));
}

Kernel random_table_kernel(std::mt19937_64& rng, int nt) {
  std::uniform_real_distribution<double> val(0.2, 3.0);
  const int side = 2 * nt + 1;
  std::vector<double> tab(static_cast<std::size_t>(side) * side);
  double hi = 0.0;
  double lo = std::numeric_limits<double>::infinity();
  for (double& v : tab) {
    v = val(rng);
    hi = std::max(hi, v);
    lo = std::min(lo, v);
  }
  return Kernel::from_table(nt, std::move(tab), hi, lo);
}

Kernel random_kernel(std::mt19937_64& rng, int kind) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  switch (kind % 4) {
    case 0:
      return Kernel::two_rate(0.5 + 1.5 * u(rng), 4.0 * u(rng));
    case 1:
      return Kernel::poly_decay(0.25 + 0.5 * u(rng), 1.5 + 3.0 * u(rng));
    case 2:
      return Kernel::constant(0.5 + 2.5 * u(rng));
    default:
      return random_table_kernel(
          rng, std::uniform_int_distribution<int>(8, 16)(rng));
  }
}

Density perturbed_equilibrium(const Density& g, double delta) {
  const double theta = delta / 12.0;
  const Window& w = g.window();
  std::vector<double> v(g.values().begin(), g.values().end());
  v[static_cast<std::size_t>(w.offset(1))] -= theta;
  v[static_cast<std::size_t>(w.offset(-1))] -= theta;
  v[static_cast<std::size_t>(w.offset(3))] += theta;
  v[static_cast<std::size_t>(w.offset(-3))] += theta;
  return Density(w, std::move(v));
}

// --------------------------------------------------------------------------

Outcome conservation_drift() {
  std::mt19937_64 rng(20260825);
  std::uniform_int_distribution<int> wide(10, 100);
  std::uniform_int_distribution<int> narrow(10, 28);
  double worst = 0.0;
  for (int rep = 0; rep < 20; ++rep) {
    const Kernel kern = random_kernel(rng, rep);
    const int n = (rep % 4 == 3) ? narrow(rng) : wide(rng);
    const Density f0 = random_unit_density(rng, n);
    IntegratorConfig cfg;
    cfg.t_end = 5.0;
    cfg.record_stride = 16;
    const Trajectory traj = evolve(truncate(kern, n), f0, cfg);
    worst = std::max({worst, traj.max_mass_drift, traj.max_charge_drift});
    g_exp_defect =
        std::max(g_exp_defect, exp_lower_bound_defect(traj, kern.c_upper()));
  }
  return {worst <= 1e-9, "worst_drift=" + sci(worst)};
}

Outcome heat_green_exactness() {
  const int n = 200;
  IntegratorConfig cfg;
  cfg.t_end = 2.0;
  cfg.dt_max = 0.01;
  const Trajectory traj =
      evolve(truncate(Kernel::constant(1.0), n), Density::delta(Window(n), 0),
             cfg);
  g_exp_defect = std::max(g_exp_defect, exp_lower_bound_defect(traj, 1.0));

  const HeatGreens oracle;
  double max_err = 0.0;
  bool found_all = true;
  for (double t : {0.5, 1.0, 2.0}) {
    std::size_t idx = traj.times.size();
    for (std::size_t i = 0; i < traj.times.size(); ++i) {
      if (std::abs(traj.times[i] - t) <= 1e-9) {
        idx = i;
        break;
      }
    }
    if (idx == traj.times.size()) {
      found_all = false;
      continue;
    }
    for (int k = -n; k <= n; ++k) {
      max_err = std::max(max_err,
                         std::abs(traj.states[idx].at(k) - oracle.green(t, k)));
    }
  }

  double worst_gap = 0.0;
  bool strictly_increasing = true;
  for (std::size_t i = 0; i < traj.times.size(); ++i) {
    const double lb = oracle.abs_charge_lower(traj.times[i], 1.0, 0.0);
    worst_gap = std::max(worst_gap, lb - traj.moment_sets[i].abs_charge);
    if (i > 0 && !(traj.moment_sets[i].abs_charge >
                   traj.moment_sets[i - 1].abs_charge)) {
      strictly_increasing = false;
    }
  }

  const bool pass =
      found_all && max_err <= 1e-6 && worst_gap <= 1e-6 && strictly_increasing;
  return {pass, "max_err=" + sci(max_err) + " q_gap=" + sci(worst_gap) +
                    (strictly_increasing ? "" : " q_not_monotone")};
}

Outcome collision_oracle_equivalence() {
  std::mt19937_64 rng(3301);
  std::uniform_int_distribution<int> size(4, 64);
  double worst = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    const int n = size(rng);
    const Kernel kern = random_kernel(rng, rep % 3 == 2 ? 3 : rep % 3);
    const Density f = random_state(rng, n);
    const Density g = random_state(rng, n);
    LatticeFunction fast = (rep % 2 == 0)
                               ? q_apply(kern, f, g)
                               : q_apply(truncate(kern, n), f, g);
    LatticeFunction slow = (rep % 2 == 0)
                               ? brute_q(kern, f, g)
                               : brute_q(truncate(kern, n), f, g);
    double scale = 0.0;
    double diff = 0.0;
    for (int k = -n; k <= n; ++k) {
      scale = std::max(scale, std::abs(slow.at(k)));
      diff = std::max(diff, std::abs(fast.at(k) - slow.at(k)));
    }
    worst = std::max(worst, diff / std::max(1.0, scale));
  }
  return {worst <= 1e-13, "worst_rel=" + sci(worst)};
}

Outcome balance_classification() {
  const Kernel tr = Kernel::two_rate(1.0, 3.0);
  const Kernel pd = Kernel::poly_decay(0.5, 4.0);
  const double v1 = check_extended_bd(tr).bd_max_violation;
  const double v2 = check_extended_bd(pd).bd_max_violation;
  const double v3 =
      check_extended_bd(tr.with_patch(2, 3, 1.1)).bd_max_violation;
  const double v4 =
      check_extended_bd(Kernel::product(tr, pd)).bd_max_violation;
  const double builtin_worst = std::max({v1, v2, v4});
  const bool pass = builtin_worst <= 1e-10 && v3 >= 0.05;
  return {pass,
          "balanced_max=" + sci(builtin_worst) + " patched=" + sci(v3)};
}

Outcome equilibrium_structure() {
  const EquilibriumFamily tr =
      EquilibriumFamily::build(Kernel::two_rate(1.0, 3.0));
  double tr_err = std::abs(tr.kappa() - 2.0);
  tr_err = std::max(tr_err, std::abs(tr.phi_minus() - 0.5));
  tr_err = std::max(tr_err, std::abs(tr.phi_plus() - 2.0));
  tr_err = std::max(tr_err, std::abs(tr.partition_z(1.0) - 3.0));
  tr_err = std::max(
      tr_err,
      std::abs(tr.equilibrium_density(1.0, Window(40)).as_density().at(0) -
               1.0 / 3.0));
  tr_err = std::max(tr_err, std::abs(tr.charge_of_phi(1.0)));

  const EquilibriumFamily pd =
      EquilibriumFamily::build(Kernel::poly_decay(0.5, 4.0));
  double pd_err = std::abs(pd.kappa() - 4.0);
  pd_err = std::max(pd_err, std::abs(pd.phi_minus() - 0.5));
  pd_err = std::max(pd_err, std::abs(pd.phi_plus() - 2.0));

  // The charge map stays bounded approaching the upper endpoint: evaluate at
  // shrinking margins and require stabilized, finite values.
  const double span = pd.phi_plus() - pd.phi_minus();
  const double q4 = pd.charge_of_phi(pd.phi_plus() - 1e-4 * span);
  const double q6 = pd.charge_of_phi(pd.phi_plus() - 1e-6 * span);
  const double q8 = pd.charge_of_phi(pd.phi_plus() - 1e-8 * span);
  const double d1 = q6 - q4;
  const double d2 = q8 - q6;
  const bool bounded = std::isfinite(q4) && std::isfinite(q6) &&
                       std::isfinite(q8) && d1 >= -1e-12 && d2 >= -1e-12 &&
                       d2 <= d1 + 1e-12 && d2 <= 1e-3 * (1.0 + std::abs(q8));

  const bool pass = tr_err <= 1e-10 && pd_err <= 1e-8 && bounded;
  return {pass, "two_rate_err=" + sci(tr_err) + " poly_err=" + sci(pd_err) +
                    " q_sup~" + sci(q8)};
}

Outcome charge_map_inversion() {
  const EquilibriumFamily fam =
      EquilibriumFamily::build(Kernel::two_rate(1.0, 3.0));
  const double span = fam.phi_plus() - fam.phi_minus();
  double prev_q = -std::numeric_limits<double>::infinity();
  bool increasing = true;
  double worst_rt = 0.0;
  for (int i = 1; i <= 50; ++i) {
    const double phi = fam.phi_minus() + span * i / 51.0;
    const double q = fam.charge_of_phi(phi);
    if (!(q > prev_q)) increasing = false;
    prev_q = q;
    worst_rt = std::max(worst_rt, std::abs(fam.phi_of_charge(q) - phi));
  }
  const bool pass = increasing && worst_rt <= 1e-9;
  return {pass, "roundtrip=" + sci(worst_rt) +
                    (increasing ? "" : " not_monotone")};
}

Outcome stationarity_residuals() {
  const EquilibriumFamily fam =
      EquilibriumFamily::build(Kernel::two_rate(1.0, 3.0));
  const double r20 = stationarity_residual(fam, 1.0, 20);
  const double r40 = stationarity_residual(fam, 1.0, 40);
  const double r60 = stationarity_residual(fam, 1.0, 60);
  const bool pass = r40 < r20 && r60 < r40 && r60 <= 1e-8;
  return {pass, "r20=" + sci(r20) + " r40=" + sci(r40) + " r60=" + sci(r60)};
}

Outcome entropy_dissipation() {
  const int n = 30;
  const TruncatedKernel kern = truncate(Kernel::two_rate(1.0, 3.0), n);
  const EquilibriumFamily fam =
      EquilibriumFamily::build(Kernel::two_rate(1.0, 3.0));
  const Density ref = fam.equilibrium_density(1.0, Window(n)).normalized();
  const Density f0 = perturbed_equilibrium(ref, 0.05);

  IntegratorConfig cfg;
  cfg.t_end = 1.0;
  cfg.dt_max = 1e-3;  // recording interval <= 1e-3
  const Trajectory traj = evolve(kern, f0, cfg);
  g_exp_defect = std::max(g_exp_defect, exp_lower_bound_defect(traj, 4.0));

  const EntropyReport rep = dissipation_check(traj, ref, kern);
  g_entropy_traj = traj;
  g_entropy_ref = ref;

  const bool pass = rep.h_nonincreasing && rep.dissipation_defect <= 1e-3 &&
                    rep.integral_defect <= 1e-4;
  return {pass, "max_inc=" + sci(rep.max_increase) +
                    " diss=" + sci(rep.dissipation_defect) +
                    " integ=" + sci(rep.integral_defect)};
}

Outcome truncation_refinement() {
  const std::vector<RefinementRow> rows = refinement_study(
      Kernel::two_rate(1.0, 3.0), Density::delta(Window(5), 0), 1.0,
      {5, 10, 20, 40});
  bool decreasing = true;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (!(rows[i].sup_discrepancy < 1.1 * rows[i - 1].sup_discrepancy)) {
      decreasing = false;
    }
  }
  const double final_disc = rows.back().sup_discrepancy;
  std::string detail = "discs=";
  for (const RefinementRow& r : rows) detail += sci(r.sup_discrepancy) + ",";
  detail.pop_back();
  return {decreasing && final_disc <= 1e-4, detail};
}

Outcome pointwise_lower_bounds() {
  const Kernel kern = Kernel::two_rate(1.0, 3.0);
  const int n = 12;
  IntegratorConfig cfg;
  cfg.t_end = 2.0;
  const Trajectory traj =
      evolve(truncate(kern, n), Density::delta(Window(n), 0), cfg);
  g_exp_defect =
      std::max(g_exp_defect, exp_lower_bound_defect(traj, kern.c_upper()));

  const LowerBoundCertificate cert = lower_bound_certificate(
      kern.c_upper(), kern.c_lower(), 1.0, 1.0, 0, Aseq::kGeometric, 1.0, 5);
  const double cert_defect = certificate_defect(cert, traj);

  const bool pass = g_exp_defect <= 1e-9 && cert_defect <= 1e-9;
  return {pass, "exp_defect=" + sci(g_exp_defect) +
                    " cert_defect=" + sci(cert_defect)};
}

Outcome weighted_moment_bounds() {
  if (!g_entropy_traj || !g_entropy_ref) {
    return {false, "no stored entropy-dissipation run"};
  }
  const double delta_h = 0.5 * std::log(2.0);
  auto h = [delta_h](int k) { return delta_h * std::abs(k); };
  bool all = true;
  double slack = std::numeric_limits<double>::infinity();
  for (const Density& state : g_entropy_traj->states) {
    const MomentBoundReport rep =
        weighted_moment_bound(state, *g_entropy_ref, h, 1);
    all = all && rep.pass;
    slack = std::min(slack, rep.rhs - rep.lhs);
  }
  const TrajectoryBoundReport tb =
      trajectory_l11_bound(*g_entropy_traj, *g_entropy_ref, 0.5);
  const bool pass = all && tb.pass;
  return {pass, "moment_slack=" + sci(slack) + " sup_l11=" + sci(tb.sup_l11) +
                    " bound=" + sci(tb.bound)};
}

Outcome tv_bound_and_stability() {
  const Kernel kern = Kernel::two_rate(1.0, 3.0);
  const EquilibriumFamily fam = EquilibriumFamily::build(kern);
  const Density ref = fam.equilibrium_density(1.0, Window(20)).normalized();

  std::mt19937_64 rng(7701);
  std::uniform_real_distribution<double> alpha_dist(0.01, 0.3);
  int ckp_passes = 0;
  for (int rep = 0; rep < 50; ++rep) {
    const Density mu = random_unit_density(rng, 20);
    const double alpha = alpha_dist(rng);
    const CkpReport ck = ckp_check(
        mu, ref, [alpha](int k) { return alpha * (1.0 + std::abs(k)); });
    if (ck.pass) ++ckp_passes;
  }

  IntegratorConfig cfg;
  cfg.dt_max = 0.01;
  const StabilityTable table = stability_probe(
      truncate(kern, 10), fam, 1.0, {}, {0.1, 0.03, 0.01}, 1.0, cfg);
  bool rows_ok = table.deviations_decreasing;
  for (const StabilityRow& row : table.rows) rows_ok = rows_ok && row.within_bound;

  const bool pass = ckp_passes == 50 && rows_ok;
  return {pass, "ckp=" + std::to_string(ckp_passes) + "/50 stability=" +
                    (rows_ok ? "ok" : "violated")};
}

}  // namespace

int main() {
  std::printf("acceptance gate: charge-exchange kinetics engine\n");
  criterion(1, "conservation_drift", 60, conservation_drift);
  criterion(2, "heat_green_exactness", 30, heat_green_exactness);
  criterion(3, "collision_oracle_equiv", 10, collision_oracle_equivalence);
  criterion(4, "balance_classification", 5, balance_classification);
  criterion(5, "equilibrium_structure", 10, equilibrium_structure);
  criterion(6, "charge_map_inversion", 10, charge_map_inversion);
  criterion(7, "stationarity_residuals", 5, stationarity_residuals);
  criterion(8, "entropy_dissipation", 120, entropy_dissipation);
  criterion(9, "truncation_refinement", 60, truncation_refinement);
  criterion(10, "pointwise_lower_bounds", 30, pointwise_lower_bounds);
  criterion(11, "weighted_moment_bounds", 120, weighted_moment_bounds);
  criterion(12, "tv_bound_and_stability", 120, tv_bound_and_stability);

  if (g_failures > 0) {
    std::printf("acceptance: %d of 12 criteria FAILED\n", g_failures);
    return 1;
  }
  std::printf("acceptance: all 12 criteria passed\n");
  return 0;
}
