// evolve.hpp — classical RK4 integration of the truncated exchange system.
//
// Step-size policy: the accepted macro step is
//     dt = t_end / ceil(t_end / min(dt_max, safety / (2 c_upper mass(f0))))
// so the grid hits t_end exactly.  2 c_upper mass bounds the total per-site
// reaction rate, so safety = 0.1 keeps each step a small fraction of the
// fastest relaxation time.  A step that drives some entry below
// -neg_tolerance is rejected and rerun as two half steps (recursively, at
// most 40 levels, keeping the macro grid intact); entries inside
// (-neg_tolerance, 0) after an accepted step are round-off and snap to zero
// (counted).  Mass and charge are conserved by the reaction structure; the
// integrator only monitors their drift, it never projects.
//
// All loops run in fixed ascending index order: a given config produces a
// bit-identical trajectory on every run.

#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "xck/collision.hpp"
#include "xck/kernel.hpp"
#include "xck/lattice.hpp"
#include "xck/numerics.hpp"

namespace xck {

struct IntegratorError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IntegratorConfig {
  double t_end = 1.0;
  double dt_max = 0.05;
  double safety = 0.1;
  double neg_tolerance = 1e-12;
  int record_stride = 1;

  void validate() const {
    require(std::isfinite(t_end) && t_end > 0.0, "t_end must be > 0");
    require(std::isfinite(dt_max) && dt_max > 0.0, "dt_max must be > 0");
    require(safety > 0.0 && safety <= 1.0, "safety must lie in (0, 1]");
    require(neg_tolerance >= 0.0, "neg_tolerance must be >= 0");
    require(record_stride >= 1, "record_stride must be >= 1");
  }
};

struct Trajectory {
  Window window;
  double dt = 0.0;  // accepted macro step
  std::vector<double> times;
  std::vector<Density> states;
  std::vector<MomentSet> moment_sets;
  std::vector<std::int64_t> clamp_counts;  // cumulative round-off clamps
  double max_mass_drift = 0.0;             // relative to mass(f0)
  double max_charge_drift = 0.0;           // relative to max(|q0|, mass)
  std::int64_t total_clamps = 0;
  std::int64_t entries_touched = 0;  // accepted steps x window size

  const Density& initial_state() const { return states.front(); }
  const Density& final_state() const { return states.back(); }
};

namespace detail {

class Rk4Stepper {
 public:
  Rk4Stepper(const CollisionEngine& engine, double neg_tolerance)
      : engine_(engine),
        neg_tol_(neg_tolerance),
        size_(engine.window().size()),
        k1_(size_), k2_(size_), k3_(size_), k4_(size_), stage_(size_),
        candidate_(size_) {}

  std::int64_t clamps() const { return clamps_; }
  std::int64_t accepted_steps() const { return accepted_; }

  // Advance y by h, bisecting on negativity; throws on 40 exhausted levels
  // or non-finite values.
  void advance(std::vector<double>& y, double h, int depth = 0) {
    if (try_step(y, h)) return;
    if (depth >= 40) {
      throw IntegratorError(
          "step-size underflow: 40 halvings could not restore positivity");
    }
    advance(y, 0.5 * h, depth + 1);
    advance(y, 0.5 * h, depth + 1);
  }

 private:
  void rhs(const std::vector<double>& x, std::vector<double>& out) {
    engine_.apply(x, x, out);
  }

  bool try_step(std::vector<double>& y, double h) {
    rhs(y, k1_);
    for (int i = 0; i < size_; ++i) stage_[i] = y[i] + 0.5 * h * k1_[i];
    rhs(stage_, k2_);
    for (int i = 0; i < size_; ++i) stage_[i] = y[i] + 0.5 * h * k2_[i];
    rhs(stage_, k3_);
    for (int i = 0; i < size_; ++i) stage_[i] = y[i] + h * k3_[i];
    rhs(stage_, k4_);
    const double w = h / 6.0;
    for (int i = 0; i < size_; ++i) {
      candidate_[i] =
          y[i] + w * (k1_[i] + 2.0 * k2_[i] + 2.0 * k3_[i] + k4_[i]);
    }
    for (int i = 0; i < size_; ++i) {
      const double v = candidate_[i];
      if (!std::isfinite(v)) {
        throw IntegratorError("non-finite state entry during time step");
      }
      if (v < -neg_tol_) return false;  // reject, caller bisects
    }
    for (int i = 0; i < size_; ++i) {
      double v = candidate_[i];
      if (v < 0.0) {  // inside (-neg_tol, 0): round-off clamp
        v = 0.0;
        ++clamps_;
      }
      y[i] = v;
    }
    ++accepted_;
    return true;
  }

  const CollisionEngine& engine_;
  double neg_tol_;
  int size_;
  std::vector<double> k1_, k2_, k3_, k4_, stage_, candidate_;
  std::int64_t clamps_ = 0;
  std::int64_t accepted_ = 0;
};

}  // namespace detail

inline Trajectory evolve(const TruncatedKernel& kern, const Density& f0,
                         const IntegratorConfig& cfg) {
  cfg.validate();
  require(f0.window().n() == kern.n,
          "initial state window must match the truncation half-width");

  const MomentSet m0 = moments(f0);
  const double rate_cap = 2.0 * kern.base.c_upper() * m0.mass;
  const double dt_base =
      rate_cap > 0.0 ? std::min(cfg.dt_max, cfg.safety / rate_cap)
                     : cfg.dt_max;
  const auto steps =
      static_cast<std::int64_t>(std::ceil(cfg.t_end / dt_base - 1e-9));
  const double dt = cfg.t_end / static_cast<double>(std::max<std::int64_t>(steps, 1));

  CollisionEngine engine(kern.base, f0.window(), kern.n);
  detail::Rk4Stepper stepper(engine, cfg.neg_tolerance);

  Trajectory traj;
  traj.window = f0.window();
  traj.dt = dt;
  std::vector<double> y(f0.values().begin(), f0.values().end());

  const double mass_scale = std::max(std::abs(m0.mass), 1e-300);
  const double charge_scale = std::max(std::abs(m0.charge), mass_scale);
  auto record = [&](double t) {
    Density state(f0.window(), y);
    MomentSet m = state.moments();
    traj.times.push_back(t);
    traj.moment_sets.push_back(m);
    traj.clamp_counts.push_back(stepper.clamps());
    traj.states.push_back(std::move(state));
    traj.max_mass_drift =
        std::max(traj.max_mass_drift, std::abs(m.mass - m0.mass) / mass_scale);
    traj.max_charge_drift =
        std::max(traj.max_charge_drift,
                 std::abs(m.charge - m0.charge) / charge_scale);
  };

  record(0.0);
  for (std::int64_t i = 1; i <= steps; ++i) {
    stepper.advance(y, dt);
    if (i % cfg.record_stride == 0 || i == steps) {
      record(static_cast<double>(i) * dt);
    }
  }

  traj.total_clamps = stepper.clamps();
  traj.entries_touched = stepper.accepted_steps() *
                         static_cast<std::int64_t>(f0.window().size());
  return traj;
}

// ---------------------------------------------------------------------------
// Trajectory-level certificates.
// ---------------------------------------------------------------------------

// Worst breach of the pointwise exponential lower bound
//   f(t,k) >= e^{-2 c_upper m (t - s)} f(s,k)   for every recorded pair s < t.
// Checked exactly over all pairs in O(T K): in the rescaled variable
// Gi = f(t_i,k) e^{lambda t_i} the bound says Gi never drops below its own
// running maximum, up to the slack.
inline double exp_lower_bound_defect(const Trajectory& traj, double c_upper) {
  if (traj.times.empty()) return 0.0;
  const double lambda = 2.0 * c_upper * traj.moment_sets.front().mass;
  const int size = traj.window.size();
  double worst = 0.0;
  std::vector<double> runmax(size, -1.0);
  for (std::size_t i = 0; i < traj.times.size(); ++i) {
    const double growth = std::exp(lambda * traj.times[i]);
    const auto vals = traj.states[i].values();
    for (int j = 0; j < size; ++j) {
      const double g = vals[j] * growth;
      if (runmax[j] >= 0.0) {
        worst = std::max(worst, (runmax[j] - g) / growth);
      }
      runmax[j] = std::max(runmax[j], g);
    }
  }
  return std::max(worst, 0.0);
}

// Worst breach of the linear growth bound
//   ||f(t)||_{1,1} <= ||f0||_{1,1} + 2 c_upper mass(f0)^2 t.
inline double l11_growth_defect(const Trajectory& traj, double c_upper) {
  if (traj.times.empty()) return 0.0;
  const MomentSet& m0 = traj.moment_sets.front();
  double worst = 0.0;
  for (std::size_t i = 0; i < traj.times.size(); ++i) {
    const double bound =
        m0.l11 + 2.0 * c_upper * m0.mass * m0.mass * traj.times[i];
    worst = std::max(worst, traj.moment_sets[i].l11 - bound);
  }
  return std::max(worst, 0.0);
}

// ---------------------------------------------------------------------------
// Refinement study: rerun the same initial state under growing truncations
// and report the worst l11 gap against a reference run at twice the largest
// requested half-width, over the shared time grid.
// ---------------------------------------------------------------------------

struct RefinementRow {
  int n;
  double sup_discrepancy;
};

inline std::vector<RefinementRow> refinement_study(
    const Kernel& kern, const Density& f0, double t_end,
    const std::vector<int>& n_list, const IntegratorConfig& base = {}) {
  require(!n_list.empty(), "refinement needs at least one half-width");
  for (std::size_t i = 0; i < n_list.size(); ++i) {
    require(n_list[i] >= 1, "half-widths must be >= 1");
    require(i == 0 || n_list[i] > n_list[i - 1],
            "half-widths must be strictly increasing");
  }
  const int n_ref = 2 * n_list.back();

  // One shared macro step for every run: smaller truncations only lose mass,
  // so the full-state step is admissible for all of them.
  IntegratorConfig cfg = base;
  cfg.t_end = t_end;
  const MomentSet m0 = moments(f0);
  const double rate_cap = 2.0 * kern.c_upper() * m0.mass;
  if (rate_cap > 0.0) cfg.dt_max = std::min(cfg.dt_max, cfg.safety / rate_cap);

  const Trajectory ref =
      evolve(truncate(kern, n_ref), embed(f0, Window(n_ref)), cfg);

  std::vector<RefinementRow> rows;
  for (int n : n_list) {
    const Trajectory run =
        evolve(truncate(kern, n), embed(f0, Window(n)), cfg);
    require(run.times.size() == ref.times.size(),
            "refinement runs fell out of step");
    double worst = 0.0;
    for (std::size_t i = 0; i < run.times.size(); ++i) {
      worst = std::max(worst, l11_distance(run.states[i], ref.states[i]));
    }
    rows.push_back({n, worst});
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Scaling consistency: g(t) := gamma f(gamma t) solves the same system when
// the initial state is scaled by gamma (the kernel scale absorbs the time
// scale).  Runs both sides on aligned grids and reports the worst l11 gap.
// ---------------------------------------------------------------------------

struct RescaleReport {
  double gamma = 1.0;
  double max_discrepancy = 0.0;
  double tolerance = 1e-8;
  bool pass = false;
};

inline RescaleReport rescale_check(const TruncatedKernel& kern,
                                   const Density& f0, double gamma,
                                   double t_end = 1.0,
                                   const IntegratorConfig& base = {}) {
  require(std::isfinite(gamma) && gamma > 0.0, "gamma must be > 0");

  std::vector<double> scaled(f0.values().begin(), f0.values().end());
  for (double& v : scaled) v *= gamma;
  const Density f0_b(f0.window(), std::move(scaled));

  IntegratorConfig cfg_b = base;
  cfg_b.t_end = t_end;
  const double rate_cap = 2.0 * kern.base.c_upper() * moments(f0_b).mass;
  if (rate_cap > 0.0) cfg_b.dt_max = std::min(cfg_b.dt_max, cfg_b.safety / rate_cap);
  const Trajectory run_b = evolve(kern, f0_b, cfg_b);

  IntegratorConfig cfg_a = cfg_b;
  cfg_a.t_end = gamma * t_end;
  cfg_a.dt_max = gamma * run_b.dt;
  const Trajectory run_a = evolve(kern, f0, cfg_a);
  require(run_a.times.size() == run_b.times.size(),
          "rescaled runs fell out of step");

  RescaleReport rep;
  rep.gamma = gamma;
  for (std::size_t i = 0; i < run_b.times.size(); ++i) {
    KahanSum acc;
    const Window& w = f0.window();
    const auto a = run_a.states[i].values();
    const auto b = run_b.states[i].values();
    for (int idx = 0; idx < w.size(); ++idx) {
      const double k = std::abs(static_cast<double>(w.k_at(idx)));
      acc.add((1.0 + k) * std::abs(gamma * a[idx] - b[idx]));
    }
    rep.max_discrepancy = std::max(rep.max_discrepancy, acc.value());
  }
  rep.pass = rep.max_discrepancy <= rep.tolerance;
  return rep;
}

// ---------------------------------------------------------------------------
// Mirror symmetry: if K(k,l) = K(-l,-k) on the window and f0 is even, the
// flow stays even.  Reported as not applicable when either premise fails.
// ---------------------------------------------------------------------------

struct SymmetryReport {
  bool kernel_symmetric = false;
  bool initial_symmetric = false;
  bool applicable = false;
  double max_asymmetry = 0.0;
  double tolerance = 1e-10;
  bool pass = false;
};

inline SymmetryReport symmetry_check(const TruncatedKernel& kern,
                                     const Density& f0, double t_end = 1.0,
                                     const IntegratorConfig& base = {}) {
  SymmetryReport rep;
  const int n = f0.window().n();
  rep.kernel_symmetric = true;
  for (int k = -n; k <= n && rep.kernel_symmetric; ++k) {
    for (int l = -n; l <= n; ++l) {
      if (kern(k, l) != kern(-l, -k)) {
        rep.kernel_symmetric = false;
        break;
      }
    }
  }
  rep.initial_symmetric = true;
  for (int k = 1; k <= n; ++k) {
    if (f0.at(k) != f0.at(-k)) {
      rep.initial_symmetric = false;
      break;
    }
  }
  rep.applicable = rep.kernel_symmetric && rep.initial_symmetric;
  if (!rep.applicable) return rep;

  IntegratorConfig cfg = base;
  cfg.t_end = t_end;
  const Trajectory run = evolve(kern, f0, cfg);
  for (const Density& state : run.states) {
    for (int k = 1; k <= n; ++k) {
      rep.max_asymmetry =
          std::max(rep.max_asymmetry, std::abs(state.at(k) - state.at(-k)));
    }
  }
  rep.pass = rep.max_asymmetry <= rep.tolerance;
  return rep;
}

// ---------------------------------------------------------------------------
// Trajectory CSV:  t,mass,charge,abs_charge,l11,clamp_count with optional
// entropy columns appended by the caller.
// ---------------------------------------------------------------------------

inline void write_trajectory_csv(
    std::ostream& os, const Trajectory& traj,
    const std::vector<double>* entropy = nullptr,
    const std::vector<double>* production = nullptr) {
  const bool with_entropy = entropy != nullptr && production != nullptr;
  os << "t,mass,charge,abs_charge,l11,clamp_count";
  if (with_entropy) os << ",entropy,wN";
  os << '\n';
  for (std::size_t i = 0; i < traj.times.size(); ++i) {
    const MomentSet& m = traj.moment_sets[i];
    os << format_double(traj.times[i]) << ',' << format_double(m.mass) << ','
       << format_double(m.charge) << ',' << format_double(m.abs_charge) << ','
       << format_double(m.l11) << ',' << traj.clamp_counts[i];
    if (with_entropy) {
      os << ',' << format_double((*entropy)[i]) << ','
         << format_double((*production)[i]);
    }
    os << '\n';
  }
}

}  // namespace xck
