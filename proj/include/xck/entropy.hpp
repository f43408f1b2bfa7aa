// entropy.hpp — relative entropy against a positive reference, the finite
// system's entropy production functional, the dissipation identity checks,
// weighted moment and trajectory bounds, a weighted total-variation
// (CKP-style) inequality, equilibrium stability probing, and pointwise
// lower-bound certificates.
//
// Zero conventions (fixed throughout):
//   * relative entropy: 0 log 0 = 0; the reference must be strictly positive;
//   * production terms (x - y) log(x / y): both x and y zero gives 0, exactly
//     one zero gives +infinity (returned as a value, not an error) — states
//     are strictly positive for t > 0, so infinities only occur at t = 0,
//     and the dissipation checks skip that sample.

#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "xck/equilibrium.hpp"
#include "xck/evolve.hpp"
#include "xck/kernel.hpp"
#include "xck/lattice.hpp"
#include "xck/numerics.hpp"

namespace xck {

// ---------------------------------------------------------------------------
// Relative entropy H(f|g) = sum f log(f/g).
// ---------------------------------------------------------------------------

inline double relative_entropy(const Density& f, const Density& g) {
  require(f.window() == g.window(), "relative entropy needs equal windows");
  const auto fv = f.values();
  const auto gv = g.values();
  KahanSum acc;
  for (std::size_t i = 0; i < fv.size(); ++i) {
    if (!(gv[i] > 0.0)) {
      throw std::invalid_argument(
          "relative entropy reference must be strictly positive");
    }
    if (fv[i] > 0.0) acc.add(fv[i] * (std::log(fv[i]) - std::log(gv[i])));
  }
  double h = acc.value();
  if (h < 0.0 && h >= -1e-12) h = 0.0;  // rounding of an exact zero
  return h;
}

// ---------------------------------------------------------------------------
// Entropy production
//   W(g) = 1/2 sum_{k,l=-N}^{N-1} (x - y) log(x / y),
//   x = K(l+1,k) g(l+1) g(k),  y = K(k+1,l) g(k+1) g(l).
// The evaluator caches the kernel values (and their logs) on the index
// square so repeated evaluation along a trajectory costs additions only.
// ---------------------------------------------------------------------------

class ProductionEvaluator {
 public:
  ProductionEvaluator(const TruncatedKernel& kern, Window w)
      : window_(w), n_(kern.n) {
    require(w.n() >= kern.n,
            "state window must contain the truncation square");
    const int side = 2 * n_ + 1;
    ktab_.assign(static_cast<std::size_t>(side) * side, 0.0);
    log_ktab_.assign(static_cast<std::size_t>(side) * side,
                     -std::numeric_limits<double>::infinity());
    for (int a = -n_ + 1; a <= n_; ++a) {
      for (int b = -n_; b <= n_ - 1; ++b) {
        const double v = kern.base(a, b);
        require(v >= 0.0 && std::isfinite(v),
                "kernel values must be finite and nonnegative");
        ktab_[slot(a, b)] = v;
        if (v > 0.0) log_ktab_[slot(a, b)] = std::log(v);
      }
    }
    log_g_.resize(static_cast<std::size_t>(w.size()));
  }

  double operator()(const Density& g) const {
    require(g.window() == window_, "production evaluator window mismatch");
    const auto gv = g.values();
    for (std::size_t i = 0; i < gv.size(); ++i) {
      log_g_[i] = gv[i] > 0.0 ? std::log(gv[i])
                              : -std::numeric_limits<double>::infinity();
    }
    const auto at = [&](int k) {
      return gv[static_cast<std::size_t>(window_.offset(k))];
    };
    const auto lg = [&](int k) {
      return log_g_[static_cast<std::size_t>(window_.offset(k))];
    };
    KahanSum acc;
    for (int k = -n_; k <= n_ - 1; ++k) {
      for (int l = -n_; l <= n_ - 1; ++l) {
        const double x = ktab_[slot(l + 1, k)] * at(l + 1) * at(k);
        const double y = ktab_[slot(k + 1, l)] * at(k + 1) * at(l);
        if (x == 0.0 && y == 0.0) continue;
        if (x == 0.0 || y == 0.0) {
          return std::numeric_limits<double>::infinity();
        }
        const double log_x = log_ktab_[slot(l + 1, k)] + lg(l + 1) + lg(k);
        const double log_y = log_ktab_[slot(k + 1, l)] + lg(k + 1) + lg(l);
        acc.add((x - y) * (log_x - log_y));
      }
    }
    return std::max(0.0, 0.5 * acc.value());
  }

  // Worst relative imbalance |x - y| / max(x, y) over the index square;
  // zero exactly when g is a stationary point of the truncated dynamics.
  double balance_defect(const Density& g) const {
    require(g.window() == window_, "production evaluator window mismatch");
    const auto at = [&](int k) {
      return g.values()[static_cast<std::size_t>(window_.offset(k))];
    };
    double worst = 0.0;
    for (int k = -n_; k <= n_ - 1; ++k) {
      for (int l = -n_; l <= n_ - 1; ++l) {
        const double x = ktab_[slot(l + 1, k)] * at(l + 1) * at(k);
        const double y = ktab_[slot(k + 1, l)] * at(k + 1) * at(l);
        const double scale = std::max(x, y);
        if (scale > 0.0) worst = std::max(worst, std::abs(x - y) / scale);
      }
    }
    return worst;
  }

 private:
  std::size_t slot(int a, int b) const {
    return static_cast<std::size_t>(a + n_) *
               static_cast<std::size_t>(2 * n_ + 1) +
           static_cast<std::size_t>(b + n_);
  }

  Window window_;
  int n_;
  std::vector<double> ktab_;
  std::vector<double> log_ktab_;
  mutable std::vector<double> log_g_;
};

inline double entropy_production(const TruncatedKernel& kern,
                                 const Density& f) {
  return ProductionEvaluator(kern, f.window())(f);
}

// ---------------------------------------------------------------------------
// Dissipation identities along a trajectory:
//   d/dt H(f(t)|g) = -W(f(t))   and   H(t) + int_s^t W = H(s).
// ---------------------------------------------------------------------------

struct EntropyReport {
  std::vector<double> h_series;  // H(f(t_i) | reference)
  std::vector<double> w_series;  // W(f(t_i))
  double balance_defect = 0.0;   // reference stationarity defect (gate)
  double max_increase = 0.0;     // worst H(t_{i+1}) - H(t_i)
  double dissipation_defect = 0.0;
  double integral_defect = 0.0;
  double tol_monotone = 1e-9;
  double tol_d = 1e-3;
  double tol_i = 1e-4;
  bool h_nonincreasing = false;
  bool dissipation_ok = false;
  bool integral_ok = false;
  bool pass = false;
};

inline EntropyReport dissipation_check(const Trajectory& traj,
                                       const Density& reference,
                                       const TruncatedKernel& kern,
                                       double tol_d = 1e-3,
                                       double tol_i = 1e-4) {
  require(reference.window() == traj.window,
          "reference window must match the trajectory window");
  for (double v : reference.values()) {
    if (!(v > 0.0)) {
      throw std::invalid_argument(
          "dissipation check needs a strictly positive reference");
    }
  }
  ProductionEvaluator wn(kern, traj.window);

  EntropyReport rep;
  rep.tol_d = tol_d;
  rep.tol_i = tol_i;
  rep.balance_defect = wn.balance_defect(reference);
  if (rep.balance_defect > 1e-10) {
    throw std::invalid_argument(
        "reference is not stationary for this kernel (flux imbalance " +
        format_double(rep.balance_defect) + ")");
  }

  const std::size_t count = traj.times.size();
  rep.h_series.reserve(count);
  rep.w_series.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    rep.h_series.push_back(relative_entropy(traj.states[i], reference));
    rep.w_series.push_back(wn(traj.states[i]));
  }

  for (std::size_t i = 0; i + 1 < count; ++i) {
    rep.max_increase =
        std::max(rep.max_increase, rep.h_series[i + 1] - rep.h_series[i]);
  }
  rep.h_nonincreasing = rep.max_increase <= rep.tol_monotone;

  for (std::size_t i = 1; i + 1 < count; ++i) {
    if (!std::isfinite(rep.w_series[i])) continue;
    const double slope = (rep.h_series[i + 1] - rep.h_series[i - 1]) /
                         (traj.times[i + 1] - traj.times[i - 1]);
    rep.dissipation_defect =
        std::max(rep.dissipation_defect, std::abs(slope + rep.w_series[i]));
  }
  rep.dissipation_ok = rep.dissipation_defect <= tol_d;

  // H(t) + int_{t_first}^{t} W constant over samples with finite W (the
  // production may be infinite at t = 0 when the initial state has zeros).
  std::size_t first = 0;
  while (first < count && !std::isfinite(rep.w_series[first])) ++first;
  if (first < count) {
    double cumulative = 0.0;
    double lo = rep.h_series[first], hi = rep.h_series[first];
    for (std::size_t i = first + 1; i < count; ++i) {
      cumulative += 0.5 * (rep.w_series[i - 1] + rep.w_series[i]) *
                    (traj.times[i] - traj.times[i - 1]);
      const double a = rep.h_series[i] + cumulative;
      lo = std::min(lo, a);
      hi = std::max(hi, a);
    }
    rep.integral_defect = hi - lo;
  }
  rep.integral_ok = rep.integral_defect <= tol_i;

  rep.pass = rep.h_nonincreasing && rep.dissipation_ok && rep.integral_ok;
  return rep;
}

// ---------------------------------------------------------------------------
// Weighted moment bound: for unit-mass f and a strictly positive unit-mass
// reference with f_*(k) <= exp(-h(k)) for |k| >= n0,
//   sum h f  <=  max_{|k|<n0} h + 2 H(f|f_*) + sum h e^{-h/2} + 2.
// ---------------------------------------------------------------------------

struct MomentBoundReport {
  double lhs = 0.0;
  double rhs = 0.0;
  bool pass = false;
};

inline MomentBoundReport weighted_moment_bound(
    const Density& f, const Density& f_star,
    const std::function<double(int)>& h, int n0) {
  require(f.window() == f_star.window(),
          "weighted moment bound needs equal windows");
  require(n0 >= 1, "the cutoff index must be >= 1");
  const Window& w = f.window();
  const int n = w.n();

  double h_inner_max = 0.0;
  KahanSum lhs, envelope;
  for (int k = -n; k <= n; ++k) {
    const double hk = h(k);
    require(std::isfinite(hk) && hk >= 0.0,
            "weight must be finite and nonnegative");
    if (std::abs(k) >= n0 && !(f_star.at(k) <= std::exp(-hk))) {
      throw std::invalid_argument(
          "reference decay premise fails at k = " + std::to_string(k));
    }
    if (std::abs(k) < n0) h_inner_max = std::max(h_inner_max, hk);
    lhs.add(hk * f.at(k));
    envelope.add(hk * std::exp(-0.5 * hk));
  }

  MomentBoundReport rep;
  rep.lhs = lhs.value();
  rep.rhs = h_inner_max + 2.0 * relative_entropy(f, f_star) +
            envelope.value() + 2.0;
  rep.pass = rep.lhs <= rep.rhs;
  return rep;
}

// ---------------------------------------------------------------------------
// Trajectory norm bound via the moment bound with the linear weight
// h(k) = delta_h |k|, delta_h = -log(rho)/2, where rho < 1 is a geometric
// decay ratio of the reference:
//   sup_t ||f(t)||_{1,1} <= (max_{|k|<n0} h + 2 H(f(0)|ref)
//                            + sum_{|k|>=n0} h e^{-h/2} + 2) / delta_h + 1.
// ---------------------------------------------------------------------------

struct TrajectoryBoundReport {
  double delta_h = 0.0;
  int n0 = 0;          // smallest admissible decay cutoff on the window
  double h0 = 0.0;     // initial relative entropy
  double bound = 0.0;
  double sup_l11 = 0.0;
  bool pass = false;
};

inline TrajectoryBoundReport trajectory_l11_bound(const Trajectory& traj,
                                                  const Density& reference,
                                                  double rho) {
  require(rho > 0.0 && rho < 1.0, "decay ratio must lie in (0,1)");
  require(reference.window() == traj.window,
          "reference window must match the trajectory window");
  require(!traj.states.empty(), "trajectory has no recorded states");

  TrajectoryBoundReport rep;
  rep.delta_h = -0.5 * std::log(rho);
  const int n = traj.window.n();

  int worst_violation = 0;
  for (int k = -n; k <= n; ++k) {
    if (!(reference.at(k) <= std::exp(-rep.delta_h * std::abs(k)))) {
      worst_violation = std::max(worst_violation, std::abs(k));
    }
  }
  if (worst_violation >= n) {
    throw std::runtime_error(
        "reference does not satisfy the decay envelope on this window");
  }
  rep.n0 = worst_violation + 1;

  rep.h0 = relative_entropy(traj.states.front(), reference);
  KahanSum envelope;
  for (int k = -n; k <= n; ++k) {
    if (std::abs(k) < rep.n0) continue;
    const double hk = rep.delta_h * std::abs(k);
    envelope.add(hk * std::exp(-0.5 * hk));
  }
  const double h_inner_max = rep.delta_h * (rep.n0 - 1);
  rep.bound =
      (h_inner_max + 2.0 * rep.h0 + envelope.value() + 2.0) / rep.delta_h +
      1.0;

  for (const MomentSet& m : traj.moment_sets) {
    rep.sup_l11 = std::max(rep.sup_l11, m.l11);
  }
  rep.pass = rep.sup_l11 <= rep.bound;
  return rep;
}

// ---------------------------------------------------------------------------
// Weighted total-variation bound: for unit-mass mu, strictly positive
// unit-mass nu, and a nonnegative weight,
//   sum w |mu - nu| <= (3/2 + sum e^{2w} nu)(sqrt(H) + H/2),  H = H(mu|nu).
// ---------------------------------------------------------------------------

struct CkpReport {
  double lhs = 0.0;
  double rhs = 0.0;
  double entropy = 0.0;
  double exp_moment = 0.0;
  bool pass = false;
};

inline CkpReport ckp_check(const Density& mu, const Density& nu,
                           const std::function<double(int)>& phi_w) {
  require(mu.window() == nu.window(), "weighted bound needs equal windows");
  const Window& w = mu.window();
  CkpReport rep;
  rep.entropy = relative_entropy(mu, nu);
  KahanSum lhs, moment;
  for (int k = -w.n(); k <= w.n(); ++k) {
    const double wk = phi_w(k);
    require(std::isfinite(wk) && wk >= 0.0,
            "weight must be finite and nonnegative");
    lhs.add(wk * std::abs(mu.at(k) - nu.at(k)));
    const double term = std::exp(2.0 * wk) * nu.at(k);
    if (!std::isfinite(term)) {
      throw std::overflow_error(
          "exponential moment overflow in the weighted distance bound");
    }
    moment.add(term);
  }
  rep.exp_moment = moment.value();
  if (!std::isfinite(rep.exp_moment)) {
    throw std::overflow_error(
        "exponential moment overflow in the weighted distance bound");
  }
  rep.lhs = lhs.value();
  rep.rhs = (1.5 + rep.exp_moment) *
            (std::sqrt(rep.entropy) + 0.5 * rep.entropy);
  rep.pass = rep.lhs <= rep.rhs;
  return rep;
}

// ---------------------------------------------------------------------------
// Stability probe: perturb the windowed equilibrium by mass-preserving
// symmetric two-site transfers of prescribed weighted-norm size, evolve,
// and compare the supremum deviation against the entropy-based bound
//   ||f(t) - f_phi||_{1,1} <= (3/2 + S)(sqrt(H0) + H0/2) / alpha,
//   S = sum e^{2 alpha (1+|k|)} f_phi(k),
// with alpha half the exponential-moment margin of the equilibrium decay.
// ---------------------------------------------------------------------------

struct StabilityRow {
  double delta = 0.0;          // prescribed perturbation size
  double h0 = 0.0;             // H(f0 | reference)
  double sup_deviation = 0.0;  // sup over recorded times of weighted distance
  double ckp_bound = 0.0;
  bool within_bound = false;
};

struct EpsilonRow {
  double epsilon = 0.0;
  double delta = 0.0;  // largest probed delta whose deviation stays below
  bool achieved = false;
};

struct StabilityTable {
  double phi = 0.0;
  double alpha = 0.0;
  double exp_moment = 0.0;
  std::vector<StabilityRow> rows;
  std::vector<EpsilonRow> eps_rows;
  bool deviations_decreasing = false;
};

inline StabilityTable stability_probe(const TruncatedKernel& kern,
                                      const EquilibriumFamily& fam,
                                      double phi,
                                      const std::vector<double>& epsilon_grid,
                                      const std::vector<double>& delta_grid,
                                      double t_end,
                                      const IntegratorConfig& base = {},
                                      int threads = 1) {
  require(threads >= 1, "thread count must be >= 1");
  require(kern.n >= 3, "stability probe needs a window half-width >= 3");
  require(t_end > 0.0, "t_end must be > 0");
  const Window w(kern.n);
  const Density g = fam.equilibrium_density(phi, w).normalized();

  StabilityTable table;
  table.phi = phi;
  const double rho =
      std::max(phi / fam.phi_plus(), fam.phi_minus() / phi);
  require(rho < 1.0, "phi must lie strictly inside the admissible interval");
  table.alpha = -0.25 * std::log(rho);

  KahanSum moment;
  for (int k = -w.n(); k <= w.n(); ++k) {
    moment.add(std::exp(2.0 * table.alpha * (1.0 + std::abs(k))) * g.at(k));
  }
  table.exp_moment = moment.value();
  require(std::isfinite(table.exp_moment),
          "exponential moment overflow in the stability bound");

  // Perturbation direction: move mass from +/-1 to +/-3 — mass preserved,
  // charge preserved by symmetry, weighted norm 12 per unit transfer.
  const double direction_norm = 12.0;

  auto weighted_distance = [&w](const Density& a, const Density& b) {
    KahanSum acc;
    for (int k = -w.n(); k <= w.n(); ++k) {
      acc.add((1.0 + std::abs(k)) * std::abs(a.at(k) - b.at(k)));
    }
    return acc.value();
  };

  for (double delta : delta_grid) {
    require(delta >= 0.0, "perturbation sizes must be >= 0");
    require(delta / direction_norm <= std::min(g.at(1), g.at(-1)),
            "perturbation size exceeds the available mass at the donor sites");
  }

  // Each row is an independent run; rows land in their input slot, so the
  // table is identical for every thread count.
  table.rows.assign(delta_grid.size(), StabilityRow{});
  auto compute_row = [&](std::size_t idx) {
    const double delta = delta_grid[idx];
    const double theta = delta / direction_norm;
    std::vector<double> vals(g.values().begin(), g.values().end());
    vals[static_cast<std::size_t>(w.offset(1))] -= theta;
    vals[static_cast<std::size_t>(w.offset(-1))] -= theta;
    vals[static_cast<std::size_t>(w.offset(3))] += theta;
    vals[static_cast<std::size_t>(w.offset(-3))] += theta;
    const Density f0(w, std::move(vals));

    StabilityRow row;
    row.delta = delta;
    row.h0 = relative_entropy(f0, g);
    row.ckp_bound = (1.5 + table.exp_moment) *
                    (std::sqrt(row.h0) + 0.5 * row.h0) / table.alpha;

    IntegratorConfig cfg = base;
    cfg.t_end = t_end;
    const Trajectory traj = evolve(kern, f0, cfg);
    for (const Density& state : traj.states) {
      row.sup_deviation =
          std::max(row.sup_deviation, weighted_distance(state, g));
    }
    row.within_bound = row.sup_deviation <= row.ckp_bound;
    table.rows[idx] = row;
  };
  const int workers =
      std::min<int>(threads, static_cast<int>(delta_grid.size()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < delta_grid.size(); ++i) compute_row(i);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> failures(
        static_cast<std::size_t>(workers));
    pool.reserve(static_cast<std::size_t>(workers));
    for (int t = 0; t < workers; ++t) {
      pool.emplace_back([&, t]() {
        try {
          for (std::size_t i = static_cast<std::size_t>(t);
               i < delta_grid.size();
               i += static_cast<std::size_t>(workers)) {
            compute_row(i);
          }
        } catch (...) {
          failures[static_cast<std::size_t>(t)] = std::current_exception();
        }
      });
    }
    for (std::thread& th : pool) th.join();
    for (const std::exception_ptr& e : failures) {
      if (e) std::rethrow_exception(e);
    }
  }

  table.deviations_decreasing = true;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    for (std::size_t j = i + 1; j < table.rows.size(); ++j) {
      if (table.rows[i].delta > table.rows[j].delta &&
          table.rows[i].sup_deviation <
              table.rows[j].sup_deviation - 1e-12) {
        table.deviations_decreasing = false;
      }
    }
  }

  for (double eps : epsilon_grid) {
    EpsilonRow er;
    er.epsilon = eps;
    for (const StabilityRow& row : table.rows) {
      if (row.sup_deviation < eps && row.delta >= er.delta) {
        er.delta = row.delta;
        er.achieved = true;
      }
    }
    table.eps_rows.push_back(er);
  }
  return table;
}

// ---------------------------------------------------------------------------
// Pointwise lower-bound certificate, seeded at a site k0 with f0(k0) > 0:
//   f(t, k0 + l) >= (c m)^{|l|} f0(k0) e^{-2 C m t} (2C + sigma/(t0 a_{|l|}))^{-|l|}
// valid for t >= t0 * sigma_{|l|} / sigma, where (a_j) is a nonincreasing
// positive sequence with full sum sigma and partial sums sigma_j, C is the
// kernel upper bound and c > 0 its strict positivity floor.
// ---------------------------------------------------------------------------

enum class Aseq { kGeometric, kQuadratic };

struct LowerBoundCertificate {
  int k0 = 0;
  double t0 = 1.0;
  double c_upper = 0.0;
  double c_lower = 0.0;
  double mass = 0.0;
  double f0k = 0.0;
  int l_max = 0;
  double sigma = 0.0;
  std::vector<double> sigma_partial;  // sigma_0 .. sigma_{l_max}
  std::vector<double> log_prefactor;  // per |l|

  double valid_from(int l) const {
    const int al = std::abs(l);
    require(al <= l_max, "offset exceeds the tabulated range");
    return t0 * sigma_partial[static_cast<std::size_t>(al)] / sigma;
  }

  double bound(int l, double t) const {
    const int al = std::abs(l);
    require(al <= l_max, "offset exceeds the tabulated range");
    return std::exp(log_prefactor[static_cast<std::size_t>(al)] -
                    2.0 * c_upper * mass * t);
  }
};

inline LowerBoundCertificate lower_bound_certificate(
    double c_upper, std::optional<double> c_lower, double mass,
    double f0_at_k0, int k0, Aseq a_seq, double t0, int l_max) {
  if (!c_lower.has_value() || !(*c_lower > 0.0)) {
    throw std::invalid_argument(
        "no strict positivity floor available for this kernel; the "
        "lower-bound certificate requires one");
  }
  require(std::isfinite(c_upper) && c_upper >= *c_lower,
          "kernel bounds must satisfy 0 < floor <= cap");
  require(mass > 0.0 && std::isfinite(mass), "mass must be > 0");
  require(f0_at_k0 > 0.0, "the seed site must carry positive mass");
  require(t0 > 0.0, "t0 must be > 0");
  require(l_max >= 0, "l_max must be >= 0");

  LowerBoundCertificate cert;
  cert.k0 = k0;
  cert.t0 = t0;
  cert.c_upper = c_upper;
  cert.c_lower = *c_lower;
  cert.mass = mass;
  cert.f0k = f0_at_k0;
  cert.l_max = l_max;

  std::vector<double> a(static_cast<std::size_t>(l_max) + 1, 0.0);
  if (a_seq == Aseq::kGeometric) {
    cert.sigma = 1.0;
    for (int j = 1; j <= l_max; ++j) {
      a[static_cast<std::size_t>(j)] = std::pow(2.0, -j);
    }
  } else {
    cert.sigma = std::numbers::pi * std::numbers::pi / 6.0;
    for (int j = 1; j <= l_max; ++j) {
      a[static_cast<std::size_t>(j)] =
          1.0 / (static_cast<double>(j) * static_cast<double>(j));
    }
  }

  cert.sigma_partial.assign(static_cast<std::size_t>(l_max) + 1, 0.0);
  cert.log_prefactor.assign(static_cast<std::size_t>(l_max) + 1,
                            std::log(f0_at_k0));
  for (int l = 1; l <= l_max; ++l) {
    const auto i = static_cast<std::size_t>(l);
    cert.sigma_partial[i] = cert.sigma_partial[i - 1] + a[i];
    cert.log_prefactor[i] =
        std::log(f0_at_k0) +
        l * (std::log(cert.c_lower * mass) -
             std::log(2.0 * c_upper + cert.sigma / (t0 * a[i])));
  }
  return cert;
}

// Worst breach of the certificate over all recorded valid times and all
// offsets |l| <= l_max; requires the probed sites to lie in the window.
inline double certificate_defect(const LowerBoundCertificate& cert,
                                 const Trajectory& traj) {
  require(traj.window.contains(cert.k0 - cert.l_max) &&
              traj.window.contains(cert.k0 + cert.l_max),
          "certificate range exceeds the trajectory window");
  double worst = 0.0;
  for (int l = -cert.l_max; l <= cert.l_max; ++l) {
    const double t_min = cert.valid_from(l);
    for (std::size_t i = 0; i < traj.times.size(); ++i) {
      if (traj.times[i] < t_min - 1e-12) continue;
      const double lower = cert.bound(l, traj.times[i]);
      const double actual = traj.states[i].at(cert.k0 + l);
      worst = std::max(worst, lower - actual);
    }
  }
  return worst;
}

}  // namespace xck
