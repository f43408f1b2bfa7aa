// equilibrium.hpp — the detailed-balance family of a kernel: the ladder
// weight psi, the scale kappa, the tail limits lambda_+/-, the admissible
// interval (phi_minus, phi_plus), the partition function Z(phi), the density
// f_phi(k) = psi(k) phi^k / Z(phi), and the charge map phi -> q(f_phi) with
// its bisection inverse.
//
// Series policy (two-sided sums): terms are paired symmetrically
// (k and -k together) and accumulated with compensated summation.  A sum is
// accepted once `ratio_run` consecutive pairs are both below
// rel_tol * |partial| and strictly smaller than their predecessor.  A sum is
// declared divergent — returning +infinity rather than throwing — when the
// pair budget runs out, or when pairs fail to decrease for `nondecay_run`
// consecutive steps with no prospect of turning over: polynomially weighted
// pairs (the charge series carries a factor k) legitimately climb toward a
// single peak near 1/(1-ratio) first, so growth only counts against the run
// when the implied geometric ratio puts that peak beyond the remaining
// budget.  Arguments outside the closed admissible interval are rejected up
// front (the series has no meaning there).

#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "xck/collision.hpp"
#include "xck/kernel.hpp"
#include "xck/lattice.hpp"
#include "xck/numerics.hpp"

namespace xck {

// Raised when a kernel admits no detailed-balance family (empty admissible
// interval) or the ladder limits cannot be certified at the probe depth.
struct FamilyError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Raised when a requested charge lies outside the numerically bracketed
// range of the charge map.
struct SupercriticalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SeriesBudget {
  std::int64_t max_pairs = 1'000'000;
  double rel_tol = 1e-15;
  int ratio_run = 8;       // consecutive certified pairs before accepting
  int nondecay_run = 256;  // consecutive non-decreasing pairs before +inf

  void validate() const {
    require(max_pairs >= 1, "series budget needs max_pairs >= 1");
    require(rel_tol > 0.0 && rel_tol < 1.0, "series rel_tol must be in (0,1)");
    require(ratio_run >= 1 && nondecay_run >= 1,
            "series run lengths must be >= 1");
  }
};

struct EquilibriumDensity {
  double phi = 0.0;
  double z = 0.0;  // full-lattice partition value used for normalization
  Window window;
  std::vector<double> values;  // f_phi(k) for |k| <= n
  double tail_mass = 0.0;      // 1 - sum(values): mass beyond the window

  Density as_density() const { return Density(window, values); }

  // Windowed values rescaled to unit mass.  The restriction of f_phi to a
  // window is itself stationary for the truncated system (the balance
  // relation is preserved under both truncation and scaling), which makes
  // this the natural finite-system reference state.
  Density normalized() const {
    KahanSum s;
    for (double v : values) s.add(v);
    const double total = s.value();
    require(total > 0.0, "cannot normalize an empty equilibrium window");
    std::vector<double> scaled(values);
    for (double& v : scaled) v /= total;
    return Density(window, std::move(scaled));
  }
};

class EquilibriumFamily {
 public:
  static EquilibriumFamily build(const Kernel& kern, int limit_probe = 4096) {
    require(limit_probe >= 4, "limit_probe must be >= 4");
    EquilibriumFamily fam(kern);
    fam.kappa_ = kernel_kappa(kern);

    if (kern.ladder_limits()) {
      fam.lambda_plus_ = kern.ladder_limits()->lambda_plus;
      fam.lambda_minus_ = kern.ladder_limits()->lambda_minus;
    } else {
      fam.lambda_plus_ = probe_limit(
          [&kern](int j) {
            const double den = kern(1, j - 1);
            require(den > 0.0, "ladder probe hit a nonpositive entry");
            return kern(j, 0) / den;
          },
          limit_probe, "upper");
      fam.lambda_minus_ = probe_limit(
          [&kern](int j) {
            const double den = kern(-j + 1, -1);
            require(den > 0.0, "ladder probe hit a nonpositive entry");
            return kern(0, -j) / den;
          },
          limit_probe, "lower");
    }

    require(fam.lambda_plus_ > 0.0 && fam.lambda_minus_ > 0.0,
            "ladder limits must be positive");
    fam.phi_minus_ = 1.0 / (fam.lambda_minus_ * fam.kappa_);
    fam.phi_plus_ = fam.lambda_plus_ * fam.kappa_;
    if (!(fam.phi_minus_ < fam.phi_plus_)) {
      throw FamilyError("no detailed-balance family: I_K empty");
    }
    return fam;
  }

  const Kernel& kernel() const { return kernel_; }
  double kappa() const { return kappa_; }
  double lambda_plus() const { return lambda_plus_; }
  double lambda_minus() const { return lambda_minus_; }
  double phi_minus() const { return phi_minus_; }
  double phi_plus() const { return phi_plus_; }

  // log psi(k), psi(k): memoized ladder weights, computed in log-space.
  double log_psi(int k) const {
    std::lock_guard<std::mutex> lock(cache_->mu);
    ensure_cached(std::abs(k));
    return cache_->lp[cache_->kmax + k];
  }
  double psi(int k) const { return std::exp(log_psi(k)); }

  // Z(phi) over all of Z; +infinity when the series diverges.  phi must lie
  // in the closed admissible interval.
  double partition_z(double phi, const SeriesBudget& budget = {}) const {
    budget.validate();
    check_closure(phi);
    const double log_phi = std::log(phi);
    std::lock_guard<std::mutex> lock(cache_->mu);
    SeriesState st;
    std::int64_t j = 1;
    for (; j <= budget.max_pairs; ++j) {
      ensure_cached(static_cast<int>(j));
      const int base = cache_->kmax;
      const double pair = std::exp(cache_->lp[base + j] + j * log_phi) +
                          std::exp(cache_->lp[base - j] - j * log_phi);
      st.z.add(pair);
      if (!st.step(pair, budget, 1.0 + st.z.value())) break;
    }
    if (j > budget.max_pairs || st.diverged) {
      return std::numeric_limits<double>::infinity();
    }
    return 1.0 + st.z.value();
  }

  // q(f_phi) = sum k psi(k) phi^k / Z(phi).  phi must lie strictly inside
  // the admissible interval.
  double charge_of_phi(double phi, const SeriesBudget& budget = {}) const {
    budget.validate();
    check_interior(phi);
    const double log_phi = std::log(phi);
    std::lock_guard<std::mutex> lock(cache_->mu);
    SeriesState st;
    KahanSum qn;
    std::int64_t j = 1;
    for (; j <= budget.max_pairs; ++j) {
      ensure_cached(static_cast<int>(j));
      const int base = cache_->kmax;
      const double up = std::exp(cache_->lp[base + j] + j * log_phi);
      const double down = std::exp(cache_->lp[base - j] - j * log_phi);
      st.z.add(up + down);
      qn.add(static_cast<double>(j) * (up - down));
      // Control both series at once: the charge terms carry an extra
      // factor j, so weight the pair accordingly.
      const double weighted = static_cast<double>(j + 1) * (up + down);
      const double scale =
          std::max(1.0 + st.z.value(), std::abs(qn.value()));
      if (!st.step(weighted, budget, scale)) break;
    }
    if (st.diverged || j > budget.max_pairs) {
      throw std::runtime_error(
          "charge series did not converge within the pair budget");
    }
    return qn.value() / (1.0 + st.z.value());
  }

  EquilibriumDensity equilibrium_density(double phi, const Window& w,
                                         const SeriesBudget& budget = {}) const {
    check_interior(phi);
    const double z = partition_z(phi, budget);
    if (!std::isfinite(z)) {
      throw std::domain_error("partition function diverges at this phi");
    }
    EquilibriumDensity eq;
    eq.phi = phi;
    eq.z = z;
    eq.window = w;
    eq.values.resize(static_cast<std::size_t>(w.size()));
    const double log_phi = std::log(phi);
    const double log_z = std::log(z);
    {
      std::lock_guard<std::mutex> lock(cache_->mu);
      ensure_cached(w.n());
      const int base = cache_->kmax;
      for (int k = -w.n(); k <= w.n(); ++k) {
        eq.values[static_cast<std::size_t>(w.offset(k))] =
            std::exp(cache_->lp[base + k] + k * log_phi - log_z);
      }
    }
    KahanSum s;
    for (double v : eq.values) s.add(v);
    eq.tail_mass = std::max(0.0, 1.0 - s.value());
    return eq;
  }

  // Charge map values at a safety margin inside both endpoints; the
  // numerically bracketed attainable range for phi_of_charge.
  std::pair<double, double> charge_range(double margin = 1e-3,
                                         const SeriesBudget& budget = {}) const {
    const auto [lo, hi] = bracket(margin);
    return {charge_of_phi(lo, budget), charge_of_phi(hi, budget)};
  }

  double phi_of_charge(double q_target, const SeriesBudget& budget = {},
                       double margin = 1e-3) const {
    require(std::isfinite(q_target), "target charge must be finite");
    auto [lo, hi] = bracket(margin);
    double q_lo = charge_of_phi(lo, budget);
    double q_hi = charge_of_phi(hi, budget);
    if (q_target < q_lo || q_target > q_hi) {
      throw SupercriticalError(
          "target charge " + format_double(q_target) +
          " lies outside the bracketed attainable range [" +
          format_double(q_lo) + ", " + format_double(q_hi) +
          "]; equilibria with this charge are not constructed");
    }
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      const double q_mid = charge_of_phi(mid, budget);
      if (std::abs(q_mid - q_target) < 1e-10) return mid;
      if (q_mid < q_target) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    throw std::runtime_error(
        "charge bisection did not reach tolerance in 200 iterations");
  }

 private:
  explicit EquilibriumFamily(Kernel k)
      : kernel_(std::move(k)), cache_(std::make_shared<Cache>()) {}

  template <typename Ratio>
  static double probe_limit(Ratio ratio, int probe, const char* side) {
    const double half = ratio(probe / 2);
    const double full = ratio(probe);
    const double scale = std::max(std::abs(half), std::abs(full));
    if (!(std::abs(full - half) <= 1e-6 * scale)) {
      throw FamilyError(std::string("ladder limit (") + side +
                        ") not Cauchy at probe depth; provide closed-form "
                        "limits or increase the probe");
    }
    return full;
  }

  void check_closure(double phi) const {
    require(std::isfinite(phi) && phi > 0.0, "phi must be a positive real");
    if (phi < phi_minus_ || phi > phi_plus_) {
      throw std::domain_error(
          "phi outside the closed admissible interval [" +
          format_double(phi_minus_) + ", " + format_double(phi_plus_) + "]");
    }
  }

  void check_interior(double phi) const {
    require(std::isfinite(phi) && phi > 0.0, "phi must be a positive real");
    if (!(phi > phi_minus_ && phi < phi_plus_)) {
      throw std::domain_error(
          "phi outside the open admissible interval (" +
          format_double(phi_minus_) + ", " + format_double(phi_plus_) + ")");
    }
  }

  std::pair<double, double> bracket(double margin) const {
    require(margin > 0.0 && margin < 0.5, "bracket margin must be in (0,0.5)");
    if (std::isfinite(phi_plus_)) {
      const double span = phi_plus_ - phi_minus_;
      return {phi_minus_ + margin * span, phi_plus_ - margin * span};
    }
    // Unbounded interval: expand the upper probe geometrically until the
    // charge map stops being evaluable or a generous cap is hit.
    const double lo = phi_minus_ * (1.0 + margin);
    double hi = std::max(2.0 * phi_minus_, 1.0);
    for (int i = 0; i < 64; ++i) {
      const double next = 2.0 * hi;
      try {
        charge_of_phi(next);
      } catch (const std::exception&) {
        break;
      }
      hi = next;
    }
    return {lo, hi};
  }

  // Convergence / divergence bookkeeping shared by the series loops.
  struct SeriesState {
    KahanSum z;  // pair sum, excluding the psi(0) = 1 center term
    double prev_pair = std::numeric_limits<double>::infinity();
    std::int64_t index = 0;
    int ok_run = 0;
    int flat_run = 0;
    bool diverged = false;

    // Returns false when the loop should stop (converged or diverged).
    bool step(double pair, const SeriesBudget& budget, double scale) {
      ++index;
      if (!std::isfinite(pair)) {
        diverged = true;
        return false;
      }
      const bool small = pair <= budget.rel_tol * std::max(scale, 1e-300);
      const bool shrinking = pair < prev_pair;
      ok_run = (small && shrinking) ? ok_run + 1 : 0;
      if (shrinking) {
        flat_run = 0;
      } else {
        // Growth alone is not divergence: pairs weighted by the index climb
        // toward a single peak near geo/(1-geo) before decaying.  Count the
        // step against the non-decay run only when the implied geometric
        // ratio puts that turnover beyond the remaining budget (stalled
        // pairs — bit-identical neighbors — always count).
        bool hopeless = true;
        if (pair > prev_pair && prev_pair > 0.0) {
          const double geo =
              (pair / prev_pair) * (static_cast<double>(index) /
                                    static_cast<double>(index + 1));
          if (geo < 1.0) {
            const double peak = geo / (1.0 - geo);
            hopeless = peak >
                       0.5 * static_cast<double>(budget.max_pairs - index);
          }
        }
        flat_run = hopeless ? flat_run + 1 : 0;
      }
      prev_pair = pair;
      if (ok_run >= budget.ratio_run) return false;
      if (flat_run >= budget.nondecay_run) {
        diverged = true;
        return false;
      }
      return true;
    }
  };

  struct Cache {
    std::mutex mu;
    int kmax = 0;
    std::vector<double> lp{0.0};  // log psi(k) at slot kmax + k
  };

  // Must be called with cache_->mu held.
  void ensure_cached(int need) const {
    if (need <= cache_->kmax) return;
    const int target = std::max({2 * cache_->kmax, need, 64});
    cache_->lp = log_psi_range(kernel_, target);
    cache_->kmax = target;
  }

  Kernel kernel_;
  double kappa_ = 1.0;
  double lambda_plus_ = 1.0;
  double lambda_minus_ = 1.0;
  double phi_minus_ = 1.0;
  double phi_plus_ = 1.0;
  std::shared_ptr<Cache> cache_;
};

// l1 norm of the full-kernel collision operator applied to the windowed
// equilibrium; nonzero only because the window clips the tails, so it must
// shrink as the window grows.
inline double stationarity_residual(const EquilibriumFamily& fam, double phi,
                                    int n, const SeriesBudget& budget = {}) {
  const EquilibriumDensity eq =
      fam.equilibrium_density(phi, Window(n), budget);
  const Density g = eq.as_density();
  return l1_norm(q_apply(fam.kernel(), g, g));
}

}  // namespace xck
