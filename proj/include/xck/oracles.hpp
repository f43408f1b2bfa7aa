// oracles.hpp — slow, independent reference computations.
//
// Everything in this header is deliberately written as the most literal
// transcription of the defining formulas, with no shared code paths into the
// optimized implementations it is used to check.
//
//   * brute_q: the collision operator as an explicit double sum over all
//     reaction partners (O(window^2) per site, O(window^3) total).
//   * HeatGreens: the exact solution kernel of the discrete heat equation
//     df/dt(k) = f(k+1) - 2 f(k) + f(k-1), which is what the exchange
//     dynamics reduce to for the unit constant kernel and unit mass:
//       G(t,k) = (1/2pi) int_{-pi}^{pi} e^{-2t(1-cos h)} e^{-ikh} dh,
//     evaluated by trapezoid quadrature (spectrally accurate for periodic
//     analytic integrands), plus the running-time integral of G(.,0) that
//     drives the absolute-charge growth bound
//       |q|(f(t)) >= |q|(f0) + 2 f0(0) int_0^t G(s,0) ds.
// ---------------------------------------------------------------------------

#pragma once

#include <cmath>
#include <map>
#include <mutex>
#include <utility>
#include <vector>

#include "xck/kernel.hpp"
#include "xck/lattice.hpp"
#include "xck/numerics.hpp"

namespace xck {

// ---------------------------------------------------------------------------
// brute_q — literal four-term double sum
//
//   Q(f,g)(k) = sum_l [ K(l,k-1) g(l) f(k-1) - K(k,l-1) f(k) g(l-1)
//                      - K(l,k)   g(l) f(k)   + K(k+1,l-1) f(k+1) g(l-1) ].
//
// The partner index l runs one site past the window on each side so the
// shifted accesses g(l-1) cover the full support.
// ---------------------------------------------------------------------------

template <class KernelLike>
LatticeFunction brute_q(const KernelLike& kern, const Density& f,
                        const Density& g) {
  require(f.window() == g.window(), "brute_q: window mismatch between f and g");
  const Window& w = f.window();
  const int n = w.n();
  std::vector<double> out(w.size(), 0.0);
  for (int k = -n; k <= n; ++k) {
    KahanSum acc;
    for (int l = -n - 1; l <= n + 1; ++l) {
      acc.add(kern(l, k - 1) * g.at(l) * f.at(k - 1));
      acc.add(-kern(k, l - 1) * f.at(k) * g.at(l - 1));
      acc.add(-kern(l, k) * g.at(l) * f.at(k));
      acc.add(kern(k + 1, l - 1) * f.at(k + 1) * g.at(l - 1));
    }
    out[w.offset(k)] = acc.value();
  }
  return LatticeFunction(w, std::move(out));
}

// ---------------------------------------------------------------------------
// HeatGreens
// ---------------------------------------------------------------------------

class HeatGreens {
 public:
  explicit HeatGreens(int panels = 2048) : panels_(panels) {
    require(panels >= 16, "heat oracle needs at least 16 quadrature panels");
  }

  // G(t,k); cached by (t,k).
  double green(double t, int k) const {
    require(t >= 0.0 && std::isfinite(t), "heat oracle needs t >= 0");
    // The initial condition is an exact point mass; quadrature at t = 0
    // would only return rounding residue around it.
    if (t == 0.0) return k == 0 ? 1.0 : 0.0;
    const auto key = std::make_pair(t, k);
    {
      std::lock_guard<std::mutex> lock(mutex_);
      auto it = cache_.find(key);
      if (it != cache_.end()) return it->second;
    }
    // Even integrand: G(t,k) = (1/pi) int_0^pi e^{-2t(1-cos h)} cos(kh) dh.
    const double h = kPi / panels_;
    KahanSum acc;
    for (int j = 0; j <= panels_; ++j) {
      const double theta = j * h;
      const double val =
          std::exp(-2.0 * t * (1.0 - std::cos(theta))) * std::cos(k * theta);
      acc.add((j == 0 || j == panels_) ? 0.5 * val : val);
    }
    const double g = acc.value() * h / kPi;
    std::lock_guard<std::mutex> lock(mutex_);
    cache_.emplace(key, g);
    return g;
  }

  // int_0^t G(s,0) ds, via the closed form
  //   (1/2pi) int_0^{pi} ... dh doubled by symmetry:
  //   (1/2pi) int_{-pi}^{pi} (1 - e^{-2t(1-cos h)}) / (2(1-cos h)) dh,
  // whose integrand extends continuously by the value t at h = 0.
  double integral_g0(double t) const {
    require(t >= 0.0 && std::isfinite(t), "heat oracle needs t >= 0");
    const double h = kPi / panels_;
    KahanSum acc;
    for (int j = 0; j <= panels_; ++j) {
      const double theta = j * h;
      const double u = 1.0 - std::cos(theta);
      const double val = (u < 1e-14) ? t : -std::expm1(-2.0 * t * u) / (2.0 * u);
      acc.add((j == 0 || j == panels_) ? 0.5 * val : val);
    }
    return acc.value() * h / kPi;
  }

  // Lower bound for the absolute total charge of the heat flow:
  // |q|(t) >= q0_abs + 2 f0_at_0 * int_0^t G(s,0) ds.
  double abs_charge_lower(double t, double f0_at_0, double q0_abs) const {
    require(f0_at_0 >= 0.0, "initial mass at the origin must be >= 0");
    require(q0_abs >= 0.0, "initial absolute charge must be >= 0");
    return q0_abs + 2.0 * f0_at_0 * integral_g0(t);
  }

  int panels() const { return panels_; }

 private:
  static constexpr double kPi = 3.14159265358979323846;

  int panels_;
  mutable std::mutex mutex_;
  mutable std::map<std::pair<double, int>, double> cache_;
};

}  // namespace xck
