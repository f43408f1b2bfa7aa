// collision.hpp — the bilinear exchange collision operator.
//
// For states on a window, the operator is assembled from a RateProfile:
//
//   r_in(j)  = sum_l K(l,j) g(l)   rate at which sites of charge j receive,
//   r_out(j) = sum_l K(j,l) g(l)   rate at which sites of charge j donate,
//
//   Q(f,g)(k) = f(k-1) r_in(k-1) - f(k) (r_in(k) + r_out(k))
//               + f(k+1) r_out(k+1),
//
// which is an exact regrouping of the defining four-term double sum.  The
// profile costs O(n^2) kernel evaluations in general; kernels carrying a
// separable form K(k,l) = u(k) v(l) q^{1{l<0<k}} admit an O(n) path through
// four partner aggregates.  Truncation enters as index clipping: donors live
// in {-N+1..N}, receivers in {-N..N-1}, every other reaction is off.
//
// A CollisionEngine fixes (kernel, window, truncation) once and exposes
// reusable rate/apply calls with preallocated tables, which is what the time
// integrator iterates on.  The free functions q_apply / q_apply_naive are the
// one-shot conveniences; q_apply_naive delegates to the literal double-sum
// oracle so the two routes stay independent.

#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "xck/kernel.hpp"
#include "xck/lattice.hpp"
#include "xck/numerics.hpp"
#include "xck/oracles.hpp"

namespace xck {

struct RateProfile {
  Window window;
  std::vector<double> r_in;   // receive rates, indexed like the window
  std::vector<double> r_out;  // donate rates
};

// ---------------------------------------------------------------------------
// CollisionEngine
// ---------------------------------------------------------------------------

class CollisionEngine {
 public:
  CollisionEngine(const Kernel& kern, Window w,
                  std::optional<int> truncation = std::nullopt)
      : window_(w) {
    const int n = w.n();
    if (truncation) {
      require(*truncation >= 1, "truncation half-width must be >= 1");
      require(*truncation <= n, "truncation exceeds the state window");
      const int N = *truncation;
      donor_lo_ = -N + 1;
      donor_hi_ = N;
      recv_lo_ = -N;
      recv_hi_ = N - 1;
    } else {
      donor_lo_ = -n;
      donor_hi_ = n;
      recv_lo_ = -n;
      recv_hi_ = n;
    }

    if (kern.separable()) {
      mode_ = Mode::kSeparable;
      const auto& s = *kern.separable();
      quadrant_ = s.quadrant;
      u_.resize(w.size());
      v_.resize(w.size());
      for (int k = -n; k <= n; ++k) {
        u_[w.offset(k)] = s.u(k);
        v_[w.offset(k)] = s.v(k);
      }
    } else if (w.size() <= kMaxTableSide) {
      mode_ = Mode::kTable;
      const int side = w.size();
      rows_.assign(static_cast<std::size_t>(side) * side, 0.0);
      cols_.assign(static_cast<std::size_t>(side) * side, 0.0);
      for (int k = -n; k <= n; ++k) {
        for (int l = -n; l <= n; ++l) {
          const double val = admissible(k, l) ? kern(k, l) : 0.0;
          rows_[idx(w, k, l)] = val;  // donor k, receiver l
          cols_[idx(w, l, k)] = val;  // transposed for receive rates
        }
      }
    } else {
      mode_ = Mode::kDirect;
      eval_ = [kern](int k, int l) { return kern(k, l); };
    }
  }

  const Window& window() const { return window_; }

  // Fill r_in/r_out (window-sized spans) from the partner state g.
  void rates(std::span<const double> g, std::span<double> r_in,
             std::span<double> r_out) const {
    const Window& w = window_;
    const int n = w.n();
    switch (mode_) {
      case Mode::kSeparable: {
        // Partner aggregates over the admissible ranges.
        double av = 0.0, bv = 0.0;  // sum v g over receivers; over negative l
        for (int l = recv_lo_; l <= recv_hi_; ++l) {
          const double t = v_[w.offset(l)] * g[w.offset(l)];
          av += t;
          if (l < 0) bv += t;
        }
        double au = 0.0, bu = 0.0;  // sum u g over donors; over positive l
        for (int l = donor_lo_; l <= donor_hi_; ++l) {
          const double t = u_[w.offset(l)] * g[w.offset(l)];
          au += t;
          if (l > 0) bu += t;
        }
        const double q1 = quadrant_ - 1.0;
        for (int k = -n; k <= n; ++k) {
          const int i = w.offset(k);
          r_out[i] = (k >= donor_lo_ && k <= donor_hi_)
                         ? u_[i] * (av + (k > 0 ? q1 * bv : 0.0))
                         : 0.0;
          r_in[i] = (k >= recv_lo_ && k <= recv_hi_)
                        ? v_[i] * (au + (k < 0 ? q1 * bu : 0.0))
                        : 0.0;
        }
        return;
      }
      case Mode::kTable: {
        const int side = w.size();
        for (int i = 0; i < side; ++i) {
          const double* row = rows_.data() + static_cast<std::size_t>(i) * side;
          const double* col = cols_.data() + static_cast<std::size_t>(i) * side;
          double ro = 0.0, ri = 0.0;
          for (int j = 0; j < side; ++j) {
            ro += row[j] * g[j];
            ri += col[j] * g[j];
          }
          r_out[i] = ro;
          r_in[i] = ri;
        }
        return;
      }
      case Mode::kDirect: {
        for (int k = -n; k <= n; ++k) {
          double ro = 0.0, ri = 0.0;
          if (k >= donor_lo_ && k <= donor_hi_) {
            for (int l = recv_lo_; l <= recv_hi_; ++l) {
              ro += eval_(k, l) * g[w.offset(l)];
            }
          }
          if (k >= recv_lo_ && k <= recv_hi_) {
            for (int l = donor_lo_; l <= donor_hi_; ++l) {
              ri += eval_(l, k) * g[w.offset(l)];
            }
          }
          r_out[w.offset(k)] = ro;
          r_in[w.offset(k)] = ri;
        }
        return;
      }
    }
  }

  // out(k) = f(k-1) r_in(k-1) - f(k)(r_in(k)+r_out(k)) + f(k+1) r_out(k+1),
  // with the rates drawn from g.
  void apply(std::span<const double> f, std::span<const double> g,
             std::span<double> out) const {
    scratch_in_.resize(window_.size());
    scratch_out_.resize(window_.size());
    rates(g, scratch_in_, scratch_out_);
    const int size = window_.size();
    for (int i = 0; i < size; ++i) {
      const double gain_left = (i > 0) ? f[i - 1] * scratch_in_[i - 1] : 0.0;
      const double gain_right =
          (i + 1 < size) ? f[i + 1] * scratch_out_[i + 1] : 0.0;
      out[i] = gain_left - f[i] * (scratch_in_[i] + scratch_out_[i]) +
               gain_right;
    }
  }

 private:
  enum class Mode { kSeparable, kTable, kDirect };

  // Table mode keeps two dense (2n+1)^2 copies; cap the memory footprint and
  // let genuinely huge windows fall back to direct evaluation.
  static constexpr int kMaxTableSide = 1501;

  static std::size_t idx(const Window& w, int k, int l) {
    return static_cast<std::size_t>(w.offset(k)) * w.size() + w.offset(l);
  }

  bool admissible(int k, int l) const {
    return k >= donor_lo_ && k <= donor_hi_ && l >= recv_lo_ && l <= recv_hi_;
  }

  Window window_;
  int donor_lo_, donor_hi_, recv_lo_, recv_hi_;
  Mode mode_ = Mode::kDirect;
  double quadrant_ = 1.0;
  std::vector<double> u_, v_;          // separable factors on the window
  std::vector<double> rows_, cols_;    // dense kernel and transpose
  std::function<double(int, int)> eval_;
  mutable std::vector<double> scratch_in_, scratch_out_;
};

// ---------------------------------------------------------------------------
// One-shot entry points
// ---------------------------------------------------------------------------

inline RateProfile rate_profile(const Kernel& kern, const Density& g) {
  CollisionEngine engine(kern, g.window());
  RateProfile rp{g.window(), std::vector<double>(g.window().size()),
                 std::vector<double>(g.window().size())};
  engine.rates(g.values(), rp.r_in, rp.r_out);
  return rp;
}

inline RateProfile rate_profile(const TruncatedKernel& kern, const Density& g) {
  CollisionEngine engine(kern.base, g.window(), kern.n);
  RateProfile rp{g.window(), std::vector<double>(g.window().size()),
                 std::vector<double>(g.window().size())};
  engine.rates(g.values(), rp.r_in, rp.r_out);
  return rp;
}

inline LatticeFunction q_apply(const Kernel& kern, const Density& f,
                               const Density& g) {
  require(f.window() == g.window(), "q_apply: window mismatch between f and g");
  CollisionEngine engine(kern, f.window());
  std::vector<double> out(f.window().size());
  engine.apply(f.values(), g.values(), out);
  return LatticeFunction(f.window(), std::move(out));
}

inline LatticeFunction q_apply(const TruncatedKernel& kern, const Density& f,
                               const Density& g) {
  require(f.window() == g.window(), "q_apply: window mismatch between f and g");
  CollisionEngine engine(kern.base, f.window(), kern.n);
  std::vector<double> out(f.window().size());
  engine.apply(f.values(), g.values(), out);
  return LatticeFunction(f.window(), std::move(out));
}

// Literal double-sum evaluation (the independent slow route).
inline LatticeFunction q_apply_naive(const Kernel& kern, const Density& f,
                                     const Density& g) {
  return brute_q(kern, f, g);
}

inline LatticeFunction q_apply_naive(const TruncatedKernel& kern,
                                     const Density& f, const Density& g) {
  return brute_q(kern, f, g);
}

// ---------------------------------------------------------------------------
// Operator norm certificates:
//   ||Q(f,g)||_X <= C_X C_K ||f||_X ||g||_1          (C_l1 = 4, C_l11 = 6)
//   ||Q(f)-Q(g)||_X <= C_X C_K (||f||_X + ||g||_X) ||f-g||_X.
// ---------------------------------------------------------------------------

enum class NormSpace { kL1, kL11 };

inline double norm_constant(NormSpace space) {
  return space == NormSpace::kL1 ? 4.0 : 6.0;
}

inline double state_norm(const Density& f, NormSpace space) {
  const MomentSet m = moments(f);
  return space == NormSpace::kL1 ? m.l1 : m.l11;
}

inline double q_lipschitz_bound(const Kernel& kern, const Density& f,
                                const Density& g, NormSpace space) {
  return norm_constant(space) * kern.c_upper() *
         (state_norm(f, space) + state_norm(g, space));
}

}  // namespace xck
