// kernel.hpp — exchange-rate kernels K(k,l) on the integer lattice.
//
// K(k,l) is the rate at which a particle of charge k hands one charge unit to
// a particle of charge l (k -> k-1, l -> l+1).  Kernels are immutable values:
// an evaluation closure plus certificates and tags,
//
//   * c_upper:  global bound  0 < K <= c_upper  (always required),
//   * c_lower:  optional strict positivity floor K >= c_lower > 0,
//   * separable form  K(k,l) = u(k) v(l) * q^{1{l<0<k}}  when available
//     (enables O(n) collision rates instead of O(n^2)),
//   * detailed_balance tag for the builtin families and their products.
//
// Builtin families
//   constant(v)        K == v
//   two_rate(a,b)      K = a + b on {l < 0 < k}, a elsewhere
//   poly_decay(g,c)    K = c^{1{l<0<k}} y(k) y(-l),  y(k) = 1 + k^{-g} (k>=1),
//                      y(k) = 1 otherwise; parameters 0 < g < 1, c > 1
// plus pointwise product / inverse (the detailed-balance kernels form an
// abelian group under these), finite lookup tables for randomized testing,
// and single-entry patches for breaking detailed balance on purpose.
//
// Truncation: truncate(K, N) keeps reactions inside S_N = {|k| <= N} by
// zeroing K(k,l) unless k in {-N+1..N} and l in {-N..N-1} (donor stays >= -N,
// receiver stays <= N).
//
// check_extended_bd probes the four ratio identities that characterise
// detailed balancing, together with the balance condition
// K(k,l-1) psi(k) psi(l-1) = K(l,k-1) psi(l) psi(k-1) for the candidate
// equilibrium shape psi built from kernel ratios.

#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "xck/lattice.hpp"
#include "xck/numerics.hpp"

namespace xck {

// ---------------------------------------------------------------------------
// Kernel value type
// ---------------------------------------------------------------------------

struct SeparableForm {
  std::function<double(int)> u;  // donor factor
  std::function<double(int)> v;  // receiver factor
  double quadrant = 1.0;         // extra factor on {l < 0 < k}
};

struct KernelTags {
  bool separable = false;
  bool detailed_balance = false;
};

// Closed-form tail limits of the equilibrium ladder, when known analytically:
// lambda_plus = lim_{j->+inf} K(j,0)/K(1,j-1),
// lambda_minus = lim_{j->-inf} K(0,j)/K(j+1,-1).
struct LadderLimits {
  double lambda_plus;
  double lambda_minus;
};

class Kernel {
 public:
  double operator()(int k, int l) const { return eval_(k, l); }

  double c_upper() const { return c_upper_; }
  const std::optional<double>& c_lower() const { return c_lower_; }
  const KernelTags& tags() const { return tags_; }
  const std::optional<SeparableForm>& separable() const { return sep_; }
  const std::optional<LadderLimits>& ladder_limits() const { return limits_; }

  // ---- builtin families ----------------------------------------------------

  static Kernel constant(double value) {
    require(value > 0.0 && std::isfinite(value),
            "constant kernel needs value > 0");
    Kernel k;
    k.eval_ = [value](int, int) { return value; };
    k.c_upper_ = value;
    k.c_lower_ = value;
    k.tags_ = {true, true};
    k.sep_ = SeparableForm{[value](int) { return value; },
                           [](int) { return 1.0; }, 1.0};
    k.limits_ = LadderLimits{1.0, 1.0};
    k.spec_ = {{"family", "constant"}, {"params", {{"value", value}}}};
    return k;
  }

  static Kernel two_rate(double a, double b) {
    require(a > 0.0 && std::isfinite(a), "two_rate needs a > 0");
    require(b >= 0.0 && std::isfinite(b), "two_rate needs b >= 0");
    Kernel k;
    k.eval_ = [a, b](int kk, int ll) { return (ll < 0 && kk > 0) ? a + b : a; };
    k.c_upper_ = a + b;
    k.c_lower_ = a;
    k.tags_ = {true, true};
    k.sep_ = SeparableForm{[a](int) { return a; }, [](int) { return 1.0; },
                           (a + b) / a};
    k.limits_ = LadderLimits{1.0, 1.0};
    k.spec_ = {{"family", "two_rate"}, {"params", {{"a", a}, {"b", b}}}};
    return k;
  }

  static Kernel poly_decay(double gamma, double c) {
    require(gamma > 0.0 && gamma < 1.0, "poly_decay needs 0 < gamma < 1");
    require(c > 1.0 && std::isfinite(c), "poly_decay needs c > 1");
    auto y = [gamma](int j) {
      return j >= 1 ? 1.0 + std::pow(static_cast<double>(j), -gamma) : 1.0;
    };
    Kernel k;
    k.eval_ = [y, c](int kk, int ll) {
      const double base = y(kk) * y(-ll);
      return (ll < 0 && kk > 0) ? c * base : base;
    };
    k.c_upper_ = 4.0 * c;  // y peaks at y(1) = 2
    k.c_lower_ = 1.0;
    k.tags_ = {true, true};
    k.sep_ = SeparableForm{y, [y](int l) { return y(-l); }, c};
    k.limits_ = LadderLimits{0.5, 0.5};
    k.spec_ = {{"family", "poly_decay"},
               {"params", {{"gamma", gamma}, {"c", c}}}};
    return k;
  }

  // ---- group operations -----------------------------------------------------

  static Kernel product(const Kernel& a, const Kernel& b) {
    Kernel k;
    auto ea = a.eval_, eb = b.eval_;
    k.eval_ = [ea, eb](int kk, int ll) { return ea(kk, ll) * eb(kk, ll); };
    k.c_upper_ = a.c_upper_ * b.c_upper_;
    if (a.c_lower_ && b.c_lower_) k.c_lower_ = *a.c_lower_ * *b.c_lower_;
    k.tags_.separable = a.tags_.separable && b.tags_.separable;
    k.tags_.detailed_balance =
        a.tags_.detailed_balance && b.tags_.detailed_balance;
    if (a.sep_ && b.sep_) {
      auto ua = a.sep_->u, ub = b.sep_->u, va = a.sep_->v, vb = b.sep_->v;
      k.sep_ = SeparableForm{[ua, ub](int j) { return ua(j) * ub(j); },
                             [va, vb](int j) { return va(j) * vb(j); },
                             a.sep_->quadrant * b.sep_->quadrant};
    }
    if (a.limits_ && b.limits_) {
      k.limits_ = LadderLimits{a.limits_->lambda_plus * b.limits_->lambda_plus,
                               a.limits_->lambda_minus * b.limits_->lambda_minus};
    }
    k.spec_ = {{"family", "product"},
               {"operands", nlohmann::json::array({a.spec_, b.spec_})}};
    return k;
  }

  static Kernel inverse(const Kernel& a) {
    require(a.c_lower_.has_value() && *a.c_lower_ > 0.0,
            "kernel inverse needs a strict positivity floor (c_lower)");
    Kernel k;
    auto ea = a.eval_;
    k.eval_ = [ea](int kk, int ll) { return 1.0 / ea(kk, ll); };
    k.c_upper_ = 1.0 / *a.c_lower_;
    k.c_lower_ = 1.0 / a.c_upper_;
    k.tags_ = a.tags_;
    if (a.sep_) {
      auto u = a.sep_->u, v = a.sep_->v;
      k.sep_ = SeparableForm{[u](int j) { return 1.0 / u(j); },
                             [v](int j) { return 1.0 / v(j); },
                             1.0 / a.sep_->quadrant};
    }
    if (a.limits_) {
      k.limits_ = LadderLimits{1.0 / a.limits_->lambda_plus,
                               1.0 / a.limits_->lambda_minus};
    }
    k.spec_ = {{"family", "inverse"},
               {"operands", nlohmann::json::array({a.spec_})}};
    return k;
  }

  // ---- finite tables (randomized testing) ----------------------------------
  //
  // Values are given on [-n..n]^2; evaluations outside clamp to the nearest
  // table entry so the kernel stays total and bounded.

  static Kernel from_table(int n, std::vector<double> values, double c_upper,
                           double c_lower) {
    require(n >= 1, "table kernel needs n >= 1");
    const int side = 2 * n + 1;
    require(static_cast<int>(values.size()) == side * side,
            "table kernel needs (2n+1)^2 values");
    for (double v : values) {
      require(std::isfinite(v) && v > 0.0, "table kernel entries must be > 0");
    }
    auto tab = std::make_shared<const std::vector<double>>(std::move(values));
    Kernel k;
    k.eval_ = [tab, n, side](int kk, int ll) {
      const int i = std::clamp(kk, -n, n) + n;
      const int j = std::clamp(ll, -n, n) + n;
      return (*tab)[static_cast<std::size_t>(i) * side + j];
    };
    k.c_upper_ = c_upper;
    k.c_lower_ = c_lower;
    k.tags_ = {false, false};
    k.spec_ = nullptr;  // tables are not part of the serializable spec
    return k;
  }

  // ---- pointwise patch ------------------------------------------------------
  //
  // Scales the single entry K(k0,l0) by `factor`.  Used to break detailed
  // balance in a controlled way, so the tag is dropped and the separable fast
  // path disabled.

  Kernel with_patch(int k0, int l0, double factor) const {
    require(factor > 0.0 && std::isfinite(factor),
            "patch factor must be > 0");
    Kernel k = *this;
    auto base = eval_;
    k.eval_ = [base, k0, l0, factor](int kk, int ll) {
      const double v = base(kk, ll);
      return (kk == k0 && ll == l0) ? factor * v : v;
    };
    k.c_upper_ = c_upper_ * std::max(1.0, factor);
    if (c_lower_) k.c_lower_ = *c_lower_ * std::min(1.0, factor);
    k.tags_.separable = false;
    k.tags_.detailed_balance = false;
    k.sep_.reset();
    if (!spec_.is_null()) {
      nlohmann::json p = {{"k", k0}, {"l", l0}, {"scale", factor}};
      if (!k.spec_.contains("patches")) k.spec_["patches"] = nlohmann::json::array();
      k.spec_["patches"].push_back(p);
    }
    return k;
  }

  // ---- JSON spec ------------------------------------------------------------
  //
  // {"family": "constant"|"two_rate"|"poly_decay"|"product"|"inverse",
  //  "params": {...}, "operands": [...], "patches": [{k,l,scale}...]}

  nlohmann::json to_json() const {
    require(!spec_.is_null(), "kernel has no serializable spec");
    return spec_;
  }

  static Kernel from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("family")) {
      throw std::invalid_argument("kernel spec needs a family field");
    }
    const std::string fam = j.at("family").get<std::string>();
    Kernel k = [&]() {
      if (fam == "constant") {
        return constant(param(j, "value"));
      } else if (fam == "two_rate") {
        return two_rate(param(j, "a"), param(j, "b"));
      } else if (fam == "poly_decay") {
        return poly_decay(param(j, "gamma"), param(j, "c"));
      } else if (fam == "product") {
        const auto& ops = operands(j, 2);
        return product(from_json(ops[0]), from_json(ops[1]));
      } else if (fam == "inverse") {
        const auto& ops = operands(j, 1);
        return inverse(from_json(ops[0]));
      }
      throw std::invalid_argument("unknown kernel family: " + fam);
    }();
    if (j.contains("patches")) {
      for (const auto& p : j.at("patches")) {
        k = k.with_patch(p.at("k").get<int>(), p.at("l").get<int>(),
                         p.at("scale").get<double>());
      }
    }
    return k;
  }

 private:
  Kernel() = default;

  static double param(const nlohmann::json& j, const char* name) {
    if (!j.contains("params") || !j.at("params").contains(name)) {
      throw std::invalid_argument(std::string("kernel spec missing param ") +
                                  name);
    }
    return j.at("params").at(name).get<double>();
  }

  static const nlohmann::json& operands(const nlohmann::json& j, int count) {
    if (!j.contains("operands") ||
        static_cast<int>(j.at("operands").size()) != count) {
      throw std::invalid_argument("kernel spec has wrong operand count");
    }
    return j.at("operands");
  }

  std::function<double(int, int)> eval_;
  double c_upper_ = 0.0;
  std::optional<double> c_lower_;
  KernelTags tags_;
  std::optional<SeparableForm> sep_;
  std::optional<LadderLimits> limits_;
  nlohmann::json spec_;
};

// ---------------------------------------------------------------------------
// Truncation to the finite state space S_N = {|k| <= N}.
// ---------------------------------------------------------------------------

struct TruncatedKernel {
  Kernel base;
  int n;

  TruncatedKernel(Kernel b, int n_) : base(std::move(b)), n(n_) {
    require(n >= 1, "truncation half-width must be >= 1");
  }

  // Donor must be able to step down (k >= -N+1 .. N), receiver to step up
  // (l in -N .. N-1); all other reactions are switched off.
  bool admissible(int k, int l) const {
    return k >= -n + 1 && k <= n && l >= -n && l <= n - 1;
  }

  double operator()(int k, int l) const {
    return admissible(k, l) ? base(k, l) : 0.0;
  }
};

inline TruncatedKernel truncate(const Kernel& k, int n) {
  return TruncatedKernel(k, n);
}

// ---------------------------------------------------------------------------
// Equilibrium ladder primitives.
//
// kappa = sqrt(K(1,-1)/K(0,0));  psi(k) = psi~(k) kappa^{-|k|} with
//   psi~(k) = prod_{j=1}^{k} K(1,j-1)/K(j,0)          (k > 0)
//   psi~(0) = 1
//   psi~(k) = prod_{j=k}^{-1} K(j+1,-1)/K(0,j)        (k < 0).
// Everything is carried in log space; the ladder needs strict positivity of
// the probed kernel entries only.
// ---------------------------------------------------------------------------

inline double kernel_kappa(const Kernel& k) {
  const double num = k(1, -1), den = k(0, 0);
  require(num > 0.0 && den > 0.0, "kappa needs K(1,-1) > 0 and K(0,0) > 0");
  return std::sqrt(num / den);
}

// log psi(k) for k in [-kmax, kmax]; slot kmax + k.
inline std::vector<double> log_psi_range(const Kernel& kern, int kmax) {
  require(kmax >= 0, "psi range needs kmax >= 0");
  const double log_kappa = std::log(kernel_kappa(kern));
  std::vector<double> lp(2 * kmax + 1, 0.0);
  double acc = 0.0;
  for (int k = 1; k <= kmax; ++k) {
    const double num = kern(1, k - 1), den = kern(k, 0);
    require(num > 0.0 && den > 0.0, "psi ladder hit a nonpositive entry");
    acc += std::log(num) - std::log(den);
    lp[kmax + k] = acc - k * log_kappa;
  }
  acc = 0.0;
  for (int k = -1; k >= -kmax; --k) {
    const double num = kern(k + 1, -1), den = kern(0, k);
    require(num > 0.0 && den > 0.0, "psi ladder hit a nonpositive entry");
    acc += std::log(num) - std::log(den);
    lp[kmax + k] = acc + k * log_kappa;  // -|k| log kappa == k log kappa here
  }
  return lp;
}

// ---------------------------------------------------------------------------
// Window reports: kernel bound probing, reflection symmetry, and the
// detailed-balance identity check.
// ---------------------------------------------------------------------------

struct KernelWindowReport {
  int window = 0;                    // probe half-width
  double bd_max_violation = 0.0;     // worst |LHS/RHS - 1| over the identities
  double db_max_violation = 0.0;     // worst balance defect with g = psi
  bool reflection_symmetric = true;  // K(k,l) == K(-l,-k) exactly on window
  double bounds_violation = 0.0;     // worst breach of [c_lower, c_upper]
};

inline bool reflection_symmetric(const Kernel& k, int window) {
  for (int a = -window; a <= window; ++a) {
    for (int b = -window; b <= window; ++b) {
      if (k(a, b) != k(-b, -a)) return false;
    }
  }
  return true;
}

inline double probe_bounds(const Kernel& k, int window) {
  double worst = 0.0;
  for (int a = -window; a <= window; ++a) {
    for (int b = -window; b <= window; ++b) {
      const double v = k(a, b);
      if (!std::isfinite(v)) {
        throw std::domain_error("kernel evaluation is not finite");
      }
      worst = std::max(worst, v - k.c_upper());
      worst = std::max(worst, 0.0 - v);
      if (k.c_lower()) worst = std::max(worst, *k.c_lower() - v);
    }
  }
  return std::max(worst, 0.0);
}

// Worst relative defect |LHS/RHS - 1| over the four ratio identities
//
//   K(k,l-1)/K(l,k-1) = K(k,0)K(1,l-1) / (K(l,0)K(1,k-1))            k,l >= 1
//   K(k,l-1)/K(l,k-1) = [K(0,l-1)/K(0,k-1)] [K(k,-1)/K(l,-1)]        k,l <= 0
//   K(k,l-1)/K(l,k-1) = [K(k,0)/K(1,k-1)] [K(0,l-1)/K(l,-1)]
//                        * K(1,-1)/K(0,0)                        k>=1, l<=0
//   K(k,l-1)/K(l,k-1) = [K(1,l-1)/K(l,0)] [K(k,-1)/K(0,k-1)]
//                        * K(0,0)/K(1,-1)                        k<=0, l>=1
//
// together with the balance defect of K(k,l-1)g(k)g(l-1) = K(l,k-1)g(l)g(k-1)
// for g = psi.  A kernel admits a detailed-balance equilibrium exactly when
// all four identity families hold.
inline KernelWindowReport check_extended_bd(const Kernel& kern,
                                            int window = 32) {
  require(window >= 1, "probe window must be >= 1");
  KernelWindowReport rep;
  rep.window = window;

  auto safe = [&kern](int a, int b) {
    const double v = kern(a, b);
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw std::domain_error("kernel is not strictly positive at (" +
                              std::to_string(a) + "," + std::to_string(b) +
                              ")");
    }
    return v;
  };

  double worst = 0.0;
  auto track = [&worst](double lhs, double rhs) {
    worst = std::max(worst, std::abs(lhs / rhs - 1.0));
  };

  const double pivot = safe(1, -1) / safe(0, 0);
  for (int k = 1; k <= window; ++k) {
    for (int l = 1; l <= window; ++l) {
      track(safe(k, l - 1) / safe(l, k - 1),
            safe(k, 0) * safe(1, l - 1) / (safe(l, 0) * safe(1, k - 1)));
    }
  }
  for (int k = -window; k <= 0; ++k) {
    for (int l = -window; l <= 0; ++l) {
      track(safe(k, l - 1) / safe(l, k - 1),
            (safe(0, l - 1) / safe(0, k - 1)) * (safe(k, -1) / safe(l, -1)));
    }
  }
  for (int k = 1; k <= window; ++k) {
    for (int l = -window; l <= 0; ++l) {
      track(safe(k, l - 1) / safe(l, k - 1),
            (safe(k, 0) / safe(1, k - 1)) * (safe(0, l - 1) / safe(l, -1)) *
                pivot);
    }
  }
  for (int k = -window; k <= 0; ++k) {
    for (int l = 1; l <= window; ++l) {
      track(safe(k, l - 1) / safe(l, k - 1),
            (safe(1, l - 1) / safe(l, 0)) * (safe(k, -1) / safe(0, k - 1)) /
                pivot);
    }
  }
  rep.bd_max_violation = worst;

  // Balance defect with the ladder solution g = psi (log space).
  const auto lp = log_psi_range(kern, window + 1);
  auto log_psi = [&lp, window](int k) { return lp[window + 1 + k]; };
  double worst_db = 0.0;
  for (int k = -window; k <= window; ++k) {
    for (int l = -window; l <= window; ++l) {
      const double lhs =
          std::log(safe(k, l - 1)) + log_psi(k) + log_psi(l - 1);
      const double rhs =
          std::log(safe(l, k - 1)) + log_psi(l) + log_psi(k - 1);
      worst_db = std::max(worst_db, std::abs(std::expm1(lhs - rhs)));
    }
  }
  rep.db_max_violation = worst_db;

  rep.reflection_symmetric = reflection_symmetric(kern, window);
  rep.bounds_violation = probe_bounds(kern, window);
  return rep;
}

}  // namespace xck
