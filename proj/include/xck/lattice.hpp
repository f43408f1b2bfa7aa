// lattice.hpp — finitely supported states on the integer lattice.
//
// A Window is the symmetric index range {-n, ..., n}.  A Density is a
// nonnegative function supported on a window (charge distribution of a unit
// of gas); a LatticeFunction is the signed analogue used for operator output
// and differences.  Moments are accumulated with compensated summation in
// fixed ascending index order, so results are deterministic and embedding a
// state into a larger window leaves every moment bit-identical (the padded
// zeros do not perturb the compensation).
//
// Norms: l1 = sum |f(k)|,  l11 = sum (1 + |k|) |f(k)|  (mass + mean |charge|
// for densities).

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "xck/numerics.hpp"

namespace xck {

// ---------------------------------------------------------------------------
// Window
// ---------------------------------------------------------------------------

class Window {
 public:
  Window() = default;  // smallest valid window, {-1, 0, 1}

  explicit Window(int n) : n_(n) {
    require(n >= 1, "window half-width must be >= 1");
  }

  int n() const { return n_; }
  int size() const { return 2 * n_ + 1; }
  bool contains(int k) const { return k >= -n_ && k <= n_; }
  int offset(int k) const { return k + n_; }      // lattice index -> array slot
  int k_at(int idx) const { return idx - n_; }    // array slot -> lattice index

  friend bool operator==(const Window& a, const Window& b) {
    return a.n_ == b.n_;
  }
  friend bool operator!=(const Window& a, const Window& b) {
    return !(a == b);
  }

 private:
  int n_ = 1;
};

// ---------------------------------------------------------------------------
// MomentSet
// ---------------------------------------------------------------------------

struct MomentSet {
  double mass = 0.0;        // sum f(k)
  double charge = 0.0;      // sum k f(k)
  double abs_charge = 0.0;  // sum |k| f(k)
  double l1 = 0.0;          // sum |f(k)|
  double l11 = 0.0;         // l1 + abs-charge of |f|
};

// ---------------------------------------------------------------------------
// LatticeFunction — signed values on a window (operator output, differences).
// ---------------------------------------------------------------------------

struct LatticeFunction {
  LatticeFunction(Window w, std::vector<double> vals)
      : window(w), values(std::move(vals)) {
    require(static_cast<int>(values.size()) == window.size(),
            "value array does not match window size");
  }

  static LatticeFunction zero(Window w) {
    return LatticeFunction(w, std::vector<double>(w.size(), 0.0));
  }

  double at(int k) const {
    return window.contains(k) ? values[window.offset(k)] : 0.0;
  }

  Window window;
  std::vector<double> values;
};

inline MomentSet moments(const Window& w, std::span<const double> values) {
  KahanSum mass, charge, abs_charge, l1;
  for (int idx = 0; idx < w.size(); ++idx) {
    const int k = w.k_at(idx);
    const double f = values[idx];
    mass.add(f);
    charge.add(static_cast<double>(k) * f);
    abs_charge.add(std::abs(static_cast<double>(k)) * std::abs(f));
    l1.add(std::abs(f));
  }
  MomentSet m;
  m.mass = mass.value();
  m.charge = charge.value();
  m.abs_charge = abs_charge.value();
  m.l1 = l1.value();
  m.l11 = m.l1 + m.abs_charge;
  return m;
}

inline MomentSet moments(const LatticeFunction& f) {
  return moments(f.window, f.values);
}

inline double l1_norm(const LatticeFunction& f) { return moments(f).l1; }
inline double l11_norm(const LatticeFunction& f) { return moments(f).l11; }

// ---------------------------------------------------------------------------
// Density — nonnegative state; immutable after construction.
//
// Construction rejects entries below -1e-12 and clamps entries in
// (-1e-12, 0) to zero, so mild integrator round-off is absorbed while a
// genuinely negative state is refused.  NaN/Inf entries are always refused.
// ---------------------------------------------------------------------------

class Density {
 public:
  Density(Window w, std::vector<double> vals)
      : window_(w), values_(std::move(vals)) {
    require(static_cast<int>(values_.size()) == window_.size(),
            "value array does not match window size");
    for (double& v : values_) {
      if (!std::isfinite(v)) {
        throw std::invalid_argument("density entry is not finite");
      }
      if (v < -kNegClampDefault) {
        throw std::invalid_argument("density entry below -1e-12: " +
                                    format_double(v));
      }
      if (v < 0.0) v = 0.0;  // round-off clamp
    }
  }

  static Density zero(Window w) {
    return Density(w, std::vector<double>(w.size(), 0.0));
  }

  // Point mass `mass` at site k.
  static Density delta(Window w, int k, double mass = 1.0) {
    require(w.contains(k), "delta site outside window");
    require(mass >= 0.0, "delta mass must be nonnegative");
    std::vector<double> v(w.size(), 0.0);
    v[w.offset(k)] = mass;
    return Density(w, std::move(v));
  }

  const Window& window() const { return window_; }
  std::span<const double> values() const { return values_; }

  double at(int k) const {
    return window_.contains(k) ? values_[window_.offset(k)] : 0.0;
  }

  MomentSet moments() const { return xck::moments(window_, values_); }

  LatticeFunction as_function() const {
    return LatticeFunction(window_, values_);
  }

 private:
  Window window_;
  std::vector<double> values_;
};

inline MomentSet moments(const Density& f) { return f.moments(); }

// ---------------------------------------------------------------------------
// tail_mass — weighted mass beyond |k| > m0:  sum_{|k| > m0} (1 + |k|) f(k).
// ---------------------------------------------------------------------------

inline double tail_mass(const Density& f, int m0) {
  require(m0 >= 0 && m0 <= f.window().n(), "tail cut must lie in [0, n]");
  KahanSum acc;
  const Window& w = f.window();
  for (int idx = 0; idx < w.size(); ++idx) {
    const int k = w.k_at(idx);
    if (std::abs(k) > m0) {
      acc.add((1.0 + std::abs(static_cast<double>(k))) * f.values()[idx]);
    }
  }
  return acc.value();
}

// ---------------------------------------------------------------------------
// embed — copy into another window.  Growing pads zeros (moments unchanged,
// bit for bit); shrinking truncates and drops the outside mass.
// ---------------------------------------------------------------------------

inline Density embed(const Density& f, Window target) {
  std::vector<double> v(target.size(), 0.0);
  for (int k = -target.n(); k <= target.n(); ++k) {
    v[target.offset(k)] = f.at(k);
  }
  return Density(target, std::move(v));
}

inline LatticeFunction embed(const LatticeFunction& f, Window target) {
  std::vector<double> v(target.size(), 0.0);
  for (int k = -target.n(); k <= target.n(); ++k) {
    v[target.offset(k)] = f.at(k);
  }
  return LatticeFunction(target, std::move(v));
}

// l11 distance between two states, evaluated on the union window.
inline double l11_distance(const Density& a, const Density& b) {
  const int n = std::max(a.window().n(), b.window().n());
  KahanSum acc;
  for (int k = -n; k <= n; ++k) {
    acc.add((1.0 + std::abs(static_cast<double>(k))) *
            std::abs(a.at(k) - b.at(k)));
  }
  return acc.value();
}

// ---------------------------------------------------------------------------
// Serialization.
//
// CSV: header "k,value", one row per lattice site, ascending k, 17
// significant digits.  JSON: {"n": <half-width>, "values": [...]} with the
// value array running from -n to n.
// ---------------------------------------------------------------------------

inline void write_density_csv(std::ostream& os, const Density& f) {
  os << "k,value\n";
  const Window& w = f.window();
  for (int idx = 0; idx < w.size(); ++idx) {
    os << w.k_at(idx) << ',' << format_double(f.values()[idx]) << '\n';
  }
}

inline Density read_density_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != "k,value") {
    throw std::invalid_argument("density CSV must start with header k,value");
  }
  std::vector<std::pair<int, double>> rows;
  int max_abs = 1;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) {
      throw std::invalid_argument("malformed density CSV row: " + line);
    }
    const int k = std::stoi(line.substr(0, comma));
    const double v = std::stod(line.substr(comma + 1));
    if (!rows.empty() && rows.back().first >= k) {
      throw std::invalid_argument("density CSV rows must be ascending in k");
    }
    rows.emplace_back(k, v);
    max_abs = std::max(max_abs, std::abs(k));
  }
  Window w(max_abs);
  std::vector<double> vals(w.size(), 0.0);
  for (const auto& [k, v] : rows) vals[w.offset(k)] = v;
  return Density(w, std::move(vals));
}

inline nlohmann::json density_to_json(const Density& f) {
  return nlohmann::json{
      {"n", f.window().n()},
      {"values", std::vector<double>(f.values().begin(), f.values().end())}};
}

inline Density density_from_json(const nlohmann::json& j) {
  if (!j.contains("n") || !j.contains("values")) {
    throw std::invalid_argument("density JSON needs fields n, values");
  }
  Window w(j.at("n").get<int>());
  auto vals = j.at("values").get<std::vector<double>>();
  return Density(w, std::move(vals));
}

}  // namespace xck
