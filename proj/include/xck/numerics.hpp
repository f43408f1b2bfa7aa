// numerics.hpp — small numeric utilities shared across the library.
//
// Everything here is deterministic: compensated sums are accumulated in the
// exact order the caller feeds terms, so repeated runs over identical input
// produce bit-identical results.

#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <stdexcept>
#include <string>

namespace xck {

// ---------------------------------------------------------------------------
// Compensated (Kahan–Neumaier) summation.
// ---------------------------------------------------------------------------

class KahanSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }

  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

// ---------------------------------------------------------------------------
// Floating-point text output.
//
// All numeric file output uses 17 significant digits so that a value written
// to CSV parses back to the identical double (round-trip exactness, and byte
// stability across runs).
// ---------------------------------------------------------------------------

inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return std::string(buf);
}

// ---------------------------------------------------------------------------
// FNV-1a 64-bit hash (used to fingerprint configs inside run manifests).
// ---------------------------------------------------------------------------

inline std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= static_cast<std::uint64_t>(c);
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string fnv1a64_hex(const std::string& bytes) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(bytes)));
  return std::string(buf);
}

// ---------------------------------------------------------------------------
// Misc guards.
// ---------------------------------------------------------------------------

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

constexpr double kNegClampDefault = 1e-12;  // entries in (-kNeg..,0) snap to 0

}  // namespace xck
