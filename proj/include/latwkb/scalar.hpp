#pragma once

// Scalar layer: the whole library is templated on a scalar type S which is
// either Rat (exact arbitrary-precision rational, GMP-backed) or double
// (binary64 with tolerance-based zero tests).  All structural decisions made
// by the algebra (term pruning, pivot selection, degeneracy grouping) go
// through scalar_ops<S> so that the two modes share one code path.

#include <gmpxx.h>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace latwkb {

using Rat = mpq_class;

// Relative zero tolerance used in double mode.  Process-wide, settable once
// at configuration time; exact mode never reads it.
inline double& float_zero_tol() {
  static double tol = 1e-10;
  return tol;
}

template <class S>
struct scalar_ops;

template <>
struct scalar_ops<Rat> {
  static constexpr bool exact = true;

  static Rat zero() { return Rat(0); }
  static Rat one() { return Rat(1); }
  static Rat from_long(long n) { return Rat(n); }
  static Rat ratio(long num, long den) {
    Rat r(num, den);
    r.canonicalize();
    return r;
  }
  // scale is the magnitude reference of the enclosing object; irrelevant here.
  static bool is_zero(const Rat& x, double /*scale*/ = 1.0) { return sgn(x) == 0; }
  static bool equal(const Rat& a, const Rat& b, double /*scale*/ = 1.0) { return a == b; }
  static double to_double(const Rat& x) { return x.get_d(); }
  static double abs_double(const Rat& x) { return std::fabs(x.get_d()); }

  // Exact square root when x is a ratio of perfect squares.
  static bool sqrt_exact(const Rat& x, Rat& out) {
    if (sgn(x) < 0) return false;
    const mpz_class& num = x.get_num();
    const mpz_class& den = x.get_den();
    if (!mpz_perfect_square_p(num.get_mpz_t()) || !mpz_perfect_square_p(den.get_mpz_t()))
      return false;
    mpz_class rn, rd;
    mpz_sqrt(rn.get_mpz_t(), num.get_mpz_t());
    mpz_sqrt(rd.get_mpz_t(), den.get_mpz_t());
    out = Rat(rn, rd);
    out.canonicalize();
    return true;
  }

  static std::string to_string(const Rat& x) { return x.get_str(); }

  static Rat parse(const std::string& num, const std::string& den) {
    Rat r;
    if (r.get_num().set_str(num, 10) != 0 || r.get_den().set_str(den, 10) != 0)
      throw std::invalid_argument("scalar_ops<Rat>::parse: bad integer string");
    if (sgn(r.get_den()) == 0) throw std::invalid_argument("scalar_ops<Rat>::parse: zero denominator");
    r.canonicalize();
    return r;
  }
};

template <>
struct scalar_ops<double> {
  static constexpr bool exact = false;

  static double zero() { return 0.0; }
  static double one() { return 1.0; }
  static double from_long(long n) { return static_cast<double>(n); }
  static double ratio(long num, long den) { return static_cast<double>(num) / static_cast<double>(den); }
  static bool is_zero(double x, double scale = 1.0) {
    return std::fabs(x) <= float_zero_tol() * scale;
  }
  static bool equal(double a, double b, double scale = 1.0) { return is_zero(a - b, scale); }
  static double to_double(double x) { return x; }
  static double abs_double(double x) { return std::fabs(x); }

  static bool sqrt_exact(double x, double& out) {
    if (x < 0.0) return false;
    out = std::sqrt(x);
    return true;
  }

  static std::string to_string(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
  }
};

// Generalized binomial coefficient binom(a, n) = a(a-1)...(a-n+1)/n! for a
// scalar a; used by the binomial series (1+w)^a with a = -1/2.
template <class S>
S binom_general(const S& a, unsigned n) {
  S result = scalar_ops<S>::one();
  S factor = a;
  for (unsigned i = 1; i <= n; ++i) {
    result = result * factor / scalar_ops<S>::from_long(i);
    factor = factor - scalar_ops<S>::one();
  }
  return result;
}

template <class S>
S factorial_s(unsigned n) {
  S r = scalar_ops<S>::one();
  for (unsigned i = 2; i <= n; ++i) r = r * scalar_ops<S>::from_long(i);
  return r;
}

}  // namespace latwkb
