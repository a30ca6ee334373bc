#pragma once

// Truncated formal series in eps on the half-integer order grid.  Orders are
// stored doubled (order2 = 2*order, an int), so integer orders are even keys
// and half-integer orders odd keys.  A Series knows the truncation order2 up
// to which its coefficients are complete (inclusive); terms beyond it are
// unknown, not zero.  Arithmetic propagates truncations by
//   trunc2(a*b) = min(trunc2(a) + floor2(b), trunc2(b) + floor2(a)),
// the floor being the lowest nonzero order2 (+inf for the zero series).
// Coefficients T are either scalars (PuiseuxScalar) or Polynomial<S>
// (PolySeries); the series code is shared.

#include <limits>
#include <map>
#include <stdexcept>
#include <string>

#include "latwkb/polynomial.hpp"
#include "latwkb/scalar.hpp"

namespace latwkb {

inline constexpr long kInfOrder2 = std::numeric_limits<long>::max() / 4;

inline long sat_add2(long a, long b) {
  long s = a + b;
  return s >= kInfOrder2 ? kInfOrder2 : s;
}

// Uniform coefficient interface for scalar and polynomial coefficients.
template <class T>
struct series_elem;

template <>
struct series_elem<Rat> {
  using Scalar = Rat;
  static Rat zero_like(const Rat&) { return Rat(0); }
  static bool is_zero(const Rat& x, double) { return sgn(x) == 0; }
  static double max_abs(const Rat& x) { return std::fabs(x.get_d()); }
};

template <>
struct series_elem<double> {
  using Scalar = double;
  static double zero_like(double) { return 0.0; }
  static bool is_zero(double x, double scale) { return scalar_ops<double>::is_zero(x, scale); }
  static double max_abs(double x) { return std::fabs(x); }
};

template <class S>
struct series_elem<Polynomial<S>> {
  using Scalar = S;
  static Polynomial<S> zero_like(const Polynomial<S>& p) { return Polynomial<S>(p.dim()); }
  static bool is_zero(const Polynomial<S>& p, double scale) { return p.is_zero_at_scale(scale); }
  static double max_abs(const Polynomial<S>& p) { return p.max_abs_coeff(); }
};

template <class T>
class Series {
 public:
  using Elem = series_elem<T>;
  using S = typename Elem::Scalar;

  Series() : trunc2_(kInfOrder2), proto_(T{}) {}
  explicit Series(T proto, long trunc2 = kInfOrder2) : trunc2_(trunc2), proto_(std::move(proto)) {}

  static Series zero(T proto, long trunc2 = kInfOrder2) { return Series(std::move(proto), trunc2); }
  static Series from_coeff(int order2, T value, long trunc2 = kInfOrder2) {
    Series s(series_elem<T>::zero_like(value), trunc2);
    s.set_coeff(order2, std::move(value));
    return s;
  }

  long trunc2() const { return trunc2_; }
  const T& proto() const { return proto_; }
  const std::map<int, T>& coeffs() const { return c_; }

  long floor2() const {
    for (const auto& [o2, v] : c_)
      if (!Elem::is_zero(v, max_abs())) return o2;
    return kInfOrder2;
  }

  bool is_zero() const { return floor2() == kInfOrder2; }

  T coeff(int order2) const {
    auto it = c_.find(order2);
    return it == c_.end() ? proto_ : it->second;
  }

  void set_coeff(int order2, T value) {
    if (order2 > trunc2_)
      throw std::logic_error("Series::set_coeff beyond truncation order");
    if constexpr (scalar_ops<S>::exact) {
      if (Elem::is_zero(value, 0.0)) {
        c_.erase(order2);
        return;
      }
    }
    c_[order2] = std::move(value);
  }

  void add_to_coeff(int order2, const T& value) { set_coeff(order2, coeff(order2) + value); }

  Series& truncate_to(long trunc2) {
    if (trunc2 < trunc2_) {
      trunc2_ = trunc2;
      c_.erase(c_.upper_bound(static_cast<int>(std::min<long>(trunc2, INT_MAX / 2))), c_.end());
    }
    return *this;
  }

  // Multiply by eps^(delta2/2).
  Series shifted(int delta2) const {
    Series r(proto_, sat_add2(trunc2_, delta2));
    for (const auto& [o2, v] : c_) r.c_.emplace(o2 + delta2, v);
    return r;
  }

  double max_abs() const {
    double m = 0.0;
    for (const auto& [o2, v] : c_) m = std::max(m, Elem::max_abs(v));
    return m;
  }

  friend Series operator+(const Series& x, const Series& y) { return add_impl(x, y, false); }

  friend Series operator-(const Series& x, const Series& y) { return add_impl(x, y, true); }

  Series operator-() const {
    Series r(proto_, trunc2_);
    for (const auto& [o2, v] : c_) r.c_.emplace(o2, -v);
    return r;
  }

  friend Series operator*(const Series& x, const Series& y) {
    const long t2 = std::min(sat_add2(x.trunc2_, y.floor2()), sat_add2(y.trunc2_, x.floor2()));
    Series r(x.proto_, t2);
    const double scale = x.max_abs() * y.max_abs();
    for (const auto& [ox, vx] : x.c_)
      for (const auto& [oy, vy] : y.c_) {
        const long o = static_cast<long>(ox) + oy;
        if (o > t2) continue;
        T prod = vx * vy;
        auto [it, fresh] = r.c_.try_emplace(static_cast<int>(o), std::move(prod));
        if (!fresh) it->second = it->second + vx * vy;
      }
    r.prune(scale);
    return r;
  }

  friend Series operator*(const S& s, const Series& x) {
    Series r(x.proto_, x.trunc2_);
    for (const auto& [o2, v] : x.c_) r.c_.emplace(o2, v * s);
    r.prune(scalar_ops<S>::abs_double(s) * x.max_abs());
    return r;
  }
  friend Series operator*(const Series& x, const S& s) { return s * x; }

  Series& operator+=(const Series& y) { return *this = *this + y; }
  Series& operator-=(const Series& y) { return *this = *this - y; }
  Series& operator*=(const Series& y) { return *this = *this * y; }

  bool same_terms(const Series& y) const { return c_ == y.c_ && trunc2_ == y.trunc2_; }

  void prune(double scale) {
    for (auto it = c_.begin(); it != c_.end();)
      it = Elem::is_zero(it->second, scale) ? c_.erase(it) : std::next(it);
  }

 private:
  static Series add_impl(const Series& x, const Series& y, bool subtract) {
    Series r(x.proto_, std::min(x.trunc2_, y.trunc2_));
    const double scale = std::max(x.max_abs(), y.max_abs());
    for (const auto& [o2, v] : x.c_)
      if (o2 <= r.trunc2_) r.c_.emplace(o2, v);
    for (const auto& [o2, v] : y.c_) {
      if (o2 > r.trunc2_) continue;
      auto [it, fresh] = r.c_.try_emplace(o2, subtract ? -v : v);
      if (!fresh) {
        if (subtract)
          it->second = it->second - v;
        else
          it->second = it->second + v;
      }
    }
    r.prune(scale);
    return r;
  }

  std::map<int, T> c_;
  long trunc2_;
  T proto_;
};

template <class S>
using PuiseuxScalar = Series<S>;
template <class S>
using PolySeries = Series<Polynomial<S>>;

inline Rat one_like(const Rat&) { return Rat(1); }
inline double one_like(double) { return 1.0; }
template <class S>
Polynomial<S> one_like(const Polynomial<S>& p) {
  return Polynomial<S>::constant(p.dim(), scalar_ops<S>::one());
}

// exp(mu) for a series with floor order >= 1/2.  The optional target
// truncation bounds the work when mu is exactly known (infinite trunc2).
template <class T>
Series<T> series_exp(const Series<T>& mu, long target_trunc2 = -1) {
  using S = typename series_elem<T>::Scalar;
  Series<T> m = mu;
  if (target_trunc2 >= 0) m.truncate_to(std::min(m.trunc2(), target_trunc2));
  if (m.trunc2() >= kInfOrder2)
    throw std::invalid_argument("series_exp: unbounded truncation; pass target_trunc2");
  const long c2 = m.floor2();
  if (c2 < 1) throw std::invalid_argument("series_exp: requires floor order >= 1/2");
  Series<T> result = Series<T>::from_coeff(0, one_like(m.proto()), m.trunc2());
  Series<T> power = result;
  S fact = scalar_ops<S>::one();
  for (long k = 1; k * c2 <= m.trunc2(); ++k) {
    power = power * m;
    power.truncate_to(m.trunc2());
    fact = fact / scalar_ops<S>::from_long(k);
    result += power * fact;
  }
  result.truncate_to(m.trunc2());
  return result;
}

// 1/mu for a scalar series with invertible leading coefficient.
template <class S>
Series<S> series_inv(const Series<S>& mu) {
  const long c2 = mu.floor2();
  if (c2 >= kInfOrder2) throw std::invalid_argument("series_inv: zero series");
  if (mu.trunc2() >= kInfOrder2)
    throw std::invalid_argument("series_inv: unbounded truncation; truncate first");
  const S a = mu.coeff(static_cast<int>(c2));
  const long wt2 = mu.trunc2() - c2;  // truncation of w below
  // mu = a eps^{c}(1 + w), floor2(w) >= 1.
  Series<S> w = (mu * (scalar_ops<S>::one() / a)).shifted(static_cast<int>(-c2));
  w.add_to_coeff(0, -scalar_ops<S>::one());
  w.truncate_to(wt2);
  Series<S> geom = Series<S>::from_coeff(0, scalar_ops<S>::one(), wt2);
  Series<S> power = geom;
  const long wf2 = w.floor2();
  for (long k = 1; wf2 < kInfOrder2 && k * wf2 <= wt2; ++k) {
    power = power * (-w);
    power.truncate_to(wt2);
    geom += power;
  }
  return (geom * (scalar_ops<S>::one() / a)).shifted(static_cast<int>(-c2));
}

// mu^{-1/2} for a scalar series with floor order 0.  Exact mode requires the
// leading coefficient to be 1 (no rational square root is attempted); double
// mode requires it positive.
template <class S>
Series<S> series_inv_sqrt(const Series<S>& mu) {
  if (mu.trunc2() >= kInfOrder2)
    throw std::invalid_argument("series_inv_sqrt: unbounded truncation; truncate first");
  if (mu.floor2() != 0)
    throw std::invalid_argument("series_inv_sqrt: requires floor order 0");
  const S s0 = mu.coeff(0);
  S pref = scalar_ops<S>::one();
  if constexpr (scalar_ops<S>::exact) {
    if (!(s0 == scalar_ops<S>::one()))
      throw std::invalid_argument("series_inv_sqrt: exact mode requires leading coefficient 1");
  } else {
    if (!(scalar_ops<S>::to_double(s0) > 0.0))
      throw std::invalid_argument("series_inv_sqrt: leading coefficient must be positive");
    pref = scalar_ops<S>::one() / std::sqrt(scalar_ops<S>::to_double(s0));
  }
  Series<S> w = mu * (scalar_ops<S>::one() / s0);
  w.add_to_coeff(0, -scalar_ops<S>::one());
  const long t2 = mu.trunc2();
  Series<S> result = Series<S>::from_coeff(0, scalar_ops<S>::one(), t2);
  Series<S> power = result;
  const long wf2 = w.floor2();
  const S half = -scalar_ops<S>::ratio(1, 2);
  for (long k = 1; wf2 < kInfOrder2 && k * wf2 <= t2; ++k) {
    power = power * w;
    power.truncate_to(t2);
    result += power * binom_general<S>(half, static_cast<unsigned>(k));
  }
  return result * pref;
}

// Numeric evaluation at a sample eps (coefficients mapped through to_double).
template <class S>
double eval_eps(const Series<S>& s, double eps) {
  double acc = 0.0;
  for (const auto& [o2, v] : s.coeffs()) acc += scalar_ops<S>::to_double(v) * std::pow(eps, 0.5 * o2);
  return acc;
}

// Lift a scalar series to a PolySeries of constants.
template <class S>
PolySeries<S> to_poly_series(const Series<S>& s, int dim) {
  PolySeries<S> r(Polynomial<S>(dim), s.trunc2());
  for (const auto& [o2, v] : s.coeffs()) r.set_coeff(o2, Polynomial<S>::constant(dim, v));
  return r;
}

// Re-expansion of a polynomial p(x) at x = sqrt(eps) y: each monomial c x^beta
// becomes an order-|beta|/2 contribution c y^beta.  Exact, so trunc2 = +inf.
template <class S>
PolySeries<S> scaled_argument_series(const Polynomial<S>& p) {
  PolySeries<S> r(Polynomial<S>(p.dim()), kInfOrder2);
  for (const auto& [beta, c] : p.terms())
    r.add_to_coeff(multi_degree(beta), Polynomial<S>::monomial(p.dim(), beta, c));
  return r;
}

}  // namespace latwkb
