#pragma once

// Sparse multivariate polynomials over a scalar S, ordered graded-lex.  The
// exponent vector of a term is a Multi (one int per variable).  Terms are kept
// pruned: exact mode stores no zero coefficients, double mode drops
// coefficients below the zero tolerance relative to the operation's magnitude
// scale (passed in by each operation to survive catastrophic cancellation).

#include <algorithm>
#include <map>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "latwkb/scalar.hpp"

namespace latwkb {

using Multi = std::vector<int>;

inline int multi_degree(const Multi& a) { return std::accumulate(a.begin(), a.end(), 0); }

struct GradedLex {
  bool operator()(const Multi& a, const Multi& b) const {
    const int da = multi_degree(a), db = multi_degree(b);
    if (da != db) return da < db;
    return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
  }
};

enum class Parity { Zero, Even, Odd, Mixed };

template <class S>
class Polynomial {
 public:
  using TermMap = std::map<Multi, S, GradedLex>;
  static constexpr int kDegreeOfZero = INT_MIN;  // stands in for -infinity

  Polynomial() : dim_(0) {}
  explicit Polynomial(int dim) : dim_(dim) {
    if (dim < 0) throw std::invalid_argument("Polynomial: negative dimension");
  }

  static Polynomial constant(int dim, const S& c) {
    Polynomial p(dim);
    p.add_term(Multi(dim, 0), c);
    return p;
  }
  static Polynomial monomial(int dim, const Multi& alpha, const S& c) {
    Polynomial p(dim);
    p.add_term(alpha, c);
    return p;
  }
  static Polynomial variable(int dim, int nu) {
    Multi a(dim, 0);
    a.at(nu) = 1;
    return monomial(dim, a, scalar_ops<S>::one());
  }

  int dim() const { return dim_; }
  const TermMap& terms() const { return t_; }
  bool is_zero() const { return t_.empty(); }

  int degree() const { return t_.empty() ? kDegreeOfZero : multi_degree(t_.rbegin()->first); }

  S coeff(const Multi& alpha) const {
    auto it = t_.find(alpha);
    return it == t_.end() ? scalar_ops<S>::zero() : it->second;
  }

  void add_term(const Multi& alpha, const S& c) {
    if (static_cast<int>(alpha.size()) != dim_)
      throw std::invalid_argument("Polynomial::add_term: exponent arity mismatch");
    for (int e : alpha)
      if (e < 0) throw std::invalid_argument("Polynomial::add_term: negative exponent");
    auto [it, fresh] = t_.try_emplace(alpha, c);
    if (!fresh) it->second = it->second + c;
    if (scalar_ops<S>::is_zero(it->second, 0.0) && scalar_ops<S>::exact) t_.erase(it);
  }

  double max_abs_coeff() const {
    double m = 0.0;
    for (const auto& [a, c] : t_) m = std::max(m, scalar_ops<S>::abs_double(c));
    return m;
  }

  // Drop terms that are zero relative to `scale` (exact mode: exact zeros).
  void prune(double scale) {
    for (auto it = t_.begin(); it != t_.end();)
      it = scalar_ops<S>::is_zero(it->second, scale) ? t_.erase(it) : std::next(it);
  }

  bool is_zero_at_scale(double scale) const {
    for (const auto& [a, c] : t_)
      if (!scalar_ops<S>::is_zero(c, scale)) return false;
    return true;
  }

  friend Polynomial operator+(const Polynomial& x, const Polynomial& y) {
    check_dims(x, y);
    Polynomial r = x;
    for (const auto& [a, c] : y.t_) {
      auto [it, fresh] = r.t_.try_emplace(a, c);
      if (!fresh) it->second = it->second + c;
    }
    r.prune(std::max(x.max_abs_coeff(), y.max_abs_coeff()));
    return r;
  }

  friend Polynomial operator-(const Polynomial& x, const Polynomial& y) { return x + (-y); }

  Polynomial operator-() const {
    Polynomial r(dim_);
    for (const auto& [a, c] : t_) r.t_.emplace(a, -c);
    return r;
  }

  friend Polynomial operator*(const Polynomial& x, const Polynomial& y) {
    check_dims(x, y);
    Polynomial r(x.dim_);
    Multi sum(x.dim_);
    for (const auto& [a, ca] : x.t_)
      for (const auto& [b, cb] : y.t_) {
        for (int i = 0; i < x.dim_; ++i) sum[i] = a[i] + b[i];
        auto [it, fresh] = r.t_.try_emplace(sum, ca * cb);
        if (!fresh) it->second = it->second + ca * cb;
      }
    r.prune(x.max_abs_coeff() * y.max_abs_coeff());
    return r;
  }

  friend Polynomial operator*(const S& s, const Polynomial& x) {
    Polynomial r(x.dim_);
    if (scalar_ops<S>::is_zero(s, 1.0) && scalar_ops<S>::exact) return r;
    for (const auto& [a, c] : x.t_) r.t_.emplace(a, s * c);
    r.prune(scalar_ops<S>::abs_double(s) * x.max_abs_coeff());
    return r;
  }
  friend Polynomial operator*(const Polynomial& x, const S& s) { return s * x; }

  Polynomial& operator+=(const Polynomial& y) { return *this = *this + y; }
  Polynomial& operator-=(const Polynomial& y) { return *this = *this - y; }
  Polynomial& operator*=(const Polynomial& y) { return *this = *this * y; }

  bool operator==(const Polynomial& y) const { return dim_ == y.dim_ && t_ == y.t_; }

  Parity parity() const {
    if (t_.empty()) return Parity::Zero;
    bool even = true, odd = true;
    for (const auto& [a, c] : t_) (multi_degree(a) % 2 == 0 ? odd : even) = false;
    if (even) return Parity::Even;
    if (odd) return Parity::Odd;
    return Parity::Mixed;
  }

  Polynomial derivative(int nu) const {
    Polynomial r(dim_);
    for (const auto& [a, c] : t_) {
      if (a[nu] == 0) continue;
      Multi b = a;
      --b[nu];
      r.t_.emplace(b, c * scalar_ops<S>::from_long(a[nu]));
    }
    return r;
  }

  Polynomial derivative(const Multi& alpha) const {
    Polynomial r = *this;
    for (int nu = 0; nu < dim_; ++nu)
      for (int k = 0; k < alpha[nu]; ++k) r = r.derivative(nu);
    return r;
  }

  // (eta . grad) p for an integer direction eta.
  Polynomial directional_derivative(const std::vector<long>& eta) const {
    Polynomial r(dim_);
    for (int nu = 0; nu < dim_; ++nu)
      if (eta[nu] != 0) r += scalar_ops<S>::from_long(eta[nu]) * derivative(nu);
    return r;
  }

  S eval(const std::vector<S>& x) const {
    S acc = scalar_ops<S>::zero();
    for (const auto& [a, c] : t_) {
      S term = c;
      for (int nu = 0; nu < dim_; ++nu)
        for (int k = 0; k < a[nu]; ++k) term = term * x[nu];
      acc = acc + term;
    }
    return acc;
  }

  double eval_double(const std::vector<double>& x) const {
    double acc = 0.0;
    for (const auto& [a, c] : t_) {
      double term = scalar_ops<S>::to_double(c);
      for (int nu = 0; nu < dim_; ++nu)
        for (int k = 0; k < a[nu]; ++k) term *= x[nu];
      acc += term;
    }
    return acc;
  }

  Polynomial homogeneous_part(int deg) const {
    Polynomial r(dim_);
    for (const auto& [a, c] : t_)
      if (multi_degree(a) == deg) r.t_.emplace(a, c);
    return r;
  }

  // Taylor jet: drop every term of degree > deg.
  Polynomial truncated_to_degree(int deg) const {
    Polynomial r(dim_);
    for (const auto& [a, c] : t_)
      if (multi_degree(a) <= deg) r.t_.emplace(a, c);
    return r;
  }

  // p(Mx): substitute x_nu -> sum_mu M[nu][mu] x_mu.
  Polynomial compose_linear(const std::vector<std::vector<S>>& M) const {
    if (static_cast<int>(M.size()) != dim_)
      throw std::invalid_argument("compose_linear: matrix row count != dim");
    std::vector<Polynomial> rows;
    rows.reserve(dim_);
    for (int nu = 0; nu < dim_; ++nu) {
      Polynomial row(dim_);
      for (int mu = 0; mu < dim_; ++mu) {
        Multi a(dim_, 0);
        a[mu] = 1;
        row.add_term(a, M[nu][mu]);
      }
      rows.push_back(row);
    }
    Polynomial acc(dim_);
    for (const auto& [a, c] : t_) {
      Polynomial term = Polynomial::constant(dim_, c);
      for (int nu = 0; nu < dim_; ++nu)
        for (int k = 0; k < a[nu]; ++k) term = term * rows[nu];
      acc += term;
    }
    return acc;
  }

  // p(s_1 x_1, ..., s_d x_d).
  Polynomial scale_vars(const std::vector<S>& s) const {
    Polynomial r(dim_);
    for (const auto& [a, c] : t_) {
      S f = c;
      for (int nu = 0; nu < dim_; ++nu)
        for (int k = 0; k < a[nu]; ++k) f = f * s[nu];
      r.add_term(a, f);
    }
    return r;
  }

 private:
  static void check_dims(const Polynomial& x, const Polynomial& y) {
    if (x.dim_ != y.dim_) throw std::invalid_argument("Polynomial: dimension mismatch");
  }

  int dim_;
  TermMap t_;
};

}  // namespace latwkb
