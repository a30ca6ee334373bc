#pragma once

// Monic Hermite-type orthogonal polynomials for the normalized Gaussian
// functional with weight exp(-sum_nu lambda_nu y_nu^2), their diagonal Gram
// values, and moment-based pairings.  The normalization makes every moment
// rational in lambda, so the exact field stays rational; orthonormal scaling
// is available where the square roots exist (always in double mode).

#include <map>
#include <stdexcept>
#include <vector>

#include "latwkb/polynomial.hpp"

namespace latwkb {

// Product of per-axis moments m_{2n}(lambda) = (2n-1)!!/(2 lambda)^n; odd
// moments vanish.
template <class S>
S gaussian_moment(const std::vector<S>& lambda, const Multi& beta) {
  using ops = scalar_ops<S>;
  S acc = ops::one();
  for (size_t nu = 0; nu < lambda.size(); ++nu) {
    const int b = beta[nu];
    if (b % 2 != 0) return ops::zero();
    const S inv2l = ops::one() / (ops::from_long(2) * lambda[nu]);
    for (int n = 1; 2 * n <= b; ++n) acc = acc * ops::from_long(2 * n - 1) * inv2l;
  }
  return acc;
}

// e_alpha = sum_nu lambda_nu (2 alpha_nu + 1) + shift.
template <class S>
S oscillator_energy(const std::vector<S>& lambda, const Multi& alpha, const S& shift) {
  using ops = scalar_ops<S>;
  S e = shift;
  for (size_t nu = 0; nu < lambda.size(); ++nu)
    e = e + lambda[nu] * ops::from_long(2 * alpha[nu] + 1);
  return e;
}

template <class S>
class HermiteBasis {
 public:
  explicit HermiteBasis(std::vector<S> lambda) : lambda_(std::move(lambda)) {
    for (const S& l : lambda_)
      if (scalar_ops<S>::to_double(l) <= 0.0)
        throw std::invalid_argument("HermiteBasis: frequencies must be positive");
  }

  int dim() const { return static_cast<int>(lambda_.size()); }
  const std::vector<S>& lambda() const { return lambda_; }

  // Monic h_alpha = prod_nu h_{alpha_nu}(y_nu) from the three-term recurrence
  // h_{n+1} = y h_n - (n / (2 lambda)) h_{n-1}.
  Polynomial<S> h(const Multi& alpha) const {
    using ops = scalar_ops<S>;
    const int d = dim();
    Polynomial<S> r = Polynomial<S>::constant(d, ops::one());
    for (int nu = 0; nu < d; ++nu) r = r * axis_poly(nu, alpha[nu]);
    return r;
  }

  // Diagonal Gram value g_alpha = prod_nu alpha_nu! / (2 lambda_nu)^{alpha_nu}.
  S g(const Multi& alpha) const {
    using ops = scalar_ops<S>;
    S acc = ops::one();
    for (int nu = 0; nu < dim(); ++nu) {
      const S inv2l = ops::one() / (ops::from_long(2) * lambda_[nu]);
      for (int i = 1; i <= alpha[nu]; ++i) acc = acc * ops::from_long(i) * inv2l;
    }
    return acc;
  }

  // Normalized-Gaussian pairing of two polynomials.
  S pair(const Polynomial<S>& p, const Polynomial<S>& q) const {
    using ops = scalar_ops<S>;
    S acc = ops::zero();
    const Polynomial<S> pq = p * q;
    for (const auto& [beta, c] : pq.terms()) acc = acc + c * gaussian_moment(lambda_, beta);
    return acc;
  }

  // Expansion coefficients of p in the monic basis, by peeling leading terms.
  std::map<Multi, S, GradedLex> to_hermite(const Polynomial<S>& p) const {
    using ops = scalar_ops<S>;
    std::map<Multi, S, GradedLex> out;
    Polynomial<S> rest = p;
    if constexpr (!ops::exact) rest.prune(p.max_abs_coeff());
    while (!rest.is_zero()) {
      const auto& [alpha, c] = *rest.terms().rbegin();
      out[alpha] = c;
      rest -= h(alpha) * c;
      if constexpr (!ops::exact) rest.prune(p.max_abs_coeff());
    }
    return out;
  }

  // h_alpha / sqrt(g_alpha); throws in exact mode when the root is irrational.
  Polynomial<S> orthonormal(const Multi& alpha) const {
    using ops = scalar_ops<S>;
    S root = ops::zero();
    if (!ops::sqrt_exact(g(alpha), root))
      throw std::domain_error("HermiteBasis: sqrt(g_alpha) is not rational; use double mode");
    return h(alpha) * (ops::one() / root);
  }

 private:
  Polynomial<S> axis_poly(int nu, int n) const {
    using ops = scalar_ops<S>;
    const int d = dim();
    Polynomial<S> prev = Polynomial<S>::constant(d, ops::one());
    if (n == 0) return prev;
    Polynomial<S> cur = Polynomial<S>::variable(d, nu);
    const Polynomial<S> y = cur;
    const S inv2l = ops::one() / (ops::from_long(2) * lambda_[nu]);
    for (int k = 1; k < n; ++k) {
      Polynomial<S> next = y * cur - prev * (ops::from_long(k) * inv2l);
      prev = cur;
      cur = next;
    }
    return cur;
  }

  std::vector<S> lambda_;
};

}  // namespace latwkb
