#pragma once

// Expansion of the conjugated, rescaled operator
//
//   G_eps u(y) = (1/eps) e^{phi/eps} H'_eps (e^{-phi/eps} u(./sqrt(eps)))
//
// as a half-integer power series sum_k eps^k G_k acting on polynomials in y.
// Everything is straight-line formal algebra in sigma = sqrt(eps): for each
// hop, the Taylor increment of the phase produces an exponent series whose
// exp multiplies the hop-coefficient series and the binomially shifted
// monomial; the potential enters as a plain series.  The eikonal equation
// makes the 1/eps and 1/sqrt(eps) coefficients cancel, and the structure
// theorems (degree raise <= 2k, parity flip (-1)^{2k}) are enforced as
// assertions on every computed column rather than trusted.

#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "latwkb/eikonal.hpp"
#include "latwkb/model.hpp"
#include "latwkb/series.hpp"

namespace latwkb {

namespace detail {

inline long binom_long(int n, int k) {
  if (k < 0 || k > n) return 0;
  long r = 1;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

// Directional derivative with scalar (possibly non-integer) direction.
template <class S>
Polynomial<S> dir_deriv(const Polynomial<S>& p, const std::vector<S>& c) {
  Polynomial<S> r(p.dim());
  for (int nu = 0; nu < p.dim(); ++nu)
    if (!scalar_ops<S>::is_zero(c[nu], 1.0)) r += p.derivative(nu) * c[nu];
  return r;
}

// All monomial exponents of degree <= D in d variables, graded-lex order.
inline std::vector<Multi> graded_monomials(int d, int D) {
  std::map<Multi, int, GradedLex> ordered;
  std::function<void(Multi&, int, int)> rec = [&](Multi& a, int pos, int left) {
    if (pos == d) {
      ordered.emplace(a, 0);
      return;
    }
    for (int e = 0; e <= left; ++e) {
      a[pos] = e;
      rec(a, pos + 1, left - e);
    }
    a[pos] = 0;
  };
  Multi a(d, 0);
  rec(a, 0, D);
  std::vector<Multi> out;
  out.reserve(ordered.size());
  for (const auto& [m, _] : ordered) out.push_back(m);
  return out;
}

}  // namespace detail

// Differential-operator form sum_alpha b_alpha(y) d^alpha.
template <class S>
struct DiffOperator {
  int k2 = 0;  // operator order in half-integer steps (eps^{k2/2})
  std::map<Multi, Polynomial<S>, GradedLex> b;
  std::vector<std::string> notes;

  Polynomial<S> apply(const Polynomial<S>& u) const {
    Polynomial<S> r(u.dim());
    for (const auto& [alpha, coeff] : b) r += coeff * u.derivative(alpha);
    return r;
  }
};

template <class S>
class ConjugatedExpansion {
 public:
  int d = 0;
  int n2 = 0;    // expansion carries G_k for 2k = 0..n2
  int D = 0;     // monomial basis covers degrees <= D
  std::vector<Multi> basis;
  std::map<Multi, int, GradedLex> index;
  // cols[k2][i] = G_{k2/2} applied to y^{basis[i]}
  std::vector<std::vector<Polynomial<S>>> cols;
  std::vector<std::string> notes;

  const Polynomial<S>& column(int k2, const Multi& beta) const {
    auto it = index.find(beta);
    if (it == index.end())
      throw std::out_of_range("ConjugatedExpansion: monomial outside validity degree");
    return cols.at(k2).at(it->second);
  }

  Polynomial<S> apply(int k2, const Polynomial<S>& u) const {
    if (k2 < 0 || k2 > n2) throw std::out_of_range("ConjugatedExpansion: order out of range");
    if (u.degree() > D)
      throw std::out_of_range("ConjugatedExpansion: input degree exceeds validity");
    Polynomial<S> r(d);
    for (const auto& [beta, c] : u.terms()) r += column(k2, beta) * c;
    return r;
  }
};

template <class S>
Polynomial<S> gk_apply(const ConjugatedExpansion<S>& e, int k2, const Polynomial<S>& u) {
  return e.apply(k2, u);
}

template <class S>
ConjugatedExpansion<S> conjugate_expand(const LatticeModel<S>& m, const EikonalSolution<S>& sol,
                                        int n2, int D) {
  using ops = scalar_ops<S>;
  if (n2 < 0 || D < 0) throw std::invalid_argument("conjugate_expand: negative order or degree");
  if (sol.max_k() < n2)
    throw std::invalid_argument(
        "conjugate_expand: eikonal jet degree " + std::to_string(sol.max_k() + 2) +
        " too small; need >= " + std::to_string(n2 + 2));

  const int d = m.d;
  const long T2 = n2 + 2;  // bracket orders sigma^0..sigma^{n2+2}
  const Polynomial<S> phi = sol.jet();

  // Per hop: W_eta = (sum_k sigma^{2k} a^{(k)}_eta(sigma y)) exp(Delta_eta).
  std::vector<PolySeries<S>> hop_weight;
  std::vector<std::vector<S>> hop_disp;
  for (const auto& h : m.hops) {
    PolySeries<S> a_series(Polynomial<S>(d), T2);
    for (int k = 0; k < static_cast<int>(h.orders.size()); ++k) {
      if (h.orders[k].is_zero()) continue;
      a_series += scaled_argument_series(h.orders[k]).shifted(2 * k).truncate_to(T2);
    }
    const auto disp = m.hop_displacement(h.eta);

    PolySeries<S> delta(Polynomial<S>(d), T2);
    Polynomial<S> dm = phi;
    S mfact = ops::one();
    for (int mm = 1; 2 * mm - 2 <= T2; ++mm) {
      dm = detail::dir_deriv(dm, disp);
      if (dm.is_zero()) break;
      mfact = mfact * ops::from_long(mm);
      const S cm = ops::zero() - ops::one() / mfact;
      delta += scaled_argument_series(dm * cm).shifted(2 * mm - 2).truncate_to(T2);
    }
    hop_weight.push_back(a_series * series_exp(delta, T2));
    hop_disp.push_back(disp);
  }

  PolySeries<S> pot(Polynomial<S>(d), T2);
  for (int l = 0; l < static_cast<int>(m.potential.size()); ++l) {
    if (m.potential[l].is_zero()) continue;
    pot += scaled_argument_series(m.potential[l]).shifted(2 * l).truncate_to(T2);
  }

  ConjugatedExpansion<S> out;
  out.d = d;
  out.n2 = n2;
  out.D = D;
  out.basis = detail::graded_monomials(d, D);
  for (int i = 0; i < static_cast<int>(out.basis.size()); ++i) out.index.emplace(out.basis[i], i);
  out.cols.assign(n2 + 1, {});

  for (const Multi& beta : out.basis) {
    PolySeries<S> bracket = pot * PolySeries<S>::from_coeff(0, Polynomial<S>::monomial(d, beta, ops::one()));

    for (size_t hi = 0; hi < hop_weight.size(); ++hi) {
      // (y + sigma eta_C)^beta, expanded binomially per axis.
      PolySeries<S> shift{Polynomial<S>(d)};
      Multi gamma(d, 0);
      std::function<void(int, int, S)> rec = [&](int pos, int o2, S coeff) {
        if (pos == d) {
          shift.add_to_coeff(o2, Polynomial<S>::monomial(d, gamma, coeff));
          return;
        }
        S cpow = ops::one();
        for (int g = beta[pos]; g >= 0; --g) {
          gamma[pos] = g;
          rec(pos + 1, o2 + beta[pos] - g,
              coeff * ops::from_long(detail::binom_long(beta[pos], g)) * cpow);
          cpow = cpow * hop_disp[hi][pos];
        }
        gamma[pos] = 0;
      };
      rec(0, 0, ops::one());
      bracket += hop_weight[hi] * shift;
    }

    // The eikonal equation and the leading sum rule make sigma^0 and sigma^1
    // vanish; everything above sigma^{n2+2} is beyond truncation.
    const double scale = 1.0 + bracket.coeff(static_cast<int>(T2)).max_abs_coeff() +
                         bracket.coeff(2).max_abs_coeff();
    for (int bad = 0; bad <= 1; ++bad) {
      Polynomial<S> c = bracket.coeff(bad);
      if (!c.is_zero_at_scale(scale)) {
        std::string degs;
        for (const auto& [a, v] : c.terms())
          if (!ops::is_zero(v, scale)) degs += (degs.empty() ? "" : ",") + std::to_string(multi_degree(a));
        throw std::logic_error("conjugate_expand: order eps^{" +
                               std::string(bad == 0 ? "-1" : "-1/2") +
                               "} fails to cancel (wrong eikonal jet or insufficient degree); "
                               "surviving y-degrees: " + degs);
      }
    }

    for (int k2 = 0; k2 <= n2; ++k2) {
      Polynomial<S> col = bracket.coeff(k2 + 2);
      if constexpr (!ops::exact) col.prune(scale);
      if (!col.is_zero() && col.degree() > multi_degree(beta) + k2)
        throw std::logic_error("conjugate_expand: G_{" + std::to_string(k2) +
                               "/2} raises degree beyond 2k on y^beta, |beta|=" +
                               std::to_string(multi_degree(beta)));
      const Parity par = col.parity();
      const Parity want = (multi_degree(beta) + k2) % 2 == 0 ? Parity::Even : Parity::Odd;
      if (par != Parity::Zero && par != want)
        throw std::logic_error("conjugate_expand: G_{" + std::to_string(k2) +
                               "/2} violates the parity rule on |beta|=" +
                               std::to_string(multi_degree(beta)));
      out.cols[k2].push_back(std::move(col));
    }
  }
  return out;
}

// Closed form of G_0 for a normal-form model: sum_nu lambda_nu (1 + 2 y_nu d_nu)
// - Laplacian + constant shift.
template <class S>
DiffOperator<S> g0_closed_form(const std::vector<S>& lambda, const S& shift) {
  using ops = scalar_ops<S>;
  const int d = static_cast<int>(lambda.size());
  DiffOperator<S> op;
  op.k2 = 0;
  S c0 = shift;
  for (const S& l : lambda) c0 = c0 + l;
  op.b[Multi(d, 0)] = Polynomial<S>::constant(d, c0);
  for (int nu = 0; nu < d; ++nu) {
    Multi e(d, 0);
    e[nu] = 1;
    Multi e2(d, 0);
    e2[nu] = 2;
    op.b[e] = Polynomial<S>::monomial(d, e, ops::from_long(2) * lambda[nu]);
    op.b[e2] = Polynomial<S>::constant(d, ops::zero() - ops::one());
  }
  return op;
}

// Triangular reconstruction of G_k as b_k + sum b_{k,alpha} d^alpha, verified
// against the stored matrix on the whole basis.
template <class S>
DiffOperator<S> gk_as_diffop(const ConjugatedExpansion<S>& e, int k2) {
  using ops = scalar_ops<S>;
  if (k2 < 0 || k2 > e.n2) throw std::out_of_range("gk_as_diffop: order out of range");
  if (e.D < 2 * k2 + 4)
    throw std::invalid_argument("gk_as_diffop: validity degree too small for reconstruction");

  DiffOperator<S> op;
  op.k2 = k2;
  const int amax = k2 + 2;  // |alpha| <= 2k + 2

  double scale = 1.0;
  if constexpr (!ops::exact) {
    for (const auto& c : e.cols[k2]) scale = std::max(scale, c.max_abs_coeff());
  }

  for (const Multi& alpha : e.basis) {
    if (multi_degree(alpha) > amax) break;
    Polynomial<S> target = e.column(k2, alpha);
    const Polynomial<S> mono = Polynomial<S>::monomial(e.d, alpha, ops::one());
    for (const auto& [ap, bc] : op.b) target -= bc * mono.derivative(ap);
    if constexpr (!ops::exact) target.prune(scale);
    if (target.is_zero()) continue;
    S afact = ops::one();
    for (int nu = 0; nu < e.d; ++nu)
      for (int i = 2; i <= alpha[nu]; ++i) afact = afact * ops::from_long(i);
    Polynomial<S> ba = target * (ops::one() / afact);

    if (ba.degree() > k2 + 2 - multi_degree(alpha))
      throw std::logic_error("gk_as_diffop: coefficient of d^alpha exceeds degree 2k+2-|alpha| at |alpha|=" +
                             std::to_string(multi_degree(alpha)));
    const Parity par = ba.parity();
    const Parity want = (k2 + multi_degree(alpha)) % 2 == 0 ? Parity::Even : Parity::Odd;
    if (par != Parity::Zero && par != want)
      throw std::logic_error("gk_as_diffop: coefficient parity violates (-1)^{2k-|alpha|} at |alpha|=" +
                             std::to_string(multi_degree(alpha)));
    op.b.emplace(alpha, std::move(ba));
  }

  // the multiplication part is expected to stop at degree 2k; the structure
  // statements are in tension here, so record rather than reject
  auto it = op.b.find(Multi(e.d, 0));
  if (it != op.b.end() && it->second.degree() > k2)
    op.notes.push_back("multiplication part b_k has degree " +
                       std::to_string(it->second.degree()) + " > 2k at 2k=" + std::to_string(k2));

  for (size_t i = 0; i < e.basis.size(); ++i) {
    const Multi& beta = e.basis[i];
    Polynomial<S> diff =
        op.apply(Polynomial<S>::monomial(e.d, beta, ops::one())) - e.cols[k2][i];
    if constexpr (!ops::exact) diff.prune(scale);
    if (!diff.is_zero())
      throw std::logic_error(
          "gk_as_diffop: reconstruction fails on y^beta with |beta|=" +
          std::to_string(multi_degree(beta)) +
          " (derivative order beyond 2k+2 present)");
  }
  return op;
}

}  // namespace latwkb
