#pragma once

// Lattice difference operators H_eps = T_eps + V_eps on the scaled lattice
// (eps Z)^d near a one-well potential minimum.  A model lists its hops eta
// (integer displacements, eta = 0 included explicitly) with per-order
// coefficient polynomials a^{(k)}_eta(x), and the potential orders V_l(x).
// Validation checks the structural hypotheses the expansion machinery needs;
// normal_form produces the rotated/scaled coordinates in which the leading
// kinetic matrix is the identity and the potential well is diagonal.

#include <algorithm>
#include <complex>
#include <cstdlib>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "latwkb/polynomial.hpp"
#include "latwkb/scalar.hpp"
#include "latwkb/smallmat.hpp"

namespace latwkb {

template <class S>
struct Hop {
  std::vector<long> eta;
  std::vector<Polynomial<S>> orders;  // a^{(k)}_eta for k = 0, 1, ...
};

template <class S>
struct LatticeModel {
  int d = 0;
  std::vector<Hop<S>> hops;
  std::vector<Polynomial<S>> potential;  // V_0, V_1, ...
  std::optional<Mat<S>> C;               // coordinate map of a transformed model

  int max_hop_order() const {
    int k = -1;
    for (const auto& h : hops) k = std::max(k, static_cast<int>(h.orders.size()) - 1);
    return k;
  }

  Polynomial<S> hop_order(const std::vector<long>& eta, int k) const {
    for (const auto& h : hops)
      if (h.eta == eta && k < static_cast<int>(h.orders.size())) return h.orders[k];
    return Polynomial<S>(d);
  }

  Polynomial<S> potential_order(int l) const {
    return l < static_cast<int>(potential.size()) ? potential[l] : Polynomial<S>(d);
  }

  long hop_reach() const {
    long r = 0;
    for (const auto& h : hops)
      for (long e : h.eta) r = std::max(r, std::labs(e));
    return r;
  }

  // Displacement of hop eta in the model's coordinates: C*eta (eta itself for
  // untransformed models).
  std::vector<S> hop_displacement(const std::vector<long>& eta) const {
    std::vector<S> v(d, scalar_ops<S>::zero());
    if (C) {
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
          v[i] = v[i] + C->at(i, j) * scalar_ops<S>::from_long(eta[j]);
    } else {
      for (int i = 0; i < d; ++i) v[i] = scalar_ops<S>::from_long(eta[i]);
    }
    return v;
  }
};

struct ValidationOptions {
  double grid_radius = 1.0;
  int grid_points_per_dim = 9;
  int xi_points_per_dim = 17;
};

struct ValidationReport {
  bool ok = true;
  std::vector<std::pair<std::string, bool>> checks;
  std::vector<std::string> messages;
  ValidationOptions opts;

  void record(const std::string& name, bool passed, const std::string& detail = "") {
    checks.emplace_back(name, passed);
    if (!passed) {
      ok = false;
      messages.push_back(name + (detail.empty() ? "" : ": " + detail));
    }
  }
  bool passed(const std::string& name) const {
    for (const auto& [n, p] : checks)
      if (n == name) return p;
    return false;
  }
};

namespace detail {

inline void tensor_grid(int d, double radius, int per_dim, std::vector<std::vector<double>>& out) {
  out.clear();
  std::vector<int> idx(d, 0);
  for (;;) {
    std::vector<double> x(d);
    for (int i = 0; i < d; ++i)
      x[i] = per_dim == 1 ? 0.0 : -radius + 2.0 * radius * idx[i] / (per_dim - 1);
    out.push_back(x);
    int i = 0;
    while (i < d && ++idx[i] == per_dim) idx[i++] = 0;
    if (i == d) break;
  }
}

}  // namespace detail

// Quadratic-form matrix A of the potential minimum: V_0(x) = <x, A x> + h.o.t.
template <class S>
Mat<S> quadratic_form_matrix(const Polynomial<S>& v0) {
  const int d = v0.dim();
  Mat<S> A(d, d, scalar_ops<S>::zero());
  const S half = scalar_ops<S>::ratio(1, 2);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      Multi a(d, 0);
      ++a[i];
      ++a[j];
      A.at(i, j) = i == j ? v0.coeff(a) : half * v0.coeff(a);
    }
  return A;
}

// B(x) = -(1/2) sum_eta a^{(0)}_eta(x) eta eta^T, the leading kinetic matrix.
template <class S>
Mat<Polynomial<S>> matrix_B_poly(const LatticeModel<S>& m) {
  Mat<Polynomial<S>> B(m.d, m.d, Polynomial<S>(m.d));
  const S mhalf = scalar_ops<S>::ratio(-1, 2);
  for (const auto& h : m.hops) {
    if (h.orders.empty()) continue;
    for (int i = 0; i < m.d; ++i)
      for (int j = 0; j < m.d; ++j) {
        const S w = mhalf * scalar_ops<S>::from_long(h.eta[i] * h.eta[j]);
        B.at(i, j) += h.orders[0] * w;
      }
  }
  return B;
}

template <class S>
Mat<S> matrix_B0(const LatticeModel<S>& m) {
  Mat<Polynomial<S>> B = matrix_B_poly(m);
  Mat<S> B0(m.d, m.d, scalar_ops<S>::zero());
  const Multi zero(m.d, 0);
  for (int i = 0; i < m.d; ++i)
    for (int j = 0; j < m.d; ++j) B0.at(i, j) = B.at(i, j).coeff(zero);
  return B0;
}

// Order-k kinetic symbol t_k(x, xi) = sum_eta a^{(k)}_eta(x) exp(-i eta.xi).
template <class S>
std::complex<double> symbol_t(const LatticeModel<S>& m, int k, const std::vector<double>& x,
                              const std::vector<double>& xi) {
  std::complex<double> acc(0.0, 0.0);
  for (const auto& h : m.hops) {
    if (k >= static_cast<int>(h.orders.size())) continue;
    double phase = 0.0;
    for (int i = 0; i < m.d; ++i) phase += h.eta[i] * xi[i];
    acc += h.orders[k].eval_double(x) * std::exp(std::complex<double>(0.0, -phase));
  }
  return acc;
}

// Constant shift entering the harmonic level ladder: V_1(0) + t_1(0,0).
template <class S>
S level_shift(const LatticeModel<S>& m) {
  const Multi zero(m.d, 0);
  S s = m.potential_order(1).coeff(zero);
  for (const auto& h : m.hops)
    if (h.orders.size() > 1) s = s + h.orders[1].coeff(zero);
  return s;
}

template <class S>
ValidationReport validate(const LatticeModel<S>& m, const ValidationOptions& opts = {}) {
  using ops = scalar_ops<S>;
  ValidationReport rep;
  rep.opts = opts;
  const Multi zero(m.d, 0);

  // hop table sanity: arities match, eta = 0 present, no duplicate eta
  {
    bool ok = true;
    std::string why;
    std::map<std::vector<long>, int> seen;
    for (const auto& h : m.hops) {
      if (static_cast<int>(h.eta.size()) != m.d) {
        ok = false;
        why = "hop arity != d";
      }
      if (++seen[h.eta] > 1) {
        ok = false;
        why = "duplicate hop";
      }
      for (const auto& p : h.orders)
        if (p.dim() != m.d) {
          ok = false;
          why = "coefficient dimension != d";
        }
    }
    if (!seen.count(std::vector<long>(m.d, 0))) {
      ok = false;
      why = "hop eta = 0 must be listed explicitly";
    }
    rep.record("hop_table", ok, why);
    if (!ok) return rep;
  }

  double coeff_scale = 0.0;
  for (const auto& h : m.hops)
    for (const auto& p : h.orders) coeff_scale = std::max(coeff_scale, p.max_abs_coeff());

  // leading-order row sum: sum_eta a^{(0)}_eta(x) == 0 identically
  {
    Polynomial<S> sum(m.d);
    for (const auto& h : m.hops)
      if (!h.orders.empty()) sum += h.orders[0];
    rep.record("leading_sum_rule", sum.is_zero_at_scale(coeff_scale),
               "sum_eta a^(0)_eta(x) != 0");
  }

  // sign of the off-diagonal leading coefficients on the sample grid
  {
    std::vector<std::vector<double>> grid;
    detail::tensor_grid(m.d, opts.grid_radius, opts.grid_points_per_dim, grid);
    bool ok = true;
    std::string why;
    for (const auto& h : m.hops) {
      if (h.orders.empty() || h.eta == std::vector<long>(m.d, 0)) continue;
      for (const auto& x : grid) {
        const double v = h.orders[0].eval_double(x);
        if (v > float_zero_tol() * std::max(1.0, coeff_scale)) {
          ok = false;
          std::ostringstream os;
          os << "a^(0) positive at a sample point for a nonzero hop (value " << v << ")";
          why = os.str();
          break;
        }
      }
    }
    rep.record("offdiagonal_sign", ok, why);
  }

  // detailed-balance between opposite hops, order by order:
  // a^{(k)}_eta(x) = sum_{m<=k} (1/m!) (eta.grad)^m a^{(k-m)}_{-eta}(x)
  {
    bool ok = true;
    std::string why;
    const int K = m.max_hop_order();
    for (const auto& h : m.hops) {
      std::vector<long> neg(h.eta.size());
      for (size_t i = 0; i < neg.size(); ++i) neg[i] = -h.eta[i];
      for (int k = 0; k <= K && ok; ++k) {
        Polynomial<S> rhs(m.d);
        S invfact = ops::one();
        Polynomial<S> der = m.hop_order(neg, k);
        for (int mm = 0; mm <= k; ++mm) {
          if (mm > 0) {
            der = m.hop_order(neg, k - mm);
            for (int t = 0; t < mm; ++t) der = der.directional_derivative(h.eta);
            invfact = ops::one() / factorial_s<S>(static_cast<unsigned>(mm));
          } else {
            invfact = ops::one();
          }
          rhs += der * invfact;
        }
        Polynomial<S> diff = m.hop_order(h.eta, k) - rhs;
        if (!diff.is_zero_at_scale(coeff_scale)) {
          ok = false;
          std::ostringstream os;
          os << "mismatch at order k=" << k << " for a hop";
          why = os.str();
        }
      }
    }
    rep.record("reversibility", ok, why);
  }

  // the negatively weighted hops at the well bottom must span R^d
  {
    std::vector<std::vector<long>> negs;
    for (const auto& h : m.hops) {
      if (h.orders.empty()) continue;
      const double v = ops::to_double(h.orders[0].coeff(zero));
      if (v < -float_zero_tol() * std::max(1.0, coeff_scale)) negs.push_back(h.eta);
    }
    Mat<Rat> M(static_cast<int>(negs.size()), m.d, Rat(0));
    for (size_t r = 0; r < negs.size(); ++r)
      for (int c = 0; c < m.d; ++c) M.at(static_cast<int>(r), c) = Rat(negs[r][c]);
    rep.record("hop_span", !negs.empty() && M.rank() == m.d,
               "negatively weighted hops at x=0 do not span R^d");
  }

  // kinetic symbol positivity away from xi = 0
  {
    std::vector<std::vector<double>> grid;
    detail::tensor_grid(m.d, 3.14159265358979323846, opts.xi_points_per_dim, grid);
    const std::vector<double> x0(m.d, 0.0);
    bool ok = true;
    std::string why;
    for (const auto& xi : grid) {
      double n2 = 0.0;
      for (double c : xi) n2 += c * c;
      if (n2 < 1e-12) continue;
      const std::complex<double> t0 = symbol_t(m, 0, x0, xi);
      if (std::fabs(t0.imag()) > 1e-9 * std::max(1.0, coeff_scale)) {
        ok = false;
        why = "kinetic symbol has a nonvanishing odd part at x=0";
        break;
      }
      if (t0.real() <= 0.0) {
        ok = false;
        std::ostringstream os;
        os << "t_0(0,xi) <= 0 at a sample xi (value " << t0.real() << ")";
        why = os.str();
        break;
      }
    }
    rep.record("kinetic_positivity", ok, why);
  }

  // potential: nondegenerate zero minimum at the origin, one well, V_0 >= 0
  {
    const Polynomial<S> v0 = m.potential_order(0);
    bool ok = true;
    std::string why;
    const double vscale = std::max(1.0, v0.max_abs_coeff());
    if (!ops::is_zero(v0.coeff(zero), vscale)) {
      ok = false;
      why = "V_0(0) != 0";
    }
    for (int nu = 0; nu < m.d && ok; ++nu) {
      Multi e(m.d, 0);
      e[nu] = 1;
      if (!ops::is_zero(v0.coeff(e), vscale)) {
        ok = false;
        why = "grad V_0(0) != 0";
      }
    }
    if (ok) {
      // Sylvester criterion on the quadratic-form matrix
      Mat<S> A = quadratic_form_matrix(v0);
      for (int k = 1; k <= m.d && ok; ++k) {
        Mat<S> lead(k, k, ops::zero());
        for (int i = 0; i < k; ++i)
          for (int j = 0; j < k; ++j) lead.at(i, j) = A.at(i, j);
        if (!(leading_minor_positive(lead))) {
          ok = false;
          why = "potential Hessian at 0 is not positive definite";
        }
      }
    }
    rep.record("well_nondegenerate", ok, why);

    std::vector<std::vector<double>> grid;
    detail::tensor_grid(m.d, opts.grid_radius, opts.grid_points_per_dim, grid);
    bool nonneg = true, onewell = true;
    for (const auto& x : grid) {
      double n2 = 0.0;
      for (double c : x) n2 += c * c;
      const double v = v0.eval_double(x);
      if (v < -1e-12 * std::max(1.0, vscale)) nonneg = false;
      if (n2 > 1e-12 && v <= 0.0) onewell = false;
    }
    rep.record("potential_nonnegative", nonneg, "V_0 < 0 at a sample point");
    rep.record("single_well", onewell, "V_0 vanishes away from the origin on the sample grid");
  }

  return rep;
}

template <class S>
bool leading_minor_positive(const Mat<S>& a) {
  // determinant sign via elimination; exact in rational mode
  Mat<S> x = a;
  const int n = x.rows();
  S det = scalar_ops<S>::one();
  for (int col = 0; col < n; ++col) {
    int piv = -1;
    for (int i = col; i < n; ++i)
      if (!scalar_ops<S>::is_zero(x.at(i, col), 1.0)) {
        piv = i;
        break;
      }
    if (piv < 0) return false;
    if (piv != col) {
      for (int j = 0; j < n; ++j) std::swap(x.at(col, j), x.at(piv, j));
      det = -det;
    }
    det = det * x.at(col, col);
    for (int i = col + 1; i < n; ++i) {
      const S f = x.at(i, col) / x.at(col, col);
      for (int j = col; j < n; ++j) x.at(i, j) = x.at(i, j) - f * x.at(col, j);
    }
  }
  return scalar_ops<S>::to_double(det) > 0.0;
}

template <class S>
struct NormalForm {
  LatticeModel<S> model;     // transformed model, C stored inside
  Mat<S> C, C_inv;
  std::vector<S> lambda;     // ascending in float mode; coordinate order in exact mode
  std::vector<std::string> notes;
};

// Diagonalize the well: new coordinates x' = C x with C = R B_0^{-1/2} so the
// leading kinetic matrix becomes the identity and V_0' = sum lambda_nu^2
// x_nu^2 + h.o.t.  Exact mode handles diagonal B_0 and diagonal transformed
// quadratic form with rational square roots; anything else needs double mode.
template <class S>
NormalForm<S> normal_form(const LatticeModel<S>& m) {
  using ops = scalar_ops<S>;
  NormalForm<S> nf;
  const Mat<S> B0 = matrix_B0(m);
  const Mat<S> A = quadratic_form_matrix(m.potential_order(0));
  Mat<S> C(m.d, m.d, ops::zero()), Cinv(m.d, m.d, ops::zero());
  std::vector<S> lambda(m.d, ops::zero());
  Mat<S> Lambda(m.d, m.d, ops::zero());

  if constexpr (ops::exact) {
    for (int i = 0; i < m.d; ++i)
      for (int j = 0; j < m.d; ++j)
        if (i != j && !ops::is_zero(B0.at(i, j)))
          throw std::domain_error("normal_form: exact mode requires diagonal B_0; use double mode");
    std::vector<S> s(m.d);
    for (int i = 0; i < m.d; ++i)
      if (!ops::sqrt_exact(B0.at(i, i), s[i]) || ops::is_zero(s[i]))
        throw std::domain_error("normal_form: B_0 diagonal entry is not a positive rational square");
    // A~ = B^{1/2} A B^{1/2} must already be diagonal in exact mode
    for (int i = 0; i < m.d; ++i)
      for (int j = 0; j < m.d; ++j) {
        const S v = s[i] * A.at(i, j) * s[j];
        if (i != j && !ops::is_zero(v))
          throw std::domain_error("normal_form: transformed well couples coordinates; use double mode");
        if (i == j) Lambda.at(i, i) = v;
      }
    for (int i = 0; i < m.d; ++i) {
      C.at(i, i) = ops::one() / s[i];
      Cinv.at(i, i) = s[i];
    }
  } else {
    std::vector<double> beig;
    Mat<double> Q;
    jacobi_eigen(B0, beig, Q);
    for (double b : beig)
      if (b <= 0.0) throw std::domain_error("normal_form: B_0 is not positive definite");
    Mat<double> Bh(m.d, m.d, 0.0), Bmh(m.d, m.d, 0.0);
    for (int i = 0; i < m.d; ++i)
      for (int j = 0; j < m.d; ++j)
        for (int k = 0; k < m.d; ++k) {
          Bh.at(i, j) += Q.at(i, k) * std::sqrt(beig[k]) * Q.at(j, k);
          Bmh.at(i, j) += Q.at(i, k) * (1.0 / std::sqrt(beig[k])) * Q.at(j, k);
        }
    Mat<double> Atil = Bh * A * Bh;
    std::vector<double> aeig;
    Mat<double> V;
    jacobi_eigen(Atil, aeig, V);
    Mat<double> R = V.transpose();
    C = R * Bmh;
    Cinv = Bh * V;
    for (int i = 0; i < m.d; ++i) Lambda.at(i, i) = aeig[i];
  }

  // transformed model: coefficients composed with C^{-1}; C recorded
  std::vector<std::vector<S>> CinvRows(m.d, std::vector<S>(m.d));
  for (int i = 0; i < m.d; ++i)
    for (int j = 0; j < m.d; ++j) CinvRows[i][j] = Cinv.at(i, j);
  LatticeModel<S> t;
  t.d = m.d;
  t.C = C;
  for (const auto& h : m.hops) {
    Hop<S> th;
    th.eta = h.eta;
    for (const auto& p : h.orders) th.orders.push_back(p.compose_linear(CinvRows));
    t.hops.push_back(std::move(th));
  }
  for (const auto& p : m.potential) t.potential.push_back(p.compose_linear(CinvRows));

  // lambda_nu from the transformed potential's x_nu^2 coefficient; the
  // diagonalized quadratic form must agree with diag(lambda^2)
  const Polynomial<S>& v0t = t.potential[0];
  for (int nu = 0; nu < m.d; ++nu) {
    Multi e(m.d, 0);
    e[nu] = 2;
    const S c2 = v0t.coeff(e);
    S l;
    if constexpr (ops::exact) {
      if (!ops::sqrt_exact(c2, l))
        throw std::domain_error("normal_form: transformed well coefficient is not a rational square");
    } else {
      if (!(ops::to_double(c2) > 0.0))
        throw std::domain_error("normal_form: transformed well coefficient not positive");
      l = std::sqrt(ops::to_double(c2));
    }
    lambda[nu] = l;
    const double dev = std::fabs(ops::to_double(Lambda.at(nu, nu)) - ops::to_double(c2));
    if (dev > 1e-9 * std::max(1.0, std::fabs(ops::to_double(c2)))) {
      std::ostringstream os;
      os << "diagonalized quadratic form disagrees with the transformed potential (nu=" << nu
         << ", deviation " << dev << ")";
      throw std::domain_error("normal_form: " + os.str());
    }
  }
  // cross terms of the transformed quadratic part must vanish
  for (int i = 0; i < m.d; ++i)
    for (int j = i + 1; j < m.d; ++j) {
      Multi e(m.d, 0);
      ++e[i];
      ++e[j];
      if (!ops::is_zero(v0t.coeff(e), std::max(1.0, v0t.max_abs_coeff())))
        throw std::domain_error("normal_form: transformed well has residual cross terms");
    }

  nf.model = std::move(t);
  nf.C = C;
  nf.C_inv = Cinv;
  nf.lambda = lambda;
  return nf;
}

// Harmonic level ladder e_alpha = sum_nu lambda_nu (2 alpha_nu + 1) + shift,
// grouped into degenerate clusters (exact equality, or a relative tolerance in
// double mode).
template <class S>
struct HarmonicLevel {
  S E;
  double E_d;
  std::vector<Multi> alphas;  // the degenerate cluster I_E
};

template <class S>
std::vector<HarmonicLevel<S>> harmonic_levels(const std::vector<S>& lambda, const S& shift,
                                              int n_levels, int alpha_degree_cap = 16) {
  using ops = scalar_ops<S>;
  const int d = static_cast<int>(lambda.size());
  std::vector<std::pair<S, Multi>> all;
  std::vector<int> idx(d, 0);
  // enumerate |alpha| <= cap
  std::vector<Multi> alphas;
  Multi cur(d, 0);
  const std::function<void(int, int)> rec = [&](int pos, int budget) {
    if (pos == d) {
      alphas.push_back(cur);
      return;
    }
    for (int e = 0; e <= budget; ++e) {
      cur[pos] = e;
      rec(pos + 1, budget - e);
    }
    cur[pos] = 0;
  };
  rec(0, alpha_degree_cap);
  for (const auto& a : alphas) {
    S e = shift;
    for (int nu = 0; nu < d; ++nu)
      e = e + lambda[nu] * ops::from_long(2 * a[nu] + 1);
    all.emplace_back(e, a);
  }
  std::sort(all.begin(), all.end(), [](const auto& x, const auto& y) {
    const double dx = ops::to_double(x.first), dy = ops::to_double(y.first);
    if (dx != dy) return dx < dy;
    return GradedLex{}(x.second, y.second);
  });
  std::vector<HarmonicLevel<S>> levels;
  for (const auto& [e, a] : all) {
    bool same = false;
    if (!levels.empty()) {
      if constexpr (ops::exact)
        same = (levels.back().E == e);
      else
        same = std::fabs(levels.back().E_d - ops::to_double(e)) <=
               1e-8 * (1.0 + std::fabs(ops::to_double(e)));
    }
    if (same) {
      levels.back().alphas.push_back(a);
    } else {
      if (static_cast<int>(levels.size()) == n_levels) break;
      levels.push_back({e, ops::to_double(e), {a}});
    }
  }
  if (static_cast<int>(levels.size()) > n_levels) levels.resize(n_levels);
  return levels;
}

}  // namespace latwkb
