#pragma once

// Order-by-order solution of the lattice eikonal equation
//
//   sum_eta a'_eta(x) cosh(eta_C . grad phi(x)) + V'_0(x) = 0   (as a Taylor jet)
//
// for a model in normal form, together with the glued phase that extends the
// polynomial jet linearly outside a seam region for use in numeric weights.
//
// The jet is built degree by degree: phi_0 = sum (lambda_nu/2) x_nu^2 kills
// the quadratic part, and each higher homogeneous piece phi_k is fixed by a
// transport equation whose divisor 2(lambda . alpha) is strictly positive.
// The residual is re-checked after every degree, so a wrong sign or divisor
// cannot survive construction.

#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "latwkb/model.hpp"
#include "latwkb/polynomial.hpp"

namespace latwkb {

template <class S>
struct EikonalSolution {
  std::vector<S> lambda;              // harmonic frequencies
  std::vector<Polynomial<S>> pieces;  // phi_k, homogeneous of degree k+2

  int max_k() const { return static_cast<int>(pieces.size()) - 1; }

  Polynomial<S> jet() const {
    Polynomial<S> p(pieces.empty() ? 0 : pieces[0].dim());
    for (const auto& q : pieces) p += q;
    return p;
  }
};

// Taylor jet through degree D of sum_eta a'_eta cosh(eta_C . grad phi) + V'_0.
template <class S>
Polynomial<S> eikonal_residual(const LatticeModel<S>& m, const Polynomial<S>& phi, int D) {
  using ops = scalar_ops<S>;
  Polynomial<S> r(m.d);
  for (const auto& h : m.hops) {
    if (h.orders.empty() || h.orders[0].is_zero()) continue;
    const auto disp = m.hop_displacement(h.eta);
    Polynomial<S> w(m.d);
    for (int nu = 0; nu < m.d; ++nu) w += phi.derivative(nu) * disp[nu];
    w = w.truncated_to_degree(D);
    // cosh(w) = sum_m w^{2m}/(2m)!; grad phi has no constant term, so powers
    // beyond w^D cannot reach degree <= D.
    Polynomial<S> ch = Polynomial<S>::constant(m.d, ops::one());
    Polynomial<S> w2 = (w * w).truncated_to_degree(D);
    Polynomial<S> pw = Polynomial<S>::constant(m.d, ops::one());
    S fact = ops::one();
    for (int mm = 1; 2 * mm <= D; ++mm) {
      pw = (pw * w2).truncated_to_degree(D);
      if (pw.is_zero()) break;
      fact = fact * ops::from_long(2 * mm - 1) * ops::from_long(2 * mm);
      ch += pw * (ops::one() / fact);
    }
    r += (h.orders[0] * ch).truncated_to_degree(D);
  }
  r += m.potential_order(0);
  return r.truncated_to_degree(D);
}

namespace detail {

// Leading kinetic matrix in displacement coordinates:
// -(1/2) sum_eta a'_eta(0) eta_C eta_C^T.  Identity iff the model is in
// normal form.
template <class S>
Mat<S> kinetic_matrix_disp(const LatticeModel<S>& m) {
  using ops = scalar_ops<S>;
  Mat<S> B(m.d, m.d, ops::zero());
  const Multi zero(m.d, 0);
  const S mhalf = ops::ratio(-1, 2);
  for (const auto& h : m.hops) {
    if (h.orders.empty()) continue;
    const S a0 = h.orders[0].coeff(zero);
    if (ops::is_zero(a0)) continue;
    const auto disp = m.hop_displacement(h.eta);
    for (int i = 0; i < m.d; ++i)
      for (int j = 0; j < m.d; ++j) B.at(i, j) = B.at(i, j) + mhalf * a0 * disp[i] * disp[j];
  }
  return B;
}

template <class S>
bool near_identity(const Mat<S>& B) {
  using ops = scalar_ops<S>;
  for (int i = 0; i < B.rows(); ++i)
    for (int j = 0; j < B.cols(); ++j) {
      S want = i == j ? ops::one() : ops::zero();
      S diff = B.at(i, j) - want;
      if constexpr (ops::exact) {
        if (!ops::is_zero(diff)) return false;
      } else {
        if (std::fabs(ops::to_double(diff)) > 1e-9) return false;
      }
    }
  return true;
}

}  // namespace detail

// Frequencies from the quadratic part of the transformed potential, which must
// be diagonal: V'_0 = sum lambda_nu^2 x_nu^2 + h.o.t.
template <class S>
std::vector<S> eikonal_frequencies(const LatticeModel<S>& m) {
  using ops = scalar_ops<S>;
  const Polynomial<S> v0 = m.potential_order(0);
  std::vector<S> lambda(m.d, ops::zero());
  for (int i = 0; i < m.d; ++i)
    for (int j = i; j < m.d; ++j) {
      Multi a(m.d, 0);
      ++a[i];
      ++a[j];
      const S c = v0.coeff(a);
      if (i != j) {
        bool cross_zero;
        if constexpr (ops::exact)
          cross_zero = ops::is_zero(c);
        else
          cross_zero = std::fabs(ops::to_double(c)) <= 1e-12 * (1.0 + v0.max_abs_coeff());
        if (!cross_zero)
          throw std::domain_error("eikonal: quadratic part of the potential is not diagonal");
      } else {
        if (ops::to_double(c) <= 0.0)
          throw std::domain_error("eikonal: potential frequency lambda_" + std::to_string(i) +
                                  "^2 is not positive");
        S root = ops::zero();
        if (!ops::sqrt_exact(c, root)) {
          if constexpr (ops::exact)
            throw std::domain_error(
                "eikonal: lambda_" + std::to_string(i) +
                "^2 has no exact rational square root; use double mode");
        }
        lambda[i] = root;
      }
    }
  return lambda;
}

template <class S>
EikonalSolution<S> solve_eikonal(const LatticeModel<S>& m, int n_phi) {
  using ops = scalar_ops<S>;
  if (n_phi < 0) throw std::invalid_argument("solve_eikonal: n_phi must be >= 0");
  if (!detail::near_identity(detail::kinetic_matrix_disp(m)))
    throw std::domain_error("solve_eikonal: model is not in normal form (kinetic matrix != I)");

  EikonalSolution<S> sol;
  sol.lambda = eikonal_frequencies(m);

  Polynomial<S> phi0(m.d);
  for (int nu = 0; nu < m.d; ++nu) {
    Multi a(m.d, 0);
    a[nu] = 2;
    phi0.add_term(a, sol.lambda[nu] * ops::ratio(1, 2));
  }
  sol.pieces.push_back(phi0);

  Polynomial<S> jet = phi0;
  for (int k = 1; k <= n_phi; ++k) {
    const int deg = k + 2;
    const Polynomial<S> v = eikonal_residual(m, jet, deg).homogeneous_part(deg);
    Polynomial<S> piece(m.d);
    for (const auto& [a, c] : v.terms()) {
      S div = ops::zero();
      for (int nu = 0; nu < m.d; ++nu)
        div = div + sol.lambda[nu] * ops::from_long(a[nu]);
      div = div * ops::from_long(2);
      piece.add_term(a, c / div);
    }
    sol.pieces.push_back(piece);
    jet += piece;

    const Polynomial<S> check = eikonal_residual(m, jet, deg);
    bool clean;
    if constexpr (ops::exact)
      clean = check.is_zero();
    else
      clean = check.max_abs_coeff() <= 1e-9 * (1.0 + m.potential_order(0).max_abs_coeff());
    if (!clean)
      throw std::logic_error("solve_eikonal: residual survives at degree " + std::to_string(deg));
  }
  return sol;
}

// Standard smoothed step built from exp(-1/t): 0 for t <= 0, 1 for t >= 1.
inline double smooth_step(double t) {
  auto f = [](double s) { return s <= 0.0 ? 0.0 : std::exp(-1.0 / s); };
  const double a = f(t);
  const double b = f(1.0 - t);
  return a / (a + b);
}

// Phase glued from the polynomial jet (inside r_in) to b|x| (outside r_out).
template <class S>
struct GluedPhase {
  EikonalSolution<S> sol;
  Polynomial<S> jet;
  double r_in = 0.0;
  double r_out = 0.0;
  double b = 0.0;
  bool monotone_on_grid = true;
  std::vector<std::string> notes;

  double operator()(const std::vector<double>& x) const {
    double rho2 = 0.0;
    for (double xi : x) rho2 += xi * xi;
    const double rho = std::sqrt(rho2);
    const double chi = smooth_step((r_out - rho) / (r_out - r_in));
    return chi * jet.eval_double(x) + (1.0 - chi) * b * rho;
  }
};

namespace detail {

// Deterministic unit directions: normalized cube-surface grid points.
inline std::vector<std::vector<double>> unit_directions(int d, int per_dim) {
  std::vector<std::vector<double>> grid;
  tensor_grid(d, 1.0, per_dim, grid);
  std::vector<std::vector<double>> dirs;
  for (auto& x : grid) {
    double mx = 0.0, nrm2 = 0.0;
    for (double xi : x) {
      mx = std::max(mx, std::fabs(xi));
      nrm2 += xi * xi;
    }
    if (mx < 1.0 - 1e-12) continue;  // interior point
    const double nrm = std::sqrt(nrm2);
    for (double& xi : x) xi /= nrm;
    dirs.push_back(x);
  }
  return dirs;
}

}  // namespace detail

template <class S>
GluedPhase<S> glue_phase(const EikonalSolution<S>& sol, double r_in, double r_out,
                         std::optional<double> b_opt = std::nullopt, int dirs_per_dim = 7,
                         int radial_samples = 24) {
  if (!(0.0 < r_in && r_in < r_out)) throw std::invalid_argument("glue_phase: need 0 < r_in < r_out");
  GluedPhase<S> g;
  g.sol = sol;
  g.jet = sol.jet();
  g.r_in = r_in;
  g.r_out = r_out;

  const int d = g.jet.dim();
  const auto dirs = detail::unit_directions(d, dirs_per_dim);

  if (b_opt) {
    g.b = *b_opt;
  } else {
    // 0.9 x the smallest radial slope of the jet on the sphere |x| = r_out.
    double mn = std::numeric_limits<double>::infinity();
    for (const auto& u : dirs) {
      std::vector<double> x(u);
      for (double& xi : x) xi *= r_out;
      mn = std::min(mn, g.jet.eval_double(x) / r_out);
    }
    g.b = 0.9 * mn;
  }
  if (g.b <= 0.0) throw std::domain_error("glue_phase: slope b must be positive");

  // Positivity is required; monotone growth along rays is recorded only.
  for (const auto& u : dirs) {
    double prev = 0.0;
    for (int i = 1; i <= radial_samples; ++i) {
      const double r = 1.5 * r_out * i / radial_samples;
      std::vector<double> x(u);
      for (double& xi : x) xi *= r;
      const double val = g(x);
      if (val <= 0.0)
        throw std::domain_error("glue_phase: glued phase is not positive at radius " +
                                std::to_string(r));
      if (val < prev && g.monotone_on_grid) {
        g.monotone_on_grid = false;
        g.notes.push_back("phase dips along a ray near radius " + std::to_string(r));
      }
      prev = val;
    }
  }
  return g;
}

}  // namespace latwkb
