#pragma once

// Spectral series on a degenerate harmonic level: weight polynomials from the
// eikonal corrections, the K inner product they induce, the Riesz projection
// onto the level computed by exact residue calculus on resolvent chains, the
// projected pencil F / F^G, and order-by-order eigenvalue series.
//
// Everything runs over Puiseux series in sqrt(eps).  No numeric contour
// integrals appear anywhere: each resolvent chain contributes a rational
// function of z whose residue at the level energy is read off from a
// truncated Taylor expansion of its non-singular part.

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "latwkb/conjugation.hpp"
#include "latwkb/eikonal.hpp"
#include "latwkb/hermite.hpp"
#include "latwkb/model.hpp"
#include "latwkb/series.hpp"
#include "latwkb/smallmat.hpp"

namespace latwkb {

// ---------------------------------------------------------------------------
// weights

template <class S>
struct WeightExpansion {
  PolySeries<S> omega;  // omega at order2 j2 multiplies eps^{j2/2}; omega_0 = 1

  Polynomial<S> omega_l(int j2) const { return omega.coeff(j2); }
  long trunc2() const { return omega.trunc2(); }
};

// exp(-2 sum_{k>=1} eps^{k/2} phi-correction_k(y)) through order2 n2, with
// structure checks: each nonzero coefficient at order2 j2 > 0 has pure parity
// (-1)^{j2} and homogeneous degrees between j2+2 and 3*j2.
template <class S>
WeightExpansion<S> weight_expansion(const EikonalSolution<S>& sol, int n2) {
  using ops = scalar_ops<S>;
  if (sol.max_k() < n2)
    throw std::invalid_argument("weight_expansion: eikonal corrections run through order2 " +
                                std::to_string(sol.max_k()) + ", need " + std::to_string(n2));
  const int d = sol.pieces.empty() ? 0 : sol.pieces[0].dim();
  PolySeries<S> mu(Polynomial<S>(d), n2);
  for (int k = 1; k <= std::min(sol.max_k(), n2); ++k) {
    if (sol.pieces[static_cast<size_t>(k)].is_zero()) continue;
    mu.add_to_coeff(k, sol.pieces[static_cast<size_t>(k)] * ops::from_long(-2));
  }
  WeightExpansion<S> w{series_exp(mu, static_cast<long>(n2))};

  const double wscale = w.omega.max_abs();
  for (const auto& [j2, om] : w.omega.coeffs()) {
    if (j2 == 0) continue;
    Polynomial<S> oc = om;
    if constexpr (!ops::exact) oc.prune(wscale);
    if (oc.is_zero()) continue;
    const Parity want = j2 % 2 == 0 ? Parity::Even : Parity::Odd;
    if (oc.parity() != want)
      throw std::logic_error("weight_expansion: weight at order2 " + std::to_string(j2) +
                             " is not pure parity");
    for (const auto& [a, c] : oc.terms()) {
      const int deg = multi_degree(a);
      if (deg < j2 + 2 || deg > 3 * j2)
        throw std::logic_error("weight_expansion: weight degree outside window at order2 " +
                               std::to_string(j2));
    }
  }
  return w;
}

// ---------------------------------------------------------------------------
// K inner product

template <class S>
Series<S> inner_k(const PolySeries<S>& p, const PolySeries<S>& q, const WeightExpansion<S>& w,
                  const HermiteBasis<S>& basis) {
  long t2 = std::min(sat_add2(p.trunc2(), q.floor2()), sat_add2(q.trunc2(), p.floor2()));
  t2 = std::min(t2, sat_add2(w.trunc2(), sat_add2(p.floor2(), q.floor2())));
  if (t2 >= kInfOrder2) {
    if (p.is_zero() || q.is_zero()) return Series<S>(scalar_ops<S>::zero(), t2);
    throw std::invalid_argument("inner_k: nothing bounds the output order; truncate an input");
  }
  Series<S> r(scalar_ops<S>::zero(), t2);
  for (const auto& [i2, pi] : p.coeffs())
    for (const auto& [j2, qj] : q.coeffs()) {
      if (i2 + j2 > t2) continue;
      const Polynomial<S> pq = pi * qj;
      for (const auto& [l2, om] : w.omega.coeffs()) {
        const long m2 = static_cast<long>(i2) + j2 + l2;
        if (m2 > t2) continue;
        const S val = basis.pair(pq, om);
        if (!scalar_ops<S>::is_zero(val, 1.0 + pq.max_abs_coeff() * om.max_abs_coeff()))
          r.add_to_coeff(static_cast<int>(m2), val);
      }
    }
  return r;
}

// ---------------------------------------------------------------------------
// spectral setup: conjugated expansion + basis + derived level data

template <class S>
class SpectralSetup {
 public:
  SpectralSetup(const ConjugatedExpansion<S>& exp, HermiteBasis<S> basis)
      : exp_(&exp), basis_(std::move(basis)) {
    if (basis_.dim() != exp.d) throw std::invalid_argument("SpectralSetup: dimension mismatch");
    // recover the constant energy shift from the ground column of the
    // harmonic part: applied to 1 it returns (sum_nu lambda_nu + shift) * 1
    const Multi zero(static_cast<size_t>(exp.d), 0);
    shift_ = exp.column(0, zero).coeff(zero);
    for (const S& l : basis_.lambda()) shift_ = shift_ - l;
  }

  const ConjugatedExpansion<S>& expansion() const { return *exp_; }
  const HermiteBasis<S>& basis() const { return basis_; }
  const S& shift() const { return shift_; }

  S energy(const Multi& alpha) const { return oscillator_energy(basis_.lambda(), alpha, shift_); }

  bool at_level(const S& e, const S& E) const {
    using ops = scalar_ops<S>;
    if constexpr (ops::exact) return ops::is_zero(e - E);
    return std::fabs(ops::to_double(e - E)) <= 1e-8 * (1.0 + std::fabs(ops::to_double(E)));
  }

  // Hermite matrix elements of the order-k2 operator applied to h_beta, cached.
  const std::vector<std::pair<Multi, S>>& g_elements(int k2, const Multi& beta) const {
    auto& per_order = cache_[k2];
    auto it = per_order.find(beta);
    if (it != per_order.end()) return it->second;
    std::vector<std::pair<Multi, S>> elems;
    const Polynomial<S> img = exp_->apply(k2, basis_.h(beta));
    for (auto& [gamma, c] : basis_.to_hermite(img)) elems.emplace_back(gamma, c);
    return per_order.emplace(beta, std::move(elems)).first->second;
  }

 private:
  const ConjugatedExpansion<S>* exp_;
  HermiteBasis<S> basis_;
  S shift_;
  mutable std::map<int, std::map<Multi, std::vector<std::pair<Multi, S>>, GradedLex>> cache_;
};

// ---------------------------------------------------------------------------
// Riesz projection

// Projection of h_alpha onto the spectral cluster at E, through order2 n2, by
// depth-first expansion of the resolvent chains
//   (G0 - z + W)^{-1} = sum_m (-1)^m R0 (W R0)^m,  W = sum_j eps^{j/2} G_j.
// Each chain node contributes a pole factor; the walk keeps the running
// Taylor series in w = z - E of the factors away from E, and a chain with p
// poles at E closes to -(-1)^p T_{p-1}.  Needs the expansion's polynomial
// window to cover degrees up to |alpha| + n2.
template <class S>
PolySeries<S> riesz_project(const SpectralSetup<S>& setup, const S& E, const Multi& alpha,
                            int n2) {
  using ops = scalar_ops<S>;
  if (setup.expansion().n2 < n2)
    throw std::invalid_argument("riesz_project: conjugated expansion order too small");
  const int d = setup.basis().dim();
  PolySeries<S> result(Polynomial<S>(d), n2);

  struct Node {
    Multi gamma;
    int p = 0;
    std::vector<S> T;  // Taylor coefficients in w of the non-E pole factors
    S amp = scalar_ops<S>::one();
  };
  const int Lw = n2 + 1;

  auto absorb = [&](Node& nd) {
    const S e = setup.energy(nd.gamma);
    if (setup.at_level(e, E)) {
      ++nd.p;
      return;
    }
    // multiply T by (delta - w)^{-1} = sum_m w^m / delta^{m+1}
    const S delta = e - E;
    std::vector<S> geom(static_cast<size_t>(Lw), ops::zero());
    S dpow = ops::one() / delta;
    for (int m = 0; m < Lw; ++m) {
      geom[static_cast<size_t>(m)] = dpow;
      dpow = dpow / delta;
    }
    std::vector<S> nt(static_cast<size_t>(Lw), ops::zero());
    for (int a = 0; a < Lw; ++a)
      for (int b = 0; a + b < Lw; ++b)
        nt[static_cast<size_t>(a + b)] =
            nt[static_cast<size_t>(a + b)] + nd.T[static_cast<size_t>(a)] * geom[static_cast<size_t>(b)];
    nd.T = std::move(nt);
  };

  std::function<void(const Node&, int, int)> walk = [&](const Node& nd, int used2, int sign) {
    if (nd.p > 0) {
      S val = nd.T[static_cast<size_t>(nd.p - 1)];
      if (nd.p % 2 == 0) val = ops::zero() - val;
      val = val * nd.amp;
      if (sign < 0) val = ops::zero() - val;
      result.add_to_coeff(used2, setup.basis().h(nd.gamma) * val);
    }
    for (int j2 = 1; used2 + j2 <= n2; ++j2) {
      for (const auto& [gamma, c] : setup.g_elements(j2, nd.gamma)) {
        Node next;
        next.gamma = gamma;
        next.p = nd.p;
        next.T = nd.T;
        next.amp = nd.amp * c;
        absorb(next);
        walk(next, used2 + j2, -sign);
      }
    }
  };

  Node start;
  start.gamma = alpha;
  start.T.assign(static_cast<size_t>(Lw), ops::zero());
  start.T[0] = ops::one();
  absorb(start);
  walk(start, 0, +1);
  return result;
}

// Projection applied to a whole series of polynomials.
template <class S>
PolySeries<S> project_series(const SpectralSetup<S>& setup, const S& E, const PolySeries<S>& p,
                             int n2) {
  const int d = setup.basis().dim();
  const long t2 = std::min<long>(p.trunc2(), n2);
  PolySeries<S> r(Polynomial<S>(d), t2);
  for (const auto& [j2, pj] : p.coeffs()) {
    if (j2 > t2) continue;
    for (const auto& [beta, c] : setup.basis().to_hermite(pj)) {
      const PolySeries<S> pi = riesz_project(setup, E, beta, static_cast<int>(t2 - j2));
      for (const auto& [o2, poly] : pi.coeffs()) r.add_to_coeff(o2 + j2, poly * c);
    }
  }
  return r;
}

// The conjugated operator applied order-distributed to a series of polynomials.
template <class S>
PolySeries<S> apply_g_series(const ConjugatedExpansion<S>& e, const PolySeries<S>& p) {
  const long t2 = std::min(p.trunc2(), sat_add2(static_cast<long>(e.n2), p.floor2()));
  PolySeries<S> r(Polynomial<S>(e.d), t2);
  for (const auto& [j2, pj] : p.coeffs())
    for (int k2 = 0; k2 <= e.n2; ++k2) {
      if (j2 + k2 > t2) continue;
      Polynomial<S> img = e.apply(k2, pj);
      if (!img.is_zero()) r.add_to_coeff(j2 + k2, img);
    }
  return r;
}

// ---------------------------------------------------------------------------
// projector checks

struct ProjectorReport {
  bool idempotent = true;
  bool commutes = true;
  bool symmetric = true;
  bool rank_ok = true;
  std::vector<std::string> messages;
  bool ok() const { return idempotent && commutes && symmetric && rank_ok; }
};

namespace detail {

template <class S>
double poly_series_scale(const PolySeries<S>& p) {
  double s = 1.0;
  for (const auto& [o2, c] : p.coeffs()) s = std::max(s, c.max_abs_coeff());
  return s;
}

template <class S>
bool poly_series_zero(const PolySeries<S>& p, double scale) {
  for (const auto& [o2, c] : p.coeffs())
    if (!c.is_zero_at_scale(scale)) return false;
  return true;
}

}  // namespace detail

template <class S>
ProjectorReport projector_checks(const SpectralSetup<S>& setup, const HarmonicLevel<S>& level,
                                 const WeightExpansion<S>& w, int n2,
                                 const std::vector<Multi>& extra_alphas = {}) {
  using ops = scalar_ops<S>;
  ProjectorReport rep;
  const int d = setup.basis().dim();

  std::vector<Multi> test = level.alphas;
  for (const auto& a : extra_alphas) test.push_back(a);

  for (const auto& alpha : test) {
    const PolySeries<S> f = riesz_project(setup, level.E, alpha, n2);
    const PolySeries<S> ff = project_series(setup, level.E, f, n2);
    PolySeries<S> diff = ff - f;
    diff.truncate_to(std::min(f.trunc2(), ff.trunc2()));
    if (!detail::poly_series_zero(diff, detail::poly_series_scale(f))) {
      rep.idempotent = false;
      rep.messages.push_back("projector not idempotent on input of degree " +
                             std::to_string(multi_degree(alpha)));
    }

    PolySeries<S> gf = apply_g_series(setup.expansion(), f);
    PolySeries<S> fg = project_series(
        setup, level.E,
        apply_g_series(setup.expansion(), PolySeries<S>::from_coeff(0, setup.basis().h(alpha))),
        n2);
    PolySeries<S> comm = gf - fg;
    comm.truncate_to(std::min(gf.trunc2(), fg.trunc2()));
    if (!detail::poly_series_zero(comm, detail::poly_series_scale(gf))) {
      rep.commutes = false;
      rep.messages.push_back("projector does not commute with the operator on degree " +
                             std::to_string(multi_degree(alpha)));
    }
  }

  // symmetry in the K pairing on a small deterministic probe family
  std::vector<Polynomial<S>> probes;
  probes.push_back(Polynomial<S>::constant(d, ops::one()));
  probes.push_back(Polynomial<S>::variable(d, 0));
  {
    Multi a(static_cast<size_t>(d), 0);
    a[0] = 2;
    probes.push_back(Polynomial<S>::monomial(d, a, ops::one()));
    Polynomial<S> mix = Polynomial<S>::variable(d, d - 1);
    mix.add_term(Multi(static_cast<size_t>(d), 0), ops::ratio(1, 3));
    probes.push_back(mix);
  }
  for (size_t i = 0; i < probes.size(); ++i)
    for (size_t j = i + 1; j < probes.size(); ++j) {
      const PolySeries<S> p = PolySeries<S>::from_coeff(0, probes[i], n2);
      const PolySeries<S> q = PolySeries<S>::from_coeff(0, probes[j], n2);
      const Series<S> lhs = inner_k(p, project_series(setup, level.E, q, n2), w, setup.basis());
      const Series<S> rhs = inner_k(project_series(setup, level.E, p, n2), q, w, setup.basis());
      const Series<S> diff = lhs - rhs;
      const double scale = std::max({1.0, lhs.max_abs(), rhs.max_abs()});
      bool zero = true;
      for (const auto& [o2, v] : diff.coeffs())
        if (!ops::is_zero(v, scale)) zero = false;
      if (!zero) {
        rep.symmetric = false;
        rep.messages.push_back("projector not symmetric for the K pairing on probes " +
                               std::to_string(i) + "," + std::to_string(j));
      }
    }

  // rank: the order-0 part of each projected level vector must be the level
  // eigenfunction itself, so the projected family stays independent
  for (const auto& alpha : level.alphas) {
    const PolySeries<S> f = riesz_project(setup, level.E, alpha, 0);
    Polynomial<S> lead = f.coeff(0) - setup.basis().h(alpha);
    if constexpr (!ops::exact) lead.prune(detail::poly_series_scale(f));
    if (!lead.is_zero()) {
      rep.rank_ok = false;
      rep.messages.push_back("projected level vector lost its leading term");
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// pencil

template <class S>
struct PencilSeries {
  HarmonicLevel<S> level;
  std::vector<PolySeries<S>> f;  // projected level basis
  Mat<Series<S>> F, FG;
  std::vector<S> gram0;  // <h_i, h_i> at order 0
};

template <class S>
PencilSeries<S> build_pencil(const SpectralSetup<S>& setup, const HarmonicLevel<S>& level,
                             const WeightExpansion<S>& w, int n2) {
  using ops = scalar_ops<S>;
  if (setup.expansion().n2 < n2)
    throw std::invalid_argument("build_pencil: conjugated expansion order too small");
  if (w.trunc2() < n2) throw std::invalid_argument("build_pencil: weight expansion order too small");
  const int m = static_cast<int>(level.alphas.size());
  PencilSeries<S> p;
  p.level = level;
  for (const auto& alpha : level.alphas) {
    p.f.push_back(riesz_project(setup, level.E, alpha, n2));
    p.gram0.push_back(setup.basis().g(alpha));
  }
  const Series<S> zs(ops::zero(), static_cast<long>(n2));
  p.F = Mat<Series<S>>(m, m, zs);
  p.FG = Mat<Series<S>>(m, m, zs);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) {
      Series<S> fij =
          inner_k(p.f[static_cast<size_t>(i)], p.f[static_cast<size_t>(j)], w, setup.basis());
      fij.truncate_to(n2);
      Series<S> gij = inner_k(p.f[static_cast<size_t>(i)],
                              apply_g_series(setup.expansion(), p.f[static_cast<size_t>(j)]), w,
                              setup.basis());
      gij.truncate_to(n2);
      p.F.at(i, j) = std::move(fij);
      p.FG.at(i, j) = std::move(gij);
    }
  double fscale = 1.0, gscale = 1.0;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) {
      fscale = std::max(fscale, p.F.at(i, j).max_abs());
      gscale = std::max(gscale, p.FG.at(i, j).max_abs());
    }
  for (int i = 0; i < m; ++i)
    for (int j = i + 1; j < m; ++j) {
      const Series<S> df = p.F.at(i, j) - p.F.at(j, i);
      const Series<S> dg = p.FG.at(i, j) - p.FG.at(j, i);
      for (const auto& [o2, v] : df.coeffs())
        if (!ops::is_zero(v, fscale))
          throw std::logic_error("build_pencil: Gram matrix not symmetric at order2 " +
                                 std::to_string(o2));
      for (const auto& [o2, v] : dg.coeffs())
        if (!ops::is_zero(v, gscale))
          throw std::logic_error("build_pencil: operator matrix not symmetric at order2 " +
                                 std::to_string(o2));
    }
  return p;
}

// ---------------------------------------------------------------------------
// eigenvalue series of the pencil

template <class S>
struct PencilBranch {
  bool exact = scalar_ops<S>::exact;  // false: value/vec empty, see value_f/vec_f
  Series<S> value;
  std::vector<Series<S>> vec;  // coordinates in the projected level basis
  Series<double> value_f;
  std::vector<Series<double>> vec_f;
  bool fully_resolved = true;
  int multiplicity = 1;
  std::vector<std::string> notes;
};

namespace detail {

template <class T>
Series<double> to_double_series(const Series<T>& s) {
  Series<double> r(0.0, s.trunc2());
  for (const auto& [o2, v] : s.coeffs()) r.set_coeff(o2, scalar_ops<T>::to_double(v));
  return r;
}

template <class T>
Mat<Series<T>> mat_truncate(Mat<Series<T>> m, long t2) {
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) m.at(i, j).truncate_to(t2);
  return m;
}

template <class T>
long mat_floor2(const Mat<Series<T>>& m) {
  long f = kInfOrder2;
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) f = std::min(f, m.at(i, j).floor2());
  return f;
}

template <class T>
Mat<Series<T>> mat_identity_series(int n, long t2) {
  using ops = scalar_ops<T>;
  Mat<Series<T>> r(n, n, Series<T>(ops::zero(), t2));
  for (int i = 0; i < n; ++i) r.at(i, i) = Series<T>::from_coeff(0, ops::one(), t2);
  return r;
}

// Inverse of a matrix of series with invertible order-0 part, via the Neumann
// series of the floor >= 1/2 remainder.
template <class T>
Mat<Series<T>> mat_series_inverse(const Mat<Series<T>>& M, long t2) {
  using ops = scalar_ops<T>;
  const int n = M.rows();
  Mat<T> M0(n, n, ops::zero());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) M0.at(i, j) = M.at(i, j).coeff(0);
  const Mat<T> M0inv = M0.inverse();
  Mat<Series<T>> M0invS(n, n, Series<T>(ops::zero(), t2));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) M0invS.at(i, j) = Series<T>::from_coeff(0, M0inv.at(i, j), t2);
  Mat<Series<T>> Y = mat_truncate(M0invS * M, t2);
  for (int i = 0; i < n; ++i) Y.at(i, i) = Y.at(i, i) - Series<T>::from_coeff(0, ops::one());
  const long yf = mat_floor2(Y);
  if (yf < 1) throw std::logic_error("mat_series_inverse: remainder does not vanish at order 0");
  Mat<Series<T>> acc = mat_identity_series<T>(n, t2);
  Mat<Series<T>> pw = mat_identity_series<T>(n, t2);
  for (long k = 1; yf < kInfOrder2 && k * yf <= t2; ++k) {
    pw = mat_truncate(pw * Y, t2);
    if (k % 2 == 1)
      acc = acc - pw;
    else
      acc = acc + pw;
  }
  return mat_truncate(acc * M0invS, t2);
}

// Eigenvalues of a small matrix known to have real spectrum.  The exact
// instantiation succeeds only when the characteristic polynomial splits over
// the rationals (closed form for 2x2, bounded candidate search above that);
// the double instantiation uses the QR solver and checks realness.
template <class T>
bool small_eigenvalues(const Mat<T>& A, std::vector<T>& out) {
  using ops = scalar_ops<T>;
  const int n = A.rows();
  out.clear();
  if (n == 1) {
    out.push_back(A.at(0, 0));
    return true;
  }
  if constexpr (!ops::exact) {
    Eigen::MatrixXd M(n, n);
    double scale = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        M(i, j) = A.at(i, j);
        scale = std::max(scale, std::fabs(M(i, j)));
      }
    Eigen::EigenSolver<Eigen::MatrixXd> es(M);
    if (es.info() != Eigen::Success) return false;
    std::vector<double> vals;
    for (int i = 0; i < n; ++i) {
      if (std::fabs(es.eigenvalues()[i].imag()) > 1e-7 * (1.0 + scale)) return false;
      vals.push_back(es.eigenvalues()[i].real());
    }
    std::sort(vals.begin(), vals.end());
    out.assign(vals.begin(), vals.end());
    return true;
  } else {
    if (n == 2) {
      const T tr = A.at(0, 0) + A.at(1, 1);
      const T det = A.at(0, 0) * A.at(1, 1) - A.at(0, 1) * A.at(1, 0);
      const T disc = tr * tr - ops::from_long(4) * det;
      T root = ops::zero();
      if (!ops::sqrt_exact(disc, root)) return false;
      const T half = ops::ratio(1, 2);
      out.push_back((tr - root) * half);
      out.push_back((tr + root) * half);
      return true;
    }
    // characteristic polynomial by the trace recursion, then deflation over a
    // bounded set of rational candidates
    std::vector<T> poly(static_cast<size_t>(n) + 1, ops::zero());
    poly[0] = ops::one();
    Mat<T> Mk = A;
    const Mat<T> I = Mat<T>::identity(n, ops::one(), ops::zero());
    for (int k = 1; k <= n; ++k) {
      T tr = ops::zero();
      for (int i = 0; i < n; ++i) tr = tr + Mk.at(i, i);
      poly[static_cast<size_t>(k)] = ops::zero() - tr * ops::ratio(1, k);
      if (k < n) Mk = A * (Mk + poly[static_cast<size_t>(k)] * I);
    }
    for (int found = 0; found < n; ++found) {
      const int deg = n - found;
      const T constant = poly[static_cast<size_t>(deg)];
      if (ops::is_zero(constant)) {
        out.push_back(ops::zero());
        poly.resize(static_cast<size_t>(deg));
        continue;
      }
      std::vector<T> cands;
      for (int i = 0; i < n; ++i) cands.push_back(A.at(i, i));
      for (long k = 1; k <= 24; ++k) {
        cands.push_back(constant / ops::from_long(k));
        cands.push_back(ops::zero() - constant / ops::from_long(k));
        cands.push_back(constant * ops::from_long(k));
        cands.push_back(ops::zero() - constant * ops::from_long(k));
        cands.push_back(ops::from_long(k));
        cands.push_back(ops::from_long(-k));
        cands.push_back(ops::ratio(1, k));
        cands.push_back(ops::ratio(-1, k));
      }
      bool hit = false;
      for (const T& t : cands) {
        T v = poly[0];
        for (int i = 1; i <= deg; ++i) v = v * t + poly[static_cast<size_t>(i)];
        if (!ops::is_zero(v)) continue;
        out.push_back(t);
        std::vector<T> np(static_cast<size_t>(deg), ops::zero());
        np[0] = poly[0];
        for (int i = 1; i < deg; ++i)
          np[static_cast<size_t>(i)] =
              poly[static_cast<size_t>(i)] + np[static_cast<size_t>(i - 1)] * t;
        poly = std::move(np);
        hit = true;
        break;
      }
      if (!hit) return false;
    }
    return true;
  }
}

// Series dropped by r2 orders, discarding anything below the split order
// (exactly zero in exact mode, sub-tolerance residue in double mode).
template <class T>
Series<T> drop_orders(const Series<T>& s, long r2, long u2) {
  Series<T> r(scalar_ops<T>::zero(), u2);
  for (const auto& [o2, v] : s.coeffs()) {
    if (o2 < r2 || o2 - r2 > u2) continue;
    r.set_coeff(static_cast<int>(o2 - r2), v);
  }
  return r;
}

template <class T, class S>
void eig_recurse(const Mat<Series<T>>& V, long t2, std::vector<PencilBranch<S>>& out);

// Wrap one level of recursion output: the value gains the peeled scalar s and
// the order shift r2; the vector passes through the column map TmTrans from
// the block starting at `offset`.
template <class T, class S>
void compose_branch(PencilBranch<S>& b, const PencilBranch<S>& bb, const Series<T>& s, long r2,
                    long t2, const Mat<Series<T>>& TmTrans, int offset, int mb) {
  const int m = TmTrans.rows();
  const long u2 = t2 - r2;
  b.fully_resolved = bb.fully_resolved;
  b.multiplicity = bb.multiplicity;
  b.notes = bb.notes;
  b.exact = bb.exact;
  if constexpr (std::is_same_v<T, S>) {
    if (bb.exact) {
      b.value = s + bb.value.shifted(static_cast<int>(r2));
      b.value.truncate_to(t2);
      std::vector<Series<T>> emb(static_cast<size_t>(m), Series<T>(scalar_ops<T>::zero(), u2));
      for (int i = 0; i < mb; ++i)
        emb[static_cast<size_t>(offset + i)] = bb.vec[static_cast<size_t>(i)];
      b.vec.assign(static_cast<size_t>(m), Series<T>(scalar_ops<T>::zero(), u2));
      for (int i = 0; i < m; ++i) {
        Series<T> acc(scalar_ops<T>::zero(), u2);
        for (int j = 0; j < m; ++j) acc = acc + TmTrans.at(i, j) * emb[static_cast<size_t>(j)];
        b.vec[static_cast<size_t>(i)] = acc;
      }
      return;
    }
  }
  // child resolved in double: push the parent data down to double too
  b.exact = false;
  const Series<double> sd = to_double_series(s);
  b.value_f = sd + bb.value_f.shifted(static_cast<int>(r2));
  b.value_f.truncate_to(t2);
  std::vector<Series<double>> emb(static_cast<size_t>(m), Series<double>(0.0, u2));
  for (int i = 0; i < mb; ++i) emb[static_cast<size_t>(offset + i)] = bb.vec_f[static_cast<size_t>(i)];
  b.vec_f.assign(static_cast<size_t>(m), Series<double>(0.0, u2));
  for (int i = 0; i < m; ++i) {
    Series<double> acc(0.0, u2);
    for (int j = 0; j < m; ++j)
      acc = acc + to_double_series(TmTrans.at(i, j)) * emb[static_cast<size_t>(j)];
    b.vec_f[static_cast<size_t>(i)] = acc;
  }
}

// Scalar-peel + leading-split recursion on a matrix series V.  T is the
// working scalar (S, or double after an exact-mode fallback); branches are
// reported in the caller's scalar S.
template <class T, class S>
void eig_recurse(const Mat<Series<T>>& V, long t2, std::vector<PencilBranch<S>>& out) {
  using ops = scalar_ops<T>;
  const int m = V.rows();

  auto unit_vecs = [&](PencilBranch<S>& b, int i, long trunc) {
    if constexpr (std::is_same_v<T, S>) {
      if (b.exact) {
        b.vec.assign(static_cast<size_t>(m), Series<T>(ops::zero(), trunc));
        b.vec[static_cast<size_t>(i)] = Series<T>::from_coeff(0, ops::one(), trunc);
        return;
      }
    }
    b.vec_f.assign(static_cast<size_t>(m), Series<double>(0.0, trunc));
    b.vec_f[static_cast<size_t>(i)] = Series<double>::from_coeff(0, 1.0, trunc);
  };
  auto set_value = [&](PencilBranch<S>& b, const Series<T>& v) {
    if constexpr (std::is_same_v<T, S>) {
      if (b.exact) {
        b.value = v;
        return;
      }
    }
    b.value_f = to_double_series(v);
  };

  if (m == 1) {
    PencilBranch<S> b;
    b.exact = std::is_same_v<T, S>;
    Series<T> v = V.at(0, 0);
    v.truncate_to(t2);
    set_value(b, v);
    unit_vecs(b, 0, t2);
    out.push_back(std::move(b));
    return;
  }

  double scale = 1.0;
  if constexpr (!ops::exact) {
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j)
        for (const auto& [o2, v] : V.at(i, j).coeffs()) scale = std::max(scale, std::fabs(v));
  }

  // peel scalar orders until the first order with a genuine matrix part
  Series<T> s(ops::zero(), t2);
  long r2 = -1;
  for (long o2 = 0; o2 <= t2; ++o2) {
    Mat<T> A(m, m, ops::zero());
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) A.at(i, j) = V.at(i, j).coeff(static_cast<int>(o2));
    T mean = ops::zero();
    for (int i = 0; i < m; ++i) mean = mean + A.at(i, i);
    mean = mean * ops::ratio(1, m);
    bool scalar = true;
    for (int i = 0; i < m && scalar; ++i)
      for (int j = 0; j < m && scalar; ++j) {
        const T want = i == j ? mean : ops::zero();
        if (!ops::is_zero(A.at(i, j) - want, scale)) scalar = false;
      }
    if (!scalar) {
      r2 = o2;
      break;
    }
    if (!ops::is_zero(mean, scale)) s.add_to_coeff(static_cast<int>(o2), mean);
  }

  if (r2 < 0) {
    for (int i = 0; i < m; ++i) {
      PencilBranch<S> b;
      b.exact = std::is_same_v<T, S>;
      set_value(b, s);
      unit_vecs(b, i, t2);
      b.fully_resolved = false;
      b.multiplicity = m;
      b.notes.push_back("cluster does not split through the requested order");
      out.push_back(std::move(b));
    }
    return;
  }

  const long u2 = t2 - r2;
  Mat<Series<T>> Y(m, m, Series<T>(ops::zero(), u2));
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) {
      Series<T> e = V.at(i, j);
      if (i == j) e = e - s;
      Y.at(i, j) = drop_orders(e, r2, u2);
    }
  Mat<T> A0(m, m, ops::zero());
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) A0.at(i, j) = Y.at(i, j).coeff(0);

  std::vector<T> mu;
  const bool solved = small_eigenvalues(A0, mu);
  if (!solved) {
    if constexpr (std::is_same_v<T, Rat>) {
      // the leading split is irrational: continue this block in floating point
      Mat<Series<double>> Vd(m, m, Series<double>(0.0, t2));
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) Vd.at(i, j) = to_double_series(V.at(i, j));
      std::vector<PencilBranch<S>> sub;
      eig_recurse<double, S>(Vd, t2, sub);
      for (auto& bb : sub) {
        bb.exact = false;
        bb.notes.push_back("leading split is irrational; block continued in floating point");
        out.push_back(std::move(bb));
      }
      return;
    } else {
      for (int i = 0; i < m; ++i) {
        PencilBranch<S> b;
        b.exact = false;
        set_value(b, s);
        unit_vecs(b, i, t2);
        b.fully_resolved = false;
        b.multiplicity = m;
        b.notes.push_back("leading split not real within tolerance; cluster left unresolved");
        out.push_back(std::move(b));
      }
      return;
    }
  }

  // group equal eigenvalues
  std::vector<T> distinct;
  std::vector<int> mult;
  for (const T& v : mu) {
    bool found = false;
    for (size_t i = 0; i < distinct.size(); ++i) {
      bool eq;
      if constexpr (ops::exact)
        eq = ops::is_zero(v - distinct[i]);
      else
        eq = std::fabs(ops::to_double(v - distinct[i])) <=
             1e-8 * (1.0 + std::fabs(ops::to_double(v)));
      if (eq) {
        ++mult[i];
        found = true;
        break;
      }
    }
    if (!found) {
      distinct.push_back(v);
      mult.push_back(1);
    }
  }

  if (distinct.size() == 1) {
    // a leading part acting as a scalar would have been peeled; reaching here
    // means a nilpotent or sub-tolerance residue.  Report honestly.
    for (int i = 0; i < m; ++i) {
      PencilBranch<S> b;
      b.exact = std::is_same_v<T, S>;
      Series<T> v = s;
      v.add_to_coeff(static_cast<int>(r2), distinct[0]);
      set_value(b, v);
      unit_vecs(b, i, t2);
      b.fully_resolved = false;
      b.multiplicity = m;
      b.notes.push_back("leading split degenerate beyond tolerance; cluster left unresolved");
      out.push_back(std::move(b));
    }
    return;
  }

  // spectral projectors of the leading matrix give an adapted column basis
  const int g = static_cast<int>(distinct.size());
  const Mat<T> I0 = Mat<T>::identity(m, ops::one(), ops::zero());
  std::vector<std::vector<T>> cols;
  std::vector<int> block_of;
  for (int i = 0; i < g; ++i) {
    Mat<T> P = I0;
    for (int j = 0; j < g; ++j) {
      if (j == i) continue;
      const T den = distinct[static_cast<size_t>(i)] - distinct[static_cast<size_t>(j)];
      Mat<T> fm = A0;
      for (int r = 0; r < m; ++r) fm.at(r, r) = fm.at(r, r) - distinct[static_cast<size_t>(j)];
      P = P * fm;
      for (int r = 0; r < m; ++r)
        for (int c = 0; c < m; ++c) P.at(r, c) = P.at(r, c) / den;
    }
    std::vector<int> chosen;
    for (int col = 0; col < m && static_cast<int>(chosen.size()) < mult[static_cast<size_t>(i)];
         ++col) {
      Mat<T> trial(static_cast<int>(chosen.size()) + 1, m, ops::zero());
      for (size_t cc = 0; cc < chosen.size(); ++cc)
        for (int r = 0; r < m; ++r) trial.at(static_cast<int>(cc), r) = P.at(r, chosen[cc]);
      for (int r = 0; r < m; ++r) trial.at(static_cast<int>(chosen.size()), r) = P.at(r, col);
      if (trial.rank() == static_cast<int>(chosen.size()) + 1) chosen.push_back(col);
    }
    if (static_cast<int>(chosen.size()) != mult[static_cast<size_t>(i)])
      throw std::logic_error("eigenvalue split: projector rank does not match multiplicity");
    for (int cc : chosen) {
      std::vector<T> v;
      for (int r = 0; r < m; ++r) v.push_back(P.at(r, cc));
      cols.push_back(std::move(v));
      block_of.push_back(i);
    }
  }
  Mat<T> Tm(m, m, ops::zero());
  for (int c = 0; c < m; ++c)
    for (int r = 0; r < m; ++r) Tm.at(r, c) = cols[static_cast<size_t>(c)][static_cast<size_t>(r)];
  const Mat<T> Tinv = Tm.inverse();

  Mat<Series<T>> W(m, m, Series<T>(ops::zero(), u2));
  Mat<Series<T>> Ts(m, m, Series<T>(ops::zero(), u2));
  {
    Mat<Series<T>> TsInv(m, m, Series<T>(ops::zero(), u2));
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) {
        Ts.at(i, j) = Series<T>::from_coeff(0, Tm.at(i, j), u2);
        TsInv.at(i, j) = Series<T>::from_coeff(0, Tinv.at(i, j), u2);
      }
    W = mat_truncate(TsInv * Y * Ts, u2);
  }

  // remove off-diagonal blocks order by order; the commutator with the
  // block-scalar leading part cancels them exactly
  Mat<Series<T>> Trans = mat_identity_series<T>(m, u2);
  for (long o2 = 1; o2 <= u2; ++o2) {
    Mat<T> Sm(m, m, ops::zero());
    bool any = false;
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) {
        if (block_of[static_cast<size_t>(i)] == block_of[static_cast<size_t>(j)]) continue;
        const T v = W.at(i, j).coeff(static_cast<int>(o2));
        if (ops::is_zero(v, scale)) continue;
        const T den = distinct[static_cast<size_t>(block_of[static_cast<size_t>(j)])] -
                      distinct[static_cast<size_t>(block_of[static_cast<size_t>(i)])];
        Sm.at(i, j) = v / den;
        any = true;
      }
    if (!any) continue;
    Mat<Series<T>> X(m, m, Series<T>(ops::zero(), u2));
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j)
        if (!ops::is_zero(Sm.at(i, j), scale))
          X.at(i, j) = Series<T>::from_coeff(static_cast<int>(o2), Sm.at(i, j), u2);
    const Mat<Series<T>> Q = mat_identity_series<T>(m, u2) + X;
    Mat<Series<T>> Qinv = mat_identity_series<T>(m, u2);
    Mat<Series<T>> pw = X;
    int sgn = -1;
    for (long k = 1; k * o2 <= u2; ++k) {
      if (sgn < 0)
        Qinv = Qinv - pw;
      else
        Qinv = Qinv + pw;
      pw = mat_truncate(pw * X, u2);
      sgn = -sgn;
    }
    W = mat_truncate(Qinv * W * Q, u2);
    Trans = mat_truncate(Trans * Q, u2);
  }

  const Mat<Series<T>> TmTrans = mat_truncate(Ts * Trans, u2);

  int offset = 0;
  for (int bi = 0; bi < g; ++bi) {
    const int mb = mult[static_cast<size_t>(bi)];
    Mat<Series<T>> sub(mb, mb, Series<T>(ops::zero(), u2));
    for (int i = 0; i < mb; ++i)
      for (int j = 0; j < mb; ++j) sub.at(i, j) = W.at(offset + i, offset + j);
    std::vector<PencilBranch<S>> subout;
    eig_recurse<T, S>(sub, u2, subout);
    for (const auto& bb : subout) {
      PencilBranch<S> b;
      compose_branch(b, bb, s, r2, t2, TmTrans, offset, mb);
      out.push_back(std::move(b));
    }
    offset += mb;
  }
}

}  // namespace detail

template <class S>
std::vector<PencilBranch<S>> pencil_eigen(const PencilSeries<S>& p, int n2) {
  using ops = scalar_ops<S>;
  const int m = p.F.rows();
  const long t2 = n2;
  std::vector<PencilBranch<S>> out;

  if (m == 1) {
    PencilBranch<S> b;
    b.exact = true;
    Series<S> num = p.FG.at(0, 0);
    num.truncate_to(t2);
    Series<S> den = p.F.at(0, 0);
    den.truncate_to(t2);
    b.value = num * series_inv(den);
    b.value.truncate_to(t2);
    b.vec.assign(1, Series<S>::from_coeff(0, ops::one(), t2));
    out.push_back(std::move(b));
  } else {
    const Mat<Series<S>> Finv = detail::mat_series_inverse(p.F, t2);
    const Mat<Series<S>> V = detail::mat_truncate(Finv * p.FG, t2);
    detail::eig_recurse<S, S>(V, t2, out);
  }

  for (auto& b : out)
    if (b.exact) {
      b.value_f = detail::to_double_series(b.value);
      b.vec_f.clear();
      for (const auto& u : b.vec) b.vec_f.push_back(detail::to_double_series(u));
    }
  return out;
}

// Eigenvector series in polynomial form: sum_i u_i(eps) f_i(y; eps).
template <class S>
PolySeries<S> eigenvector_series(const PencilSeries<S>& p, const PencilBranch<S>& b) {
  if (!b.exact)
    throw std::invalid_argument("eigenvector_series: branch was resolved in floating point only");
  const int d = p.f.empty() ? 0 : p.f[0].coeff(0).dim();
  long t2 = kInfOrder2;
  for (const auto& f : p.f) t2 = std::min(t2, f.trunc2());
  for (const auto& u : b.vec) t2 = std::min(t2, u.trunc2());
  PolySeries<S> r(Polynomial<S>(d), t2);
  for (size_t i = 0; i < p.f.size(); ++i)
    for (const auto& [a2, ui] : b.vec[i].coeffs())
      for (const auto& [b2, fj] : p.f[i].coeffs()) {
        if (a2 + b2 > t2) continue;
        r.add_to_coeff(a2 + b2, fj * ui);
      }
  return r;
}

// ---------------------------------------------------------------------------
// orthonormal-frame cross-check: M = B F^G B with B = F^{-1/2}, computed in
// the Gram-normalized frame where F = I + O(sqrt(eps)).

template <class S>
Mat<Series<S>> m_matrix(const PencilSeries<S>& p, int n2) {
  using ops = scalar_ops<S>;
  const int m = p.F.rows();
  const long t2 = n2;

  std::vector<S> invroot;
  for (const S& gv : p.gram0) {
    S root = ops::zero();
    if (!ops::sqrt_exact(gv, root))
      throw std::domain_error("m_matrix: level normalizers are irrational; use double mode");
    invroot.push_back(ops::one() / root);
  }
  auto normalize = [&](const Mat<Series<S>>& M) {
    Mat<Series<S>> r = M;
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) {
        Series<S> e =
            r.at(i, j) * (invroot[static_cast<size_t>(i)] * invroot[static_cast<size_t>(j)]);
        e.truncate_to(t2);
        r.at(i, j) = e;
      }
    return r;
  };
  const Mat<Series<S>> Fn = normalize(p.F);
  const Mat<Series<S>> FGn = normalize(p.FG);

  Mat<Series<S>> Y = Fn;
  for (int i = 0; i < m; ++i) Y.at(i, i) = Y.at(i, i) - Series<S>::from_coeff(0, ops::one());
  const long yf = detail::mat_floor2(Y);
  if (yf < 1) throw std::domain_error("m_matrix: normalized Gram matrix is not 1 + O(sqrt(eps))");
  Mat<Series<S>> B = detail::mat_identity_series<S>(m, t2);
  Mat<Series<S>> pw = detail::mat_identity_series<S>(m, t2);
  const S mhalf = ops::ratio(-1, 2);
  for (long k = 1; yf < kInfOrder2 && k * yf <= t2; ++k) {
    pw = detail::mat_truncate(pw * Y, t2);
    const S ck = binom_general<S>(mhalf, static_cast<unsigned>(k));
    Mat<Series<S>> term = pw;
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) {
        term.at(i, j) = term.at(i, j) * ck;
        term.at(i, j).truncate_to(t2);
      }
    B = B + term;
  }
  Mat<Series<S>> M = detail::mat_truncate(B * FGn * B, t2);
  double mscale = 1.0;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) mscale = std::max(mscale, M.at(i, j).max_abs());
  for (int i = 0; i < m; ++i)
    for (int j = i + 1; j < m; ++j) {
      const Series<S> diffp = M.at(i, j) - M.at(j, i);
      for (const auto& [o2, v] : diffp.coeffs())
        if (!ops::is_zero(v, mscale))
          throw std::logic_error("m_matrix: result not symmetric at order2 " + std::to_string(o2));
    }
  return M;
}

}  // namespace latwkb
