#pragma once

// Numeric verification layer: rewrite eigenvector series in the lattice
// variable, sample approximate eigenvectors u e^{-phase/eps} on a finite
// lattice box, assemble the finite-section difference operator, and compare
// its low spectrum against the formal eigenvalue series.

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "latwkb/eikonal.hpp"
#include "latwkb/model.hpp"
#include "latwkb/polynomial.hpp"
#include "latwkb/series.hpp"
#include "latwkb/smallmat.hpp"
#include "latwkb/spectral.hpp"

namespace latwkb {

namespace detail {

template <class S>
Polynomial<double> to_double_poly(const Polynomial<S>& p) {
  Polynomial<double> r(p.dim());
  for (const auto& [alpha, c] : p.terms()) r.add_term(alpha, scalar_ops<S>::to_double(c));
  return r;
}

}  // namespace detail

template <class S>
LatticeModel<double> model_to_double(const LatticeModel<S>& m) {
  LatticeModel<double> r;
  r.d = m.d;
  for (const auto& h : m.hops) {
    Hop<double> hd;
    hd.eta = h.eta;
    for (const auto& p : h.orders) hd.orders.push_back(detail::to_double_poly(p));
    r.hops.push_back(std::move(hd));
  }
  for (const auto& p : m.potential) r.potential.push_back(detail::to_double_poly(p));
  if (m.C) {
    Mat<double> C(m.C->rows(), m.C->cols(), 0.0);
    for (int i = 0; i < m.C->rows(); ++i)
      for (int j = 0; j < m.C->cols(); ++j) C.at(i, j) = scalar_ops<S>::to_double(m.C->at(i, j));
    r.C = C;
  }
  return r;
}

// ---------------------------------------------------------------------------
// Eigenvector series rewritten in the lattice variable.
//
// A term eps^{k/2} c y^beta becomes eps^{(k-|beta|)/2} c x^beta once
// y = x/sqrt(eps).  Grouping by the new half-order l2 = k - |beta| gives the
// amplitude sum_{l2} eps^{l2/2} u_{l2}(x); the lowest order is bounded below
// by minus the largest level degree, and a coefficient at negative order l2
// can only contain monomials of degree >= -l2.

struct QuasimodeExpansion {
  int branch = 0;
  std::map<int, Polynomial<double>> u;  // half-order in eps -> coefficient in x
  Series<double> value{0.0};            // eigenvalue series in the scaled frame

  int floor2() const { return u.empty() ? 0 : u.begin()->first; }
  int max2() const { return u.empty() ? 0 : u.rbegin()->first; }

  // sum of eps^{l2/2} u_{l2}(x) over l2 <= m2
  double amplitude(const std::vector<double>& x, double eps, int m2) const {
    double total = 0.0;
    for (const auto& [l2, p] : u) {
      if (l2 > m2) break;
      total += std::pow(eps, 0.5 * l2) * p.eval_double(x);
    }
    return total;
  }
};

template <class S>
QuasimodeExpansion to_x_variables(const PolySeries<S>& psi, const Series<S>& value,
                                  const std::vector<Multi>& level, int branch = 0) {
  if (psi.is_zero()) throw std::invalid_argument("to_x_variables: zero eigenvector series");
  if (psi.floor2() < 0) throw std::invalid_argument("to_x_variables: negative-order input");
  int max_level_deg = 0;
  for (const auto& a : level) max_level_deg = std::max(max_level_deg, multi_degree(a));

  double scale = 0.0;
  for (const auto& [k2, p] : psi.coeffs()) scale = std::max(scale, p.max_abs_coeff());

  QuasimodeExpansion q;
  q.branch = branch;
  for (const auto& [k2, p] : psi.coeffs()) {
    for (const auto& [beta, c] : p.terms()) {
      if (scalar_ops<S>::is_zero(c, scale)) continue;
      const int l2 = static_cast<int>(k2) - multi_degree(beta);
      auto it = q.u.find(l2);
      if (it == q.u.end()) it = q.u.emplace(l2, Polynomial<double>(p.dim())).first;
      it->second.add_term(beta, scalar_ops<S>::to_double(c));
    }
  }
  for (const auto& [l2, p] : q.u) {
    if (l2 < -max_level_deg)
      throw std::logic_error("to_x_variables: order below the level degree bound");
    for (const auto& [beta, c] : p.terms())
      if (multi_degree(beta) < std::max(-l2, 0))
        throw std::logic_error("to_x_variables: degree bound violated at order " +
                               std::to_string(l2));
  }
  q.value = detail::to_double_series(value);
  return q;
}

// ---------------------------------------------------------------------------
// Finite lattice box {eps*n + x0 : n integer, |eps*n + x0|_inf <= L} with a
// deterministic row-major site order.

struct LatticeBox {
  int d = 1;
  double eps = 0.1;
  double L = 1.0;
  std::vector<double> x0;
  std::vector<long> lo, hi;  // inclusive per-axis integer ranges

  long size() const {
    long n = 1;
    for (int nu = 0; nu < d; ++nu) n *= hi[nu] - lo[nu] + 1;
    return n;
  }

  std::vector<long> decode(long i) const {
    std::vector<long> n(d);
    for (int nu = d - 1; nu >= 0; --nu) {
      const long len = hi[nu] - lo[nu] + 1;
      n[nu] = lo[nu] + (i % len);
      i /= len;
    }
    return n;
  }

  long index(const std::vector<long>& n) const {
    long i = 0;
    for (int nu = 0; nu < d; ++nu) {
      if (n[nu] < lo[nu] || n[nu] > hi[nu]) return -1;
      i = i * (hi[nu] - lo[nu] + 1) + (n[nu] - lo[nu]);
    }
    return i;
  }

  std::vector<double> site(long i) const {
    const auto n = decode(i);
    std::vector<double> x(d);
    for (int nu = 0; nu < d; ++nu) x[nu] = eps * static_cast<double>(n[nu]) + x0[nu];
    return x;
  }
};

inline LatticeBox make_box(int d, double eps, double L, std::vector<double> x0 = {}) {
  if (d < 1 || eps <= 0.0 || L <= 0.0) throw std::invalid_argument("make_box: bad parameters");
  if (x0.empty()) x0.assign(static_cast<size_t>(d), 0.0);
  if (static_cast<int>(x0.size()) != d) throw std::invalid_argument("make_box: offset dimension");
  LatticeBox box;
  box.d = d;
  box.eps = eps;
  box.L = L;
  box.x0 = x0;
  box.lo.resize(static_cast<size_t>(d));
  box.hi.resize(static_cast<size_t>(d));
  for (int nu = 0; nu < d; ++nu) {
    box.lo[nu] = static_cast<long>(std::ceil((-L - x0[nu]) / eps - 1e-9));
    box.hi[nu] = static_cast<long>(std::floor((L - x0[nu]) / eps + 1e-9));
    if (box.lo[nu] > box.hi[nu]) throw std::invalid_argument("make_box: empty axis range");
  }
  return box;
}

// ---------------------------------------------------------------------------
// Finite-section matrix of the difference operator on a box: row x collects
// sum_eta a_eta(x; eps) u(x + eps*eta) + V(x; eps) u(x), with hops that leave
// the box dropped.  Reversible models give a symmetric matrix; the measured
// defect is kept and an asymmetric result is refused.

struct LatticeMatrix {
  Eigen::SparseMatrix<double> H;
  double symmetry_defect = 0.0;
};

inline LatticeMatrix assemble_hamiltonian(const LatticeModel<double>& m, double eps,
                                          const LatticeBox& box, double sym_tol = 1e-9) {
  if (m.d != box.d) throw std::invalid_argument("assemble_hamiltonian: dimension mismatch");
  if (std::fabs(box.eps - eps) > 1e-15)
    throw std::invalid_argument("assemble_hamiltonian: box spacing differs from eps");
  const long n = box.size();
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<size_t>(n) * (m.hops.size() + 1));
  for (long i = 0; i < n; ++i) {
    const auto ni = box.decode(i);
    const auto x = box.site(i);
    double diag = 0.0;
    double epow = 1.0;
    for (const auto& vl : m.potential) {
      diag += epow * vl.eval_double(x);
      epow *= eps;
    }
    if (diag != 0.0) trips.emplace_back(i, i, diag);
    for (const auto& h : m.hops) {
      std::vector<long> nj = ni;
      for (int nu = 0; nu < m.d; ++nu) nj[static_cast<size_t>(nu)] += h.eta[static_cast<size_t>(nu)];
      const long j = box.index(nj);
      if (j < 0) continue;
      double a = 0.0;
      epow = 1.0;
      for (const auto& ak : h.orders) {
        a += epow * ak.eval_double(x);
        epow *= eps;
      }
      if (a != 0.0) trips.emplace_back(i, j, a);
    }
  }
  LatticeMatrix out;
  out.H.resize(n, n);
  out.H.setFromTriplets(trips.begin(), trips.end());

  double scale = 0.0;
  for (int k = 0; k < out.H.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(out.H, k); it; ++it)
      scale = std::max(scale, std::fabs(it.value()));
  Eigen::SparseMatrix<double> D = Eigen::SparseMatrix<double>(out.H.transpose()) - out.H;
  for (int k = 0; k < D.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(D, k); it; ++it)
      out.symmetry_defect = std::max(out.symmetry_defect, std::fabs(it.value()));
  if (out.symmetry_defect > sym_tol * std::max(scale, 1.0))
    throw std::domain_error("assemble_hamiltonian: hop coefficients are not reversible");
  return out;
}

// ---------------------------------------------------------------------------
// Lowest eigenvalues of the finite section: dense solve for small boxes,
// inverted-operator Lanczos with full reorthogonalization above the cap.

inline std::vector<double> reference_spectrum(const LatticeMatrix& Hm, int n_low,
                                              long dense_cap = 1500, int max_iter = 240) {
  const long n = Hm.H.rows();
  if (n == 0) throw std::invalid_argument("reference_spectrum: empty matrix");
  n_low = static_cast<int>(std::min<long>(n_low, n));

  if (n <= dense_cap) {
    Eigen::MatrixXd Hd(Hm.H);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Hd);
    if (es.info() != Eigen::Success)
      throw std::runtime_error("reference_spectrum: dense eigensolver failed");
    std::vector<double> vals(es.eigenvalues().data(), es.eigenvalues().data() + n_low);
    return vals;
  }

  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> fact(Hm.H);
  if (fact.info() != Eigen::Success)
    throw std::runtime_error("reference_spectrum: sparse factorization failed");

  long m = std::min<long>(n, std::max<long>(8L * n_low + 40L, 60L));
  m = std::min<long>(m, max_iter);
  Eigen::MatrixXd Q(n, m + 1);
  Eigen::VectorXd a = Eigen::VectorXd::Zero(m), b = Eigen::VectorXd::Zero(m);

  Eigen::VectorXd v(n);
  for (long i = 0; i < n; ++i) v[i] = std::sin(0.7 * static_cast<double>(i + 1)) + 0.5;
  v.normalize();
  Q.col(0) = v;

  long steps = 0;
  for (long k = 0; k < m; ++k) {
    Eigen::VectorXd w = fact.solve(Q.col(k));
    a[k] = Q.col(k).dot(w);
    for (int pass = 0; pass < 2; ++pass)
      w -= Q.leftCols(k + 1) * (Q.leftCols(k + 1).transpose() * w);
    const double beta = w.norm();
    steps = k + 1;
    if (beta < 1e-13) break;
    if (k + 1 <= m) {
      b[k] = beta;
      Q.col(k + 1) = w / beta;
    }
  }

  Eigen::MatrixXd T = Eigen::MatrixXd::Zero(steps, steps);
  for (long k = 0; k < steps; ++k) {
    T(k, k) = a[k];
    if (k + 1 < steps) {
      T(k, k + 1) = b[k];
      T(k + 1, k) = b[k];
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("reference_spectrum: tridiagonal eigensolver failed");
  std::vector<double> vals;
  for (long k = steps - 1; k >= 0 && static_cast<int>(vals.size()) < n_low; --k) {
    const double theta = es.eigenvalues()[k];
    if (theta <= 0.0) break;  // inverted spectrum exhausted
    vals.push_back(1.0 / theta);
  }
  if (static_cast<int>(vals.size()) < n_low)
    throw std::runtime_error("reference_spectrum: iteration did not isolate enough eigenvalues");
  std::sort(vals.begin(), vals.end());
  return vals;
}

// ---------------------------------------------------------------------------
// Sampled approximate eigenvector: [sum_{l2<=m2} eps^{l2/2} u_{l2}] k(x)
// exp(-phase(x)/eps) at the box sites.  For a transformed model, `map` is the
// coordinate change into the frame where the series and phase were built, and
// all factors are evaluated at map*x.

template <class S>
Eigen::VectorXd assemble_quasimode(const QuasimodeExpansion& q, int m_trunc2,
                                   const GluedPhase<S>& phase, double cut_in, double cut_out,
                                   const LatticeBox& box, double eps,
                                   const Mat<double>* map = nullptr) {
  if (std::fabs(box.eps - eps) > 1e-15)
    throw std::invalid_argument("assemble_quasimode: box spacing differs from eps");
  if (m_trunc2 > q.max2())
    throw std::invalid_argument("assemble_quasimode: truncation beyond available orders");
  if (!(0.0 < cut_in && cut_in < cut_out))
    throw std::invalid_argument("assemble_quasimode: need 0 < cut_in < cut_out");
  if (cut_out > phase.r_in + 1e-12)
    throw std::invalid_argument(
        "assemble_quasimode: cutoff support exceeds the polynomial region of the phase");

  const long n = box.size();
  Eigen::VectorXd v(n);
  std::vector<double> y(static_cast<size_t>(box.d));
  for (long i = 0; i < n; ++i) {
    const auto x = box.site(i);
    if (map) {
      for (int r = 0; r < box.d; ++r) {
        double s = 0.0;
        for (int c = 0; c < box.d; ++c) s += map->at(r, c) * x[static_cast<size_t>(c)];
        y[static_cast<size_t>(r)] = s;
      }
    } else {
      y.assign(x.begin(), x.end());
    }
    double rho = 0.0;
    for (double yi : y) rho += yi * yi;
    rho = std::sqrt(rho);
    const double cut = smooth_step((cut_out - rho) / (cut_out - cut_in));
    v[i] = cut == 0.0 ? 0.0 : q.amplitude(y, eps, m_trunc2) * cut * std::exp(-phase(y) / eps);
  }
  return v;
}

// ---------------------------------------------------------------------------
// Residual of the sampled vector against eps * E(eps), globally and on the
// interior where the cutoff seam cannot reach.

struct ResidualReport {
  double r_global = 0.0;
  double r_interior = 0.0;
  double v_norm = 0.0;
  long interior_count = 0;
};

inline ResidualReport residual_report(const LatticeMatrix& Hm, const Eigen::VectorXd& v,
                                      double eps_E, const LatticeBox& box, double mask_radius,
                                      const Mat<double>* map = nullptr) {
  if (v.size() != Hm.H.rows()) throw std::invalid_argument("residual_report: size mismatch");
  ResidualReport rep;
  rep.v_norm = v.norm();
  if (rep.v_norm == 0.0) throw std::invalid_argument("residual_report: zero vector");
  Eigen::VectorXd r = Hm.H * v - eps_E * v;
  rep.r_global = r.norm() / rep.v_norm;
  double acc = 0.0;
  std::vector<double> y(static_cast<size_t>(box.d));
  for (long i = 0; i < v.size(); ++i) {
    const auto x = box.site(i);
    if (map) {
      for (int rr = 0; rr < box.d; ++rr) {
        double s = 0.0;
        for (int c = 0; c < box.d; ++c) s += map->at(rr, c) * x[static_cast<size_t>(c)];
        y[static_cast<size_t>(rr)] = s;
      }
    } else {
      y.assign(x.begin(), x.end());
    }
    double rho = 0.0;
    for (double yi : y) rho += yi * yi;
    if (std::sqrt(rho) <= mask_radius) {
      acc += r[i] * r[i];
      ++rep.interior_count;
    }
  }
  rep.r_interior = std::sqrt(acc) / rep.v_norm;
  return rep;
}

// ---------------------------------------------------------------------------
// Log-log least-squares fit over an eps grid.

struct ScalingFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 1.0;
  bool monotone = true;
  std::vector<std::pair<double, double>> points;
};

inline ScalingFit scaling_fit(const std::vector<std::pair<double, double>>& pts) {
  if (pts.size() < 3) throw std::invalid_argument("scaling_fit: need at least 3 grid points");
  ScalingFit fit;
  fit.points = pts;
  auto sorted = pts;
  std::sort(sorted.begin(), sorted.end());
  for (size_t i = 0; i + 1 < sorted.size(); ++i)
    if (sorted[i].second > sorted[i + 1].second) fit.monotone = false;
  double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  const double n = static_cast<double>(pts.size());
  for (const auto& [eps, val] : pts) {
    if (!(eps > 0.0) || !(val > 0.0))
      throw std::invalid_argument("scaling_fit: nonpositive data cannot be fit on a log scale");
    const double lx = std::log(eps), ly = std::log(val);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
    syy += ly * ly;
  }
  const double denom = n * sxx - sx * sx;
  fit.slope = (n * sxy - sx * sy) / denom;
  fit.intercept = (sy - fit.slope * sx) / n;
  double ss_res = 0.0, ss_tot = 0.0;
  const double mean_y = sy / n;
  for (const auto& [eps, val] : pts) {
    const double ly = std::log(val);
    const double fy = fit.intercept + fit.slope * std::log(eps);
    ss_res += (ly - fy) * (ly - fy);
    ss_tot += (ly - mean_y) * (ly - mean_y);
  }
  fit.r_squared = ss_tot == 0.0 ? 1.0 : 1.0 - ss_res / ss_tot;
  return fit;
}

// ---------------------------------------------------------------------------
// Pairings eps^{d/2} <v_j, v_k> / (Gaussian mass); for sampled Gaussian-type
// vectors the diagonal approaches the squared-norm constant of the series and
// the off-diagonal entries vanish with eps.

struct GramReport {
  Mat<double> G{0, 0, 0.0};
  double mass = 0.0;
  double max_offdiag = 0.0;  // normalized by the diagonal
};

inline GramReport gram_report(const std::vector<Eigen::VectorXd>& vs, double eps,
                              const std::vector<double>& lambda) {
  if (vs.empty()) throw std::invalid_argument("gram_report: no vectors");
  const int m = static_cast<int>(vs.size());
  for (const auto& v : vs)
    if (v.size() != vs.front().size())
      throw std::invalid_argument("gram_report: vectors from different boxes");
  GramReport rep;
  rep.mass = 1.0;
  for (double l : lambda) rep.mass *= std::sqrt(M_PI / l);
  const double d = static_cast<double>(lambda.size());
  rep.G = Mat<double>(m, m, 0.0);
  for (int j = 0; j < m; ++j)
    for (int k = 0; k < m; ++k)
      rep.G.at(j, k) = std::pow(eps, 0.5 * d) * vs[static_cast<size_t>(j)].dot(vs[static_cast<size_t>(k)]) / rep.mass;
  for (int j = 0; j < m; ++j)
    for (int k = 0; k < m; ++k) {
      if (j == k) continue;
      const double den = std::sqrt(rep.G.at(j, j) * rep.G.at(k, k));
      rep.max_offdiag = std::max(rep.max_offdiag, std::fabs(rep.G.at(j, k)) / den);
    }
  return rep;
}

}  // namespace latwkb
