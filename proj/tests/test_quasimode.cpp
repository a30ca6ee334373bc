#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "latwkb/quasimode.hpp"
#include "model_fixtures.hpp"
#include "test_util.hpp"

using namespace tu;
using namespace fixtures;
using latwkb::assemble_hamiltonian;
using latwkb::assemble_quasimode;
using latwkb::build_pencil;
using latwkb::conjugate_expand;
using latwkb::eigenvector_series;
using latwkb::glue_phase;
using latwkb::gram_report;
using latwkb::harmonic_levels;
using latwkb::HermiteBasis;
using latwkb::LatticeBox;
using latwkb::LatticeMatrix;
using latwkb::LatticeModel;
using latwkb::level_shift;
using latwkb::make_box;
using latwkb::model_to_double;
using latwkb::normal_form;
using latwkb::pencil_eigen;
using latwkb::PolySeries;
using latwkb::QuasimodeExpansion;
using latwkb::reference_spectrum;
using latwkb::residual_report;
using latwkb::scaling_fit;
using latwkb::Series;
using latwkb::solve_eikonal;
using latwkb::SpectralSetup;
using latwkb::to_x_variables;
using latwkb::weight_expansion;

namespace {

// 1D free hopping model (V = 0): a_0 = 2, a_{+-1} = -1.
LatticeModel<double> laplacian_1d() {
  LatticeModel<double> m;
  m.d = 1;
  m.hops.push_back({{0}, {Polynomial<double>::constant(1, 2.0)}});
  m.hops.push_back({{1}, {Polynomial<double>::constant(1, -1.0)}});
  m.hops.push_back({{-1}, {Polynomial<double>::constant(1, -1.0)}});
  return m;
}

// Reversible model with x-dependent hop weights: a_{+-1}(x) = g(x +- eps/2)
// for quadratic g, whose half-site Taylor split is exact at every order.
LatticeModel<double> midpoint_1d() {
  LatticeModel<double> m;
  m.d = 1;
  Polynomial<double> g(1);  // g(x) = -(1 + x^2)
  g.add_term({0}, -1.0);
  g.add_term({2}, -1.0);
  Polynomial<double> gp = g.derivative(0);        // -2x
  Polynomial<double> gpp_8(1);                    // g''/8 = -1/4
  gpp_8.add_term({0}, -0.25);
  m.hops.push_back({{1}, {g, gp * 0.5, gpp_8}});
  m.hops.push_back({{-1}, {g, gp * (-0.5), gpp_8}});
  Polynomial<double> minus2g = g * (-2.0);        // keeps row sums of hops at 0th order
  m.hops.push_back({{0}, {minus2g}});
  Polynomial<double> v0(1);
  v0.add_term({2}, 1.0);
  m.potential.push_back(v0);
  return m;
}

}  // namespace

TEST_CASE("series terms regroup by the lattice-variable order") {
  // a bare constant stays at order zero
  auto one = PolySeries<Rat>::from_coeff(0, Polynomial<Rat>::constant(1, Q(1)), 4);
  auto q = to_x_variables(one, Series<Rat>::from_coeff(0, Q(1), 4), {Multi{0}});
  REQUIRE(q.u.size() == 1);
  CHECK(q.u.begin()->first == 0);
  CHECK(q.u.begin()->second.coeff({0}) == 1.0);

  // eps^{1/2} c y lands at order zero as c x
  auto p = PolySeries<Rat>::from_coeff(1, Polynomial<Rat>::monomial(1, {1}, Q(3)), 4);
  auto q1 = to_x_variables(p, Series<Rat>::from_coeff(0, Q(1), 4), {Multi{1}});
  REQUIRE(q1.u.size() == 1);
  CHECK(q1.u.begin()->first == 0);
  CHECK(q1.u.begin()->second.coeff({1}) == 3.0);

  // a monomial of degree above its order plus the level bound is refused
  auto bad = PolySeries<Rat>::from_coeff(0, Polynomial<Rat>::monomial(1, {1}, Q(1)), 2);
  CHECK_THROWS_AS(to_x_variables(bad, Series<Rat>::from_coeff(0, Q(1), 2), {Multi{0}}),
                  std::logic_error);
}

TEST_CASE("lattice box enumeration is deterministic and invertible") {
  auto box = make_box(1, 1.0, 1.0);
  REQUIRE(box.size() == 3);
  CHECK(box.site(0)[0] == -1.0);
  CHECK(box.site(1)[0] == 0.0);
  CHECK(box.site(2)[0] == 1.0);

  auto off = make_box(1, 1.0, 1.0, {0.37});
  CHECK(off.size() == 2);  // sites at -0.63 and 0.37

  auto b2 = make_box(2, 0.5, 1.0);
  CHECK(b2.size() == 25);
  for (long i = 0; i < b2.size(); ++i) CHECK(b2.index(b2.decode(i)) == i);
  CHECK(b2.index({7, 0}) == -1);
}

TEST_CASE("three-site free-hopping matrix and its spectrum") {
  auto box = make_box(1, 1.0, 1.0);
  auto Hm = assemble_hamiltonian(laplacian_1d(), 1.0, box);
  CHECK(Hm.symmetry_defect == 0.0);
  Eigen::MatrixXd Hd(Hm.H);
  Eigen::MatrixXd want(3, 3);
  want << 2, -1, 0, -1, 2, -1, 0, -1, 2;
  CHECK((Hd - want).cwiseAbs().maxCoeff() == 0.0);

  auto vals = reference_spectrum(Hm, 3);
  REQUIRE(vals.size() == 3);
  CHECK(std::fabs(vals[0] - (2.0 - std::sqrt(2.0))) <= 1e-12);
  CHECK(std::fabs(vals[1] - 2.0) <= 1e-12);
  CHECK(std::fabs(vals[2] - (2.0 + std::sqrt(2.0))) <= 1e-12);

  // a constant potential shift moves every eigenvalue by the same amount
  auto shifted = laplacian_1d();
  shifted.potential.push_back(Polynomial<double>::constant(1, 5.0));
  auto vals2 = reference_spectrum(assemble_hamiltonian(shifted, 1.0, box), 3);
  for (int i = 0; i < 3; ++i) CHECK(std::fabs(vals2[i] - vals[i] - 5.0) <= 1e-12);

  // kinetic row sums vanish away from the boundary
  auto wide = make_box(1, 0.1, 1.0);
  auto Hk = assemble_hamiltonian(laplacian_1d(), 0.1, wide);
  Eigen::VectorXd ones = Eigen::VectorXd::Ones(wide.size());
  Eigen::VectorXd rs = Hk.H * ones;
  for (long i = 1; i + 1 < wide.size(); ++i) CHECK(std::fabs(rs[i]) <= 1e-14);

  // an exact eigenpair has zero residual
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Hd);
  auto rep = residual_report(Hm, es.eigenvectors().col(0), es.eigenvalues()[0], box, 10.0);
  CHECK(rep.r_global <= 1e-12);
  CHECK(rep.interior_count == 3);
}

TEST_CASE("x-dependent hop weights assemble to the symmetric stencil") {
  const double eps = 0.01;
  auto box = make_box(1, eps, 0.5);
  auto m = midpoint_1d();
  auto Hm = assemble_hamiltonian(m, eps, box);
  CHECK(Hm.symmetry_defect <= 1e-14);

  // restriction commutes with the stencil: compare H (r f) against the
  // continuum action computed directly from the model at interior sites
  auto f = [](double x) { return (1.0 + x * x) * std::exp(-x * x); };
  Eigen::VectorXd rf(box.size());
  for (long i = 0; i < box.size(); ++i) rf[i] = f(box.site(i)[0]);
  Eigen::VectorXd Hrf = Hm.H * rf;
  for (long i = 1; i + 1 < box.size(); ++i) {
    const double x = box.site(i)[0];
    double want = 0.0;
    for (const auto& h : m.hops) {
      double a = 0.0, epw = 1.0;
      for (const auto& ak : h.orders) {
        a += epw * ak.eval_double({x});
        epw *= eps;
      }
      want += a * f(x + eps * static_cast<double>(h.eta[0]));
    }
    want += m.potential[0].eval_double({x}) * f(x);
    CHECK(std::fabs(Hrf[i] - want) <= 1e-13);
  }

  // a non-reversible hop assignment is refused
  auto badm = laplacian_1d();
  badm.hops[1].orders[0].add_term({1}, 0.3);  // a_{+1} gains x-dependence, a_{-1} does not
  CHECK_THROWS_AS(assemble_hamiltonian(badm, 0.1, make_box(1, 0.1, 1.0)), std::domain_error);
}

TEST_CASE("iterative eigensolver matches the dense one") {
  const double eps = 0.02;
  auto Hm = assemble_hamiltonian(model_to_double(reference_1d<Rat>()), eps, make_box(1, eps, 1.0));
  auto dense = reference_spectrum(Hm, 3);
  auto lanczos = reference_spectrum(Hm, 3, /*dense_cap=*/50);
  REQUIRE(dense.size() == 3);
  REQUIRE(lanczos.size() == 3);
  for (int i = 0; i < 3; ++i)
    CHECK(std::fabs(dense[i] - lanczos[i]) <= 1e-9 * std::fabs(dense[i]));
}

TEST_CASE("reference model: series eigenvalue matches the lattice spectrum") {
  auto m = reference_1d<Rat>();
  auto sol = solve_eikonal(m, 4);
  auto e = conjugate_expand(m, sol, 4, 10);
  SpectralSetup<Rat> setup(e, HermiteBasis<Rat>(sol.lambda));
  auto w = weight_expansion(sol, 4);
  auto levels = harmonic_levels(sol.lambda, level_shift(m), 1);
  auto p = build_pencil(setup, levels[0], w, 4);
  auto br = pencil_eigen(p, 4);
  REQUIRE(br.size() == 1);

  auto md = model_to_double(m);
  double prev_err = 0.0;
  int step = 0;
  for (double eps : {0.04, 0.02}) {
    auto Hm = assemble_hamiltonian(md, eps, make_box(1, eps, 1.2));
    const double lowest = reference_spectrum(Hm, 1)[0];
    const double series = eps * latwkb::eval_eps(br[0].value_f, eps);
    const double err = std::fabs(lowest - series);
    INFO("eps " << eps << " err " << err);
    CHECK(err <= 1e-4 * eps);
    if (step > 0) CHECK(err < 0.3 * prev_err);
    prev_err = err;
    ++step;
  }

  // doubling the box leaves the lowest eigenvalue unchanged to within the
  // exponential localization of the well state
  const double eps = 0.02;
  const double a = reference_spectrum(assemble_hamiltonian(md, eps, make_box(1, eps, 1.0)), 1)[0];
  const double b = reference_spectrum(assemble_hamiltonian(md, eps, make_box(1, eps, 1.3)), 1)[0];
  CHECK(std::fabs(a - b) <= 1e-10 * std::fabs(a));
}

TEST_CASE("sampled quasimode: values, residual decay, pairings") {
  auto m = reference_1d<Rat>();
  auto sol = solve_eikonal(m, 4);
  auto e = conjugate_expand(m, sol, 4, 10);
  SpectralSetup<Rat> setup(e, HermiteBasis<Rat>(sol.lambda));
  auto w = weight_expansion(sol, 4);
  auto levels = harmonic_levels(sol.lambda, level_shift(m), 3);

  std::vector<QuasimodeExpansion> qs;
  for (int j = 0; j < 3; ++j) {
    auto p = build_pencil(setup, levels[static_cast<size_t>(j)], w, 4);
    auto br = pencil_eigen(p, 4);
    REQUIRE(br.size() == 1);
    qs.push_back(to_x_variables(eigenvector_series(p, br[0]), br[0].value, levels[static_cast<size_t>(j)].alphas, j));
  }

  // for the even model every half-order of a branch shares the parity of its
  // level degree (a single global sqrt(eps) prefactor for odd levels); the
  // lowest order is minus the level degree
  for (size_t j = 0; j < qs.size(); ++j) {
    const int par = latwkb::multi_degree(levels[j].alphas[0]) % 2;
    for (const auto& [l2, poly] : qs[j].u) CHECK(((l2 % 2) + 2) % 2 == par);
  }
  CHECK(qs[0].floor2() == 0);
  CHECK(qs[1].floor2() == -1);
  CHECK(qs[2].floor2() == -2);

  auto gl = glue_phase(sol, 0.8, 1.1);
  auto md = model_to_double(m);

  // value at the origin equals the amplitude there
  {
    const double eps = 0.04;
    auto box = make_box(1, eps, 1.2);
    auto v = assemble_quasimode(qs[0], 4, gl, 0.5, 0.75, box, eps);
    const long i0 = box.index({0});
    REQUIRE(i0 >= 0);
    CHECK(std::fabs(v[i0] - qs[0].amplitude({0.0}, eps, 4)) <= 1e-14);
  }

  // interior residual against eps*E(eps) decreases with eps
  std::vector<std::pair<double, double>> res_pts;
  for (double eps : {0.04, 0.02, 0.01}) {
    auto box = make_box(1, eps, 1.2);
    auto Hm = assemble_hamiltonian(md, eps, box);
    auto v = assemble_quasimode(qs[0], 4, gl, 0.5, 0.75, box, eps);
    const double epsE = eps * latwkb::eval_eps(qs[0].value, eps);
    auto rep = residual_report(Hm, v, epsE, box, 0.5 - eps);
    INFO("eps " << eps << " r_int " << rep.r_interior << " r_glob " << rep.r_global);
    CHECK(rep.r_interior <= rep.r_global + 1e-18);
    res_pts.emplace_back(eps, rep.r_interior);
  }
  CHECK(res_pts[0].second > res_pts[1].second);
  CHECK(res_pts[1].second > res_pts[2].second);
  auto fit = scaling_fit(res_pts);
  INFO("interior residual slope " << fit.slope);
  CHECK(fit.slope >= 2.5);
  CHECK(res_pts.back().second <= 1e-5);

  // pairings: same-parity branches decouple at a half-order rate or better,
  // opposite-parity pairs sit at the rounding floor; diagonals are stable
  std::vector<double> diag0, cross01;
  std::vector<std::pair<double, double>> cross02;
  for (double eps : {0.04, 0.02, 0.01}) {
    auto box = make_box(1, eps, 1.2, {0.37 * eps});
    std::vector<Eigen::VectorXd> vs;
    for (int j = 0; j < 3; ++j)
      vs.push_back(assemble_quasimode(qs[static_cast<size_t>(j)], qs[static_cast<size_t>(j)].max2(),
                                      gl, 0.5, 0.75, box, eps));
    auto rep = gram_report(vs, eps, {1.0});
    const double d00 = rep.G.at(0, 0), d11 = rep.G.at(1, 1), d22 = rep.G.at(2, 2);
    diag0.push_back(d00);
    cross01.push_back(std::fabs(rep.G.at(0, 1)) / std::sqrt(d00 * d11));
    cross02.emplace_back(eps, std::fabs(rep.G.at(0, 2)) / std::sqrt(d00 * d22));
  }
  // opposite parity: the continuum pairing vanishes identically, the lattice
  // picks up only seam sampling of size exp(-2 phase(cut)/eps)
  for (double c : cross01) CHECK(c <= 1e-6);
  CHECK(cross01.back() <= 1e-10);
  CHECK(std::fabs(diag0.front() - 1.0) <= 0.05);
  CHECK(std::fabs(diag0.back() - 1.0) <= 0.05);
  for (size_t i = 0; i + 1 < diag0.size(); ++i)
    CHECK(std::fabs(diag0[i] / diag0[i + 1] - 1.0) <= 0.05);
  auto gfit = scaling_fit(cross02);
  INFO("same-parity cross pairing slope " << gfit.slope);
  CHECK(gfit.slope >= 0.5);
}

TEST_CASE("transformed 2D model: lattice spectrum and mapped quasimode") {
  auto morig = aniso_2d<Rat>();
  auto nf = normal_form(morig);
  auto sol = solve_eikonal(nf.model, 2);
  auto e = conjugate_expand(nf.model, sol, 2, 6);
  SpectralSetup<Rat> setup(e, HermiteBasis<Rat>(sol.lambda));
  auto w = weight_expansion(sol, 2);
  auto levels = harmonic_levels(sol.lambda, level_shift(nf.model), 1);
  CHECK(levels[0].E == Q(3));
  auto p = build_pencil(setup, levels[0], w, 2);
  auto br = pencil_eigen(p, 2);
  REQUIRE(br.size() == 1);

  const double eps = 0.05;
  auto box = make_box(2, eps, 0.8);
  auto Hm = assemble_hamiltonian(model_to_double(morig), eps, box);
  const double lowest = reference_spectrum(Hm, 1, /*dense_cap=*/600)[0];
  CHECK(std::fabs(lowest - 3.0 * eps) <= 0.1 * 3.0 * eps);
  const double series = eps * latwkb::eval_eps(br[0].value_f, eps);
  CHECK(std::fabs(lowest - series) <= 0.02 * series);

  // quasimode built in normal-form coordinates, sampled through the map
  latwkb::Mat<double> Cd(2, 2, 0.0);
  REQUIRE(nf.model.C.has_value());
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) Cd.at(i, j) = latwkb::scalar_ops<Rat>::to_double(nf.model.C->at(i, j));
  auto q = to_x_variables(eigenvector_series(p, br[0]), br[0].value, levels[0].alphas);
  auto gl = glue_phase(sol, 0.5, 0.7);
  auto v = assemble_quasimode(q, 2, gl, 0.3, 0.45, box, eps, &Cd);
  auto rep = residual_report(Hm, v, series, box, 0.3 - 2.0 * eps, &Cd);
  INFO("2D r_interior " << rep.r_interior << " r_global " << rep.r_global);
  CHECK(rep.interior_count > 0);
  CHECK(rep.r_interior <= 5e-3);
}

TEST_CASE("log-log fits recover synthetic rates") {
  auto fit = scaling_fit({{0.04, 1.6e-4}, {0.02, 4e-5}, {0.01, 1e-5}});
  CHECK(std::fabs(fit.slope - 2.0) <= 1e-12);
  CHECK(fit.r_squared >= 1.0 - 1e-12);
  CHECK(fit.monotone);

  auto flat = scaling_fit({{0.04, 3.0}, {0.02, 3.0}, {0.01, 3.0}});
  CHECK(std::fabs(flat.slope) <= 1e-12);

  auto wiggly = scaling_fit({{0.04, 1e-4}, {0.02, 2e-4}, {0.01, 1e-5}});
  CHECK_FALSE(wiggly.monotone);

  CHECK_THROWS_AS(scaling_fit({{0.04, 1.0}, {0.02, 0.5}}), std::invalid_argument);
  CHECK_THROWS_AS(scaling_fit({{0.04, 1.0}, {0.02, 0.5}, {0.01, 0.0}}), std::invalid_argument);
}

TEST_CASE("quasimode assembly rejects inconsistent geometry") {
  auto m = reference_1d<Rat>();
  auto sol = solve_eikonal(m, 2);
  auto e = conjugate_expand(m, sol, 2, 6);
  SpectralSetup<Rat> setup(e, HermiteBasis<Rat>(sol.lambda));
  auto w = weight_expansion(sol, 2);
  auto levels = harmonic_levels(sol.lambda, level_shift(m), 1);
  auto p = build_pencil(setup, levels[0], w, 2);
  auto br = pencil_eigen(p, 2);
  auto q = to_x_variables(eigenvector_series(p, br[0]), br[0].value, levels[0].alphas);
  auto gl = glue_phase(sol, 0.8, 1.1);
  auto box = make_box(1, 0.04, 1.0);

  // cutoff must stay inside the polynomial region of the phase
  CHECK_THROWS_AS(assemble_quasimode(q, 2, gl, 0.7, 0.9, box, 0.04), std::invalid_argument);
  // truncation beyond the available orders
  CHECK_THROWS_AS(assemble_quasimode(q, 8, gl, 0.5, 0.75, box, 0.04), std::invalid_argument);
  // box spacing must match eps
  CHECK_THROWS_AS(assemble_quasimode(q, 2, gl, 0.5, 0.75, box, 0.02), std::invalid_argument);
}
