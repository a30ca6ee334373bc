#pragma once

// Shared model builders for the test suite.  The 1D nearest-neighbour
// Laplacian with a quadratic well is the reference configuration most frozen
// values refer to.

#include "latwkb/model.hpp"

namespace fixtures {

using latwkb::Hop;
using latwkb::LatticeModel;
using latwkb::Multi;
using latwkb::Polynomial;
using latwkb::Rat;

template <class S>
Polynomial<S> poly1(std::initializer_list<std::pair<int, S>> terms) {
  Polynomial<S> p(1);
  for (const auto& [e, c] : terms) p.add_term({e}, c);
  return p;
}

// d=1, hops {0: 2, +-1: -1}, V_0 = x^2.
template <class S>
LatticeModel<S> reference_1d() {
  using ops = latwkb::scalar_ops<S>;
  LatticeModel<S> m;
  m.d = 1;
  m.hops.push_back({{0}, {Polynomial<S>::constant(1, ops::from_long(2))}});
  m.hops.push_back({{1}, {Polynomial<S>::constant(1, ops::from_long(-1))}});
  m.hops.push_back({{-1}, {Polynomial<S>::constant(1, ops::from_long(-1))}});
  m.potential = {Polynomial<S>::monomial(1, {2}, ops::one())};
  return m;
}

// Reference model plus a constant first-order kinetic and potential shift;
// moves every harmonic level by the same amount.
template <class S>
LatticeModel<S> reference_1d_shifted() {
  using ops = latwkb::scalar_ops<S>;
  LatticeModel<S> m = reference_1d<S>();
  for (auto& h : m.hops)
    if (h.eta == std::vector<long>{0}) h.orders.push_back(Polynomial<S>::constant(1, ops::ratio(1, 4)));
  m.potential.push_back(Polynomial<S>::constant(1, ops::ratio(1, 8)));
  return m;
}

// Reference model with a cubic potential correction; breaks the even parity
// and produces nonzero half-integer expansion orders.
template <class S>
LatticeModel<S> reference_1d_cubic() {
  using ops = latwkb::scalar_ops<S>;
  LatticeModel<S> m = reference_1d<S>();
  m.potential[0].add_term({3}, ops::ratio(1, 2));
  return m;
}

// d=1 with x-dependent leading hop weights (still reversible):
// a^(0)_{+-1} = -1 - x^2, a^(0)_0 = 2 + 2x^2, a^(1)_{+-1} = -+x.
template <class S>
LatticeModel<S> xdep_1d() {
  using ops = latwkb::scalar_ops<S>;
  LatticeModel<S> m;
  m.d = 1;
  auto lead = poly1<S>({{0, ops::from_long(-1)}, {2, ops::from_long(-1)}});
  auto diag = poly1<S>({{0, ops::from_long(2)}, {2, ops::from_long(2)}});
  m.hops.push_back({{0}, {diag}});
  m.hops.push_back({{1}, {lead, poly1<S>({{1, ops::from_long(-1)}})}});
  m.hops.push_back({{-1}, {lead, poly1<S>({{1, ops::one()}})}});
  m.potential = {Polynomial<S>::monomial(1, {2}, ops::one())};
  return m;
}

// d=2 isotropic Laplacian with isotropic well; lambda = (1,1).
template <class S>
LatticeModel<S> iso_2d() {
  using ops = latwkb::scalar_ops<S>;
  LatticeModel<S> m;
  m.d = 2;
  m.hops.push_back({{0, 0}, {Polynomial<S>::constant(2, ops::from_long(4))}});
  for (long s : {1L, -1L}) {
    m.hops.push_back({{s, 0}, {Polynomial<S>::constant(2, ops::from_long(-1))}});
    m.hops.push_back({{0, s}, {Polynomial<S>::constant(2, ops::from_long(-1))}});
  }
  Polynomial<S> v(2);
  v.add_term({2, 0}, ops::one());
  v.add_term({0, 2}, ops::one());
  m.potential = {v};
  return m;
}

// d=2 with anisotropic hop weights: B_0 = diag(1,4), isotropic well.
template <class S>
LatticeModel<S> aniso_2d() {
  using ops = latwkb::scalar_ops<S>;
  LatticeModel<S> m;
  m.d = 2;
  m.hops.push_back({{0, 0}, {Polynomial<S>::constant(2, ops::from_long(10))}});
  for (long s : {1L, -1L}) {
    m.hops.push_back({{s, 0}, {Polynomial<S>::constant(2, ops::from_long(-1))}});
    m.hops.push_back({{0, s}, {Polynomial<S>::constant(2, ops::from_long(-4))}});
  }
  Polynomial<S> v(2);
  v.add_term({2, 0}, ops::one());
  v.add_term({0, 2}, ops::one());
  m.potential = {v};
  return m;
}

// d=1 with hops +-2 only; B_0 = [4], kinetic symbol vanishes at xi = pi.
template <class S>
LatticeModel<S> long_hop_1d() {
  using ops = latwkb::scalar_ops<S>;
  LatticeModel<S> m;
  m.d = 1;
  m.hops.push_back({{0}, {Polynomial<S>::constant(1, ops::from_long(2))}});
  m.hops.push_back({{2}, {Polynomial<S>::constant(1, ops::from_long(-1))}});
  m.hops.push_back({{-2}, {Polynomial<S>::constant(1, ops::from_long(-1))}});
  m.potential = {Polynomial<S>::monomial(1, {2}, ops::one())};
  return m;
}

}  // namespace fixtures
