#pragma once

#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <vector>

#include "latwkb/polynomial.hpp"
#include "latwkb/scalar.hpp"
#include "latwkb/series.hpp"

namespace tu {

using latwkb::Multi;
using latwkb::Polynomial;
using latwkb::Rat;
using latwkb::Series;

inline Rat Q(long n, long d = 1) { return latwkb::scalar_ops<Rat>::ratio(n, d); }

// Small random rationals, deterministic per seed.
struct RatGen {
  std::mt19937_64 rng;
  explicit RatGen(unsigned seed) : rng(seed) {}
  Rat operator()() {
    std::uniform_int_distribution<long> num(-9, 9);
    std::uniform_int_distribution<long> den(1, 7);
    return Q(num(rng), den(rng));
  }
};

inline Polynomial<Rat> random_poly(RatGen& g, int dim, int max_deg, int n_terms) {
  Polynomial<Rat> p(dim);
  std::uniform_int_distribution<int> e(0, max_deg);
  for (int t = 0; t < n_terms; ++t) {
    Multi a(dim);
    int budget = max_deg;
    for (int i = 0; i < dim; ++i) {
      a[i] = std::uniform_int_distribution<int>(0, budget)(g.rng);
      budget -= a[i];
    }
    p.add_term(a, g());
  }
  return p;
}

inline Series<Rat> random_scalar_series(RatGen& g, int floor2, int top2, long trunc2) {
  Series<Rat> s(Rat(0), trunc2);
  for (int o2 = floor2; o2 <= top2 && o2 <= trunc2; ++o2) s.add_to_coeff(o2, g());
  return s;
}

}  // namespace tu
