#pragma once

// JSON encodings for models, polynomials, and series.  Exact coefficients are
// written as decimal numerator/denominator strings so round-trips are
// lossless; floating coefficients are written as numbers.

#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "latwkb/model.hpp"
#include "latwkb/polynomial.hpp"
#include "latwkb/scalar.hpp"
#include "latwkb/series.hpp"
#include "latwkb/smallmat.hpp"

namespace latwkb {

using njson = nlohmann::json;

template <class S>
njson scalar_to_json(const S& c) {
  if constexpr (scalar_ops<S>::exact) {
    return njson{{"num", c.get_num().get_str()}, {"den", c.get_den().get_str()}};
  } else {
    return njson{{"val", c}};
  }
}

template <class S>
S scalar_from_json(const njson& j) {
  if (j.contains("num")) {
    const std::string num = j.at("num").get<std::string>();
    const std::string den = j.contains("den") ? j.at("den").get<std::string>() : "1";
    if constexpr (scalar_ops<S>::exact) {
      return scalar_ops<S>::parse(num, den);
    } else {
      const double dn = std::stod(den);
      if (dn == 0.0) throw std::invalid_argument("scalar_from_json: zero denominator");
      return std::stod(num) / dn;
    }
  }
  if (j.contains("val")) {
    if constexpr (scalar_ops<S>::exact)
      throw std::invalid_argument(
          "scalar_from_json: floating coefficient cannot be read in exact mode");
    else
      return j.at("val").get<double>();
  }
  throw std::invalid_argument("scalar_from_json: expected num/den or val");
}

template <class S>
njson poly_to_json(const Polynomial<S>& p) {
  njson terms = njson::array();
  for (const auto& [alpha, c] : p.terms()) {
    njson t = scalar_to_json(c);
    t["alpha"] = alpha;
    terms.push_back(std::move(t));
  }
  return terms;
}

template <class S>
Polynomial<S> poly_from_json(const njson& j, int dim) {
  if (!j.is_array()) throw std::invalid_argument("poly_from_json: expected an array of terms");
  Polynomial<S> p(dim);
  for (const auto& t : j) {
    const auto alpha = t.at("alpha").get<Multi>();
    if (static_cast<int>(alpha.size()) != dim)
      throw std::invalid_argument("poly_from_json: exponent dimension mismatch");
    p.add_term(alpha, scalar_from_json<S>(t));
  }
  return p;
}

template <class S>
njson series_to_json(const Series<S>& s) {
  njson coeffs = njson::array();
  for (const auto& [o2, c] : s.coeffs()) {
    njson e = scalar_to_json(c);
    e["order2"] = o2;
    coeffs.push_back(std::move(e));
  }
  njson out;
  out["coeffs"] = std::move(coeffs);
  if (s.trunc2() != kInfOrder2) out["trunc2"] = s.trunc2();
  return out;
}

template <class S>
njson poly_series_to_json(const Series<Polynomial<S>>& s) {
  njson coeffs = njson::array();
  for (const auto& [o2, p] : s.coeffs())
    coeffs.push_back(njson{{"order2", o2}, {"poly", poly_to_json(p)}});
  njson out;
  out["coeffs"] = std::move(coeffs);
  if (s.trunc2() != kInfOrder2) out["trunc2"] = s.trunc2();
  return out;
}

template <class S>
njson mat_to_json(const Mat<S>& m) {
  njson rows = njson::array();
  for (int i = 0; i < m.rows(); ++i) {
    njson row = njson::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(scalar_to_json(m.at(i, j)));
    rows.push_back(std::move(row));
  }
  return rows;
}

template <class S>
Mat<S> mat_from_json(const njson& j) {
  if (!j.is_array() || j.empty()) throw std::invalid_argument("mat_from_json: expected rows");
  const int r = static_cast<int>(j.size());
  const int c = static_cast<int>(j.at(0).size());
  Mat<S> m(r, c, scalar_ops<S>::zero());
  for (int i = 0; i < r; ++i) {
    if (static_cast<int>(j.at(static_cast<size_t>(i)).size()) != c)
      throw std::invalid_argument("mat_from_json: ragged rows");
    for (int k = 0; k < c; ++k)
      m.at(i, k) = scalar_from_json<S>(j.at(static_cast<size_t>(i)).at(static_cast<size_t>(k)));
  }
  return m;
}

template <class S>
njson model_to_json(const LatticeModel<S>& m) {
  njson hops = njson::array();
  for (const auto& h : m.hops) {
    njson orders = njson::array();
    for (const auto& p : h.orders) orders.push_back(poly_to_json(p));
    hops.push_back(njson{{"eta", h.eta}, {"orders", std::move(orders)}});
  }
  njson potential = njson::array();
  for (const auto& p : m.potential) potential.push_back(poly_to_json(p));
  njson out{{"d", m.d}, {"hops", std::move(hops)}, {"potential", std::move(potential)}};
  if (m.C) out["C"] = mat_to_json(*m.C);
  return out;
}

template <class S>
LatticeModel<S> model_from_json(const njson& j) {
  LatticeModel<S> m;
  m.d = j.at("d").get<int>();
  if (m.d < 1) throw std::invalid_argument("model_from_json: dimension must be positive");
  for (const auto& hj : j.at("hops")) {
    Hop<S> h;
    h.eta = hj.at("eta").get<std::vector<long>>();
    if (static_cast<int>(h.eta.size()) != m.d)
      throw std::invalid_argument("model_from_json: hop offset dimension mismatch");
    for (const auto& oj : hj.at("orders")) h.orders.push_back(poly_from_json<S>(oj, m.d));
    m.hops.push_back(std::move(h));
  }
  for (const auto& pj : j.at("potential")) m.potential.push_back(poly_from_json<S>(pj, m.d));
  if (j.contains("C")) m.C = mat_from_json<S>(j.at("C"));
  return m;
}

}  // namespace latwkb
