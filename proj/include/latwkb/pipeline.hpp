#pragma once

// Batch pipeline behind the command-line tool: configuration, stage chaining
// (validate -> eikonal -> expand -> spectrum -> quasimode -> verify), and the
// JSON/CSV artifacts each stage produces.  Exit codes: 0 success, 2 model
// validation failure, 3 numeric failure, 4 configuration error.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "latwkb/conjugation.hpp"
#include "latwkb/eikonal.hpp"
#include "latwkb/hermite.hpp"
#include "latwkb/json_io.hpp"
#include "latwkb/model.hpp"
#include "latwkb/quasimode.hpp"
#include "latwkb/spectral.hpp"

namespace latwkb {

enum class Stage { validate = 0, eikonal, expand, spectrum, quasimode, verify };

inline std::optional<Stage> stage_from_name(const std::string& name) {
  if (name == "validate") return Stage::validate;
  if (name == "eikonal") return Stage::eikonal;
  if (name == "expand") return Stage::expand;
  if (name == "spectrum") return Stage::spectrum;
  if (name == "quasimode") return Stage::quasimode;
  if (name == "verify" || name == "all") return Stage::verify;
  return std::nullopt;
}

struct RunConfig {
  std::string model_path;
  std::string mode = "exact";  // "exact" or "float"

  int phase_degree = 8;      // highest Taylor degree of the phase jet
  int expansion_order = 2;   // integer orders kept in the conjugated expansion
  int spectrum_order = 2;    // integer orders of the eigenvalue series
  int quasimode_order = 2;   // integer orders kept in sampled quasimodes
  int expansion_degree = 0;  // polynomial window of the expansion (0 = auto)

  int n_levels = 3;
  int level_index = 0;
  std::optional<double> level_energy;

  double glue_r_in = 0.8;
  double glue_r_out = 1.1;
  std::optional<double> glue_b;
  double cut_in = 0.5;
  double cut_out = 0.75;

  double box_L = 1.2;
  std::vector<double> box_offset_eps;  // per-axis offset in units of eps
  std::vector<double> eps_grid{0.04, 0.02, 0.01};
  int n_extra_eigs = 2;

  std::string out_dir = "out";
  unsigned long seed = 0;

  std::optional<double> check_eig_slope;
  std::optional<double> check_residual_slope;
  std::optional<double> check_gram_offdiag;

  std::vector<std::string> notices;

  int n2_expand() const { return 2 * expansion_order; }
  int n2_spectrum() const { return 2 * spectrum_order; }
  int m2_quasimode() const { return 2 * quasimode_order; }

  // Enforce order compatibility, raising upstream truncations when a later
  // stage asks for more than the earlier ones provide.
  void normalize() {
    if (mode != "exact" && mode != "float")
      throw std::invalid_argument("config: mode must be \"exact\" or \"float\"");
    if (spectrum_order < 0 || expansion_order < 0 || quasimode_order < 0 || phase_degree < 2)
      throw std::invalid_argument("config: orders must be nonnegative (phase degree >= 2)");
    if (quasimode_order > spectrum_order) {
      spectrum_order = quasimode_order;
      notices.push_back("spectrum order raised to the quasimode order " +
                        std::to_string(spectrum_order));
    }
    if (spectrum_order > expansion_order) {
      expansion_order = spectrum_order;
      notices.push_back("expansion order raised to the spectrum order " +
                        std::to_string(expansion_order));
    }
    if (phase_degree < 2 * expansion_order + 2) {
      phase_degree = 2 * expansion_order + 2;
      notices.push_back("phase degree raised to " + std::to_string(phase_degree) +
                        " to support the expansion order");
    }
    if (!(0.0 < glue_r_in && glue_r_in < glue_r_out))
      throw std::invalid_argument("config: need 0 < glue.r_in < glue.r_out");
    if (!(0.0 < cut_in && cut_in < cut_out))
      throw std::invalid_argument("config: need 0 < cutoff.inner < cutoff.outer");
    if (cut_out > glue_r_in)
      throw std::invalid_argument("config: cutoff.outer must not exceed glue.r_in");
    if (eps_grid.empty()) throw std::invalid_argument("config: eps grid is empty");
    for (double e : eps_grid)
      if (!(e > 0.0)) throw std::invalid_argument("config: eps grid entries must be positive");
    if (!(box_L > 0.0)) throw std::invalid_argument("config: box half-width must be positive");
    if (n_levels < 1) throw std::invalid_argument("config: need at least one level");
    if (level_index < 0) throw std::invalid_argument("config: level index must be nonnegative");
  }
};

inline RunConfig config_from_json(const njson& j) {
  RunConfig c;
  auto get = [&j](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("model", c.model_path);
  get("mode", c.mode);
  if (j.contains("orders")) {
    const auto& o = j.at("orders");
    auto geto = [&o](const char* key, int& field) {
      if (o.contains(key)) field = o.at(key).get<int>();
    };
    geto("phase_degree", c.phase_degree);
    geto("expansion", c.expansion_order);
    geto("spectrum", c.spectrum_order);
    geto("quasimode", c.quasimode_order);
    geto("expansion_degree", c.expansion_degree);
  }
  get("n_levels", c.n_levels);
  if (j.contains("level")) {
    const auto& l = j.at("level");
    if (l.contains("index")) c.level_index = l.at("index").get<int>();
    if (l.contains("energy")) c.level_energy = l.at("energy").get<double>();
  }
  if (j.contains("glue")) {
    const auto& g = j.at("glue");
    if (g.contains("r_in")) c.glue_r_in = g.at("r_in").get<double>();
    if (g.contains("r_out")) c.glue_r_out = g.at("r_out").get<double>();
    if (g.contains("b")) c.glue_b = g.at("b").get<double>();
  }
  if (j.contains("cutoff")) {
    const auto& k = j.at("cutoff");
    if (k.contains("inner")) c.cut_in = k.at("inner").get<double>();
    if (k.contains("outer")) c.cut_out = k.at("outer").get<double>();
  }
  if (j.contains("box")) {
    const auto& b = j.at("box");
    if (b.contains("L")) c.box_L = b.at("L").get<double>();
    if (b.contains("offset_eps")) c.box_offset_eps = b.at("offset_eps").get<std::vector<double>>();
  }
  get("eps_grid", c.eps_grid);
  get("n_extra_eigs", c.n_extra_eigs);
  get("out_dir", c.out_dir);
  get("seed", c.seed);
  if (j.contains("checks")) {
    const auto& ch = j.at("checks");
    if (ch.contains("eig_slope_min")) c.check_eig_slope = ch.at("eig_slope_min").get<double>();
    if (ch.contains("residual_slope_min"))
      c.check_residual_slope = ch.at("residual_slope_min").get<double>();
    if (ch.contains("gram_offdiag_max"))
      c.check_gram_offdiag = ch.at("gram_offdiag_max").get<double>();
  }
  return c;
}

inline njson config_to_json(const RunConfig& c) {
  njson j;
  j["model"] = c.model_path;
  j["mode"] = c.mode;
  j["orders"] = {{"phase_degree", c.phase_degree},
                 {"expansion", c.expansion_order},
                 {"spectrum", c.spectrum_order},
                 {"quasimode", c.quasimode_order},
                 {"expansion_degree", c.expansion_degree}};
  j["n_levels"] = c.n_levels;
  njson lvl;
  lvl["index"] = c.level_index;
  if (c.level_energy) lvl["energy"] = *c.level_energy;
  j["level"] = lvl;
  njson glue{{"r_in", c.glue_r_in}, {"r_out", c.glue_r_out}};
  if (c.glue_b) glue["b"] = *c.glue_b;
  j["glue"] = glue;
  j["cutoff"] = {{"inner", c.cut_in}, {"outer", c.cut_out}};
  njson box{{"L", c.box_L}};
  if (!c.box_offset_eps.empty()) box["offset_eps"] = c.box_offset_eps;
  j["box"] = box;
  j["eps_grid"] = c.eps_grid;
  j["n_extra_eigs"] = c.n_extra_eigs;
  j["out_dir"] = c.out_dir;
  j["seed"] = c.seed;
  njson checks;
  if (c.check_eig_slope) checks["eig_slope_min"] = *c.check_eig_slope;
  if (c.check_residual_slope) checks["residual_slope_min"] = *c.check_residual_slope;
  if (c.check_gram_offdiag) checks["gram_offdiag_max"] = *c.check_gram_offdiag;
  if (!checks.is_null()) j["checks"] = checks;
  if (!c.notices.empty()) j["notices"] = c.notices;
  return j;
}

struct PipelineOutput {
  int exit_code = 0;
  std::map<std::string, njson> files;        // artifact name -> JSON body
  std::map<std::string, std::string> texts;  // artifact name -> raw body (CSV)
  std::vector<std::string> log;              // human-readable progress lines
};

namespace detail {

inline std::string fmt_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

template <class S>
njson validation_to_json(const ValidationReport& rep) {
  njson checks = njson::array();
  for (const auto& [name, passed] : rep.checks) checks.push_back({{"name", name}, {"passed", passed}});
  return njson{{"ok", rep.ok}, {"checks", checks}, {"messages", rep.messages}};
}

}  // namespace detail

// Full pipeline driver.  Stages run in order up to `last`; every stage that
// runs contributes its artifact.  Errors are recorded in summary.json and
// mapped to exit codes by provenance: configuration and model-shape problems
// give 4, failed validation gives 2, numeric breakdowns give 3.

template <class S>
PipelineOutput run_pipeline(RunConfig cfg, Stage last, const njson& model_json) {
  PipelineOutput out;
  njson summary;
  cfg.normalize();
  summary["stages"] = njson::array();

  auto fail = [&](int code, const std::string& stage, const std::string& what) {
    summary["error"] = {{"stage", stage}, {"message", what}};
    summary["ok"] = false;
    summary["config"] = config_to_json(cfg);
    out.files["summary.json"] = summary;
    out.exit_code = code;
    out.log.push_back(stage + ": " + what);
    return out;
  };

  // ---- load + validate -----------------------------------------------------
  LatticeModel<S> input;
  try {
    input = model_from_json<S>(model_json);
  } catch (const std::exception& ex) {
    return fail(4, "load", ex.what());
  }

  ValidationReport rep = validate(input);
  summary["validate"] = detail::validation_to_json<S>(rep);
  summary["stages"].push_back("validate");
  out.log.push_back(std::string("validate: ") + (rep.ok ? "ok" : "FAILED"));
  if (!rep.ok) return fail(2, "validate", "model violates the standing hypotheses");
  if (last == Stage::validate) {
    summary["ok"] = true;
    summary["config"] = config_to_json(cfg);
    out.files["summary.json"] = summary;
    return out;
  }

  // ---- normal form ---------------------------------------------------------
  NormalForm<S> nf;
  try {
    nf = normal_form(input);
  } catch (const std::exception& ex) {
    return fail(4, "normal_form", ex.what());
  }
  {
    njson nfj;
    njson lam = njson::array();
    for (const auto& l : nf.lambda) lam.push_back(scalar_to_json(l));
    njson lamd = njson::array();
    for (const auto& l : nf.lambda) lamd.push_back(scalar_ops<S>::to_double(l));
    nfj["lambda"] = lam;
    nfj["lambda_float"] = lamd;
    nfj["notes"] = nf.notes;
    summary["normal_form"] = nfj;
  }

  const int n2 = cfg.n2_expand();
  const int n2s = cfg.n2_spectrum();

  // ---- levels (needed to size the expansion window) --------------------------
  std::vector<HarmonicLevel<S>> levels;
  int selected = cfg.level_index;
  try {
    const S shift = level_shift(nf.model);
    levels = harmonic_levels(nf.lambda, shift, std::max(cfg.n_levels, cfg.level_index + 1));
    if (cfg.level_energy) {
      selected = -1;
      for (size_t i = 0; i < levels.size(); ++i)
        if (std::fabs(levels[i].E_d - *cfg.level_energy) <= 1e-6 * (1.0 + std::fabs(*cfg.level_energy)))
          selected = static_cast<int>(i);
      if (selected < 0)
        throw std::invalid_argument("no harmonic level within tolerance of the requested energy");
    }
    if (selected >= static_cast<int>(levels.size()))
      throw std::invalid_argument("level index beyond the enumerated levels");
  } catch (const std::exception& ex) {
    return fail(4, "levels", ex.what());
  }
  int max_level_deg = 0;
  for (const auto& lvl : levels)
    for (const auto& a : lvl.alphas) max_level_deg = std::max(max_level_deg, multi_degree(a));

  // ---- eikonal ---------------------------------------------------------------
  EikonalSolution<S> sol;
  GluedPhase<S> glued;
  try {
    sol = solve_eikonal(nf.model, cfg.phase_degree - 2);
    glued = glue_phase(sol, cfg.glue_r_in, cfg.glue_r_out, cfg.glue_b);
  } catch (const std::exception& ex) {
    return fail(3, "eikonal", ex.what());
  }
  {
    njson ej;
    njson lam = njson::array();
    for (const auto& l : sol.lambda) lam.push_back(scalar_to_json(l));
    ej["lambda"] = lam;
    njson pieces = njson::array();
    for (size_t k = 0; k < sol.pieces.size(); ++k)
      pieces.push_back(njson{{"k", k}, {"degree", k + 2}, {"poly", poly_to_json(sol.pieces[k])}});
    ej["pieces"] = pieces;
    ej["glue"] = {{"r_in", glued.r_in},
                  {"r_out", glued.r_out},
                  {"b", glued.b},
                  {"monotone_on_grid", glued.monotone_on_grid},
                  {"notes", glued.notes}};
    out.files["eikonal.json"] = ej;
  }
  summary["stages"].push_back("eikonal");
  out.log.push_back("eikonal: jet degree " + std::to_string(cfg.phase_degree));
  if (last == Stage::eikonal) {
    summary["ok"] = true;
    summary["config"] = config_to_json(cfg);
    out.files["summary.json"] = summary;
    return out;
  }

  // ---- conjugated expansion --------------------------------------------------
  int D = std::max({cfg.expansion_degree, 2 * n2 + 4, max_level_deg + n2});
  if (cfg.expansion_degree != 0 && D != cfg.expansion_degree)
    cfg.notices.push_back("expansion window raised to degree " + std::to_string(D));
  ConjugatedExpansion<S> expn;
  try {
    expn = conjugate_expand(nf.model, sol, n2, D);
    njson gj;
    gj["n2"] = n2;
    gj["validity_degree"] = D;
    njson ops = njson::array();
    for (int k2 = 0; k2 <= n2; ++k2) {
      DiffOperator<S> op = gk_as_diffop(expn, k2);
      njson terms = njson::array();
      for (const auto& [alpha, coeff] : op.b)
        terms.push_back(njson{{"deriv", alpha}, {"coeff", poly_to_json(coeff)}});
      ops.push_back(njson{{"k2", k2}, {"terms", terms}, {"notes", op.notes}});
    }
    gj["operators"] = ops;
    out.files["gk.json"] = gj;
  } catch (const std::exception& ex) {
    return fail(3, "expand", ex.what());
  }
  summary["stages"].push_back("expand");
  out.log.push_back("expand: " + std::to_string(n2) + " half-orders, window degree " +
                    std::to_string(D));
  if (last == Stage::expand) {
    summary["ok"] = true;
    summary["config"] = config_to_json(cfg);
    out.files["summary.json"] = summary;
    return out;
  }

  // ---- spectrum ----------------------------------------------------------------
  HermiteBasis<S> basis(sol.lambda);
  SpectralSetup<S> setup(expn, basis);
  WeightExpansion<S> weight;
  std::vector<std::vector<PencilBranch<S>>> level_branches;
  std::vector<PencilSeries<S>> level_pencils;
  try {
    weight = weight_expansion(sol, n2s);
    for (const auto& lvl : levels) {
      auto pencil = build_pencil(setup, lvl, weight, n2s);
      level_branches.push_back(pencil_eigen(pencil, n2s));
      level_pencils.push_back(std::move(pencil));
    }
  } catch (const std::exception& ex) {
    return fail(3, "spectrum", ex.what());
  }
  {
    njson sj;
    sj["shift"] = scalar_to_json(setup.shift());
    sj["selected_level"] = selected;
    njson lvls = njson::array();
    for (size_t i = 0; i < levels.size(); ++i) {
      njson lj;
      lj["E"] = scalar_to_json(levels[i].E);
      lj["E_float"] = levels[i].E_d;
      lj["alphas"] = levels[i].alphas;
      njson brs = njson::array();
      for (const auto& b : level_branches[i]) {
        njson bj;
        bj["multiplicity"] = b.multiplicity;
        bj["fully_resolved"] = b.fully_resolved;
        bj["exact_arithmetic"] = b.exact;
        bj["notes"] = b.notes;
        if (b.exact) bj["value"] = series_to_json(b.value);
        njson vf = njson::array();
        for (const auto& [o2, c] : b.value_f.coeffs())
          vf.push_back(njson{{"order2", o2}, {"val", c}});
        bj["value_float"] = vf;
        brs.push_back(std::move(bj));
      }
      lj["branches"] = brs;
      lvls.push_back(std::move(lj));
    }
    sj["levels"] = lvls;
    out.files["spectrum.json"] = sj;
  }
  summary["stages"].push_back("spectrum");
  out.log.push_back("spectrum: " + std::to_string(levels.size()) + " levels through " +
                    std::to_string(n2s) + " half-orders");
  if (last == Stage::spectrum) {
    summary["ok"] = true;
    summary["config"] = config_to_json(cfg);
    out.files["summary.json"] = summary;
    return out;
  }

  // ---- quasimodes of the selected level -----------------------------------------
  std::vector<QuasimodeExpansion> quasimodes;
  std::vector<int> quasimode_branch;  // branch index within the selected level
  try {
    const auto& lvl = levels[static_cast<size_t>(selected)];
    const auto& pencil = level_pencils[static_cast<size_t>(selected)];
    const auto& branches = level_branches[static_cast<size_t>(selected)];
    njson qj;
    qj["level"] = selected;
    njson qbrs = njson::array();
    for (size_t bi = 0; bi < branches.size(); ++bi) {
      const auto& b = branches[bi];
      njson bj;
      bj["branch"] = bi;
      if (!b.exact) {
        bj["skipped"] = "eigenvector series unavailable for the floating-point fallback branch";
        qbrs.push_back(std::move(bj));
        continue;
      }
      auto psi = eigenvector_series(pencil, b);
      auto q = to_x_variables(psi, b.value, lvl.alphas, static_cast<int>(bi));
      njson uj = njson::array();
      for (const auto& [l2, poly] : q.u)
        uj.push_back(njson{{"order2", l2}, {"poly", poly_to_json(poly)}});
      bj["u"] = uj;
      bj["floor2"] = q.floor2();
      njson vf = njson::array();
      for (const auto& [o2, c] : q.value.coeffs()) vf.push_back(njson{{"order2", o2}, {"val", c}});
      bj["value_float"] = vf;
      qbrs.push_back(std::move(bj));
      quasimodes.push_back(std::move(q));
      quasimode_branch.push_back(static_cast<int>(bi));
    }
    qj["branches"] = qbrs;
    out.files["quasimode.json"] = qj;
    if (quasimodes.empty())
      throw std::runtime_error("no branch of the selected level admits an eigenvector series");
  } catch (const std::exception& ex) {
    return fail(3, "quasimode", ex.what());
  }
  summary["stages"].push_back("quasimode");
  out.log.push_back("quasimode: " + std::to_string(quasimodes.size()) + " branch amplitude(s)");
  if (last == Stage::quasimode) {
    summary["ok"] = true;
    summary["config"] = config_to_json(cfg);
    out.files["summary.json"] = summary;
    return out;
  }

  // ---- numeric verification -------------------------------------------------------
  try {
    // The Hamiltonian is assembled from the input model in its own coordinates;
    // quasimodes live in the diagonalizing coordinates y = C x and are sampled
    // through the map.  An identity map is dropped so the 1D fast path stays flat.
    std::optional<Mat<double>> map;
    if (nf.model.C) {
      const auto& C = *nf.model.C;
      Mat<double> Cd(C.rows(), C.cols(), 0.0);
      bool identity = true;
      for (int i = 0; i < C.rows(); ++i)
        for (int j = 0; j < C.cols(); ++j) {
          Cd.at(i, j) = scalar_ops<S>::to_double(C.at(i, j));
          if (std::fabs(Cd.at(i, j) - (i == j ? 1.0 : 0.0)) > 1e-12) identity = false;
        }
      if (!identity) map = std::move(Cd);
    }
    const Mat<double>* map_ptr = map ? &*map : nullptr;

    const auto md = model_to_double(input);
    // Distance (in the diagonalizing coordinates) a single hop can move a
    // sample point; sets the safety margin between mask and cutoff seam.
    double reach = 0.0;
    for (const auto& h : input.hops) {
      double r2 = 0.0;
      if (map_ptr) {
        for (int i = 0; i < map_ptr->rows(); ++i) {
          double yi = 0.0;
          for (int j = 0; j < map_ptr->cols(); ++j) yi += map_ptr->at(i, j) * static_cast<double>(h.eta[static_cast<size_t>(j)]);
          r2 += yi * yi;
        }
      } else {
        for (long e : h.eta) r2 += static_cast<double>(e) * static_cast<double>(e);
      }
      reach = std::max(reach, std::sqrt(r2));
    }
    const auto& lvl = levels[static_cast<size_t>(selected)];

    // The box must contain the cutoff support: the y-ball of radius cut_out
    // pulls back to an ellipsoid whose axis-i extent is cut_out * |row_i(C^-1)|.
    double support_extent = cfg.cut_out;
    if (map_ptr) {
      support_extent = 0.0;
      for (int i = 0; i < nf.C_inv.rows(); ++i) {
        double row2 = 0.0;
        for (int j = 0; j < nf.C_inv.cols(); ++j) {
          const double cij = scalar_ops<S>::to_double(nf.C_inv.at(i, j));
          row2 += cij * cij;
        }
        support_extent = std::max(support_extent, cfg.cut_out * std::sqrt(row2));
      }
    }
    if (cfg.box_L < support_extent)
      throw std::invalid_argument(
          "box half-width " + detail::fmt_double(cfg.box_L) +
          " does not contain the quasimode support (needs at least " +
          detail::fmt_double(support_extent) + "); increase box.L");

    int below = 0;
    for (int i = 0; i < selected; ++i) below += static_cast<int>(levels[static_cast<size_t>(i)].alphas.size());
    const int m = static_cast<int>(lvl.alphas.size());
    const int n_low = below + m + std::max(cfg.n_extra_eigs, 0);

    std::ostringstream csv;
    csv << "eps";
    for (int e = 0; e < n_low; ++e) csv << ",eig_" << e;
    for (size_t q = 0; q < quasimodes.size(); ++q)
      csv << ",series_" << q << ",abs_err_" << q << ",r_global_" << q << ",r_interior_" << q;
    csv << ",gram_dev\n";

    std::vector<std::vector<std::pair<double, double>>> err_pts(quasimodes.size()),
        res_pts(quasimodes.size());
    std::vector<std::pair<double, double>> gram_pts;

    std::vector<double> lambda_d;
    for (const auto& l : sol.lambda) lambda_d.push_back(scalar_ops<S>::to_double(l));

    for (double eps : cfg.eps_grid) {
      std::vector<double> offset;
      if (!cfg.box_offset_eps.empty()) {
        if (static_cast<int>(cfg.box_offset_eps.size()) != input.d)
          throw std::invalid_argument("box offset dimension mismatch");
        for (double o : cfg.box_offset_eps) offset.push_back(o * eps);
      }
      auto box = make_box(input.d, eps, cfg.box_L, offset);
      auto Hm = assemble_hamiltonian(md, eps, box);
      auto eigs = reference_spectrum(Hm, n_low);

      csv << detail::fmt_double(eps);
      for (double e : eigs) csv << ',' << detail::fmt_double(e);

      std::vector<Eigen::VectorXd> vs;
      double gram_dev = 0.0;
      const double mask = cfg.cut_in - reach * eps;
      if (!(mask > 0.0))
        throw std::invalid_argument("interior mask is empty: eps too large for the cutoff");
      for (size_t q = 0; q < quasimodes.size(); ++q) {
        const int m2 = std::min(cfg.m2_quasimode(), quasimodes[q].max2());
        auto v = assemble_quasimode(quasimodes[q], m2, glued, cfg.cut_in, cfg.cut_out, box, eps,
                                    map_ptr);
        const double series = eps * eval_eps(quasimodes[q].value, eps);
        double nearest = eigs.front();
        for (double e : eigs)
          if (std::fabs(e - series) < std::fabs(nearest - series)) nearest = e;
        const double abs_err = std::fabs(nearest - series);
        auto rrep = residual_report(Hm, v, series, box, mask, map_ptr);
        csv << ',' << detail::fmt_double(series) << ',' << detail::fmt_double(abs_err) << ','
            << detail::fmt_double(rrep.r_global) << ',' << detail::fmt_double(rrep.r_interior);
        err_pts[q].emplace_back(eps, abs_err);
        res_pts[q].emplace_back(eps, rrep.r_interior);
        vs.push_back(std::move(v));
      }
      if (vs.size() >= 2) {
        auto grep = gram_report(vs, eps, lambda_d);
        gram_dev = grep.max_offdiag;
        gram_pts.emplace_back(eps, gram_dev);
      }
      csv << ',' << detail::fmt_double(gram_dev) << '\n';
    }
    out.texts["verify.csv"] = csv.str();

    njson vj;
    auto fit_or_note = [](const std::vector<std::pair<double, double>>& pts) -> njson {
      njson f;
      bool positive = pts.size() >= 3;
      for (const auto& [e, v] : pts) positive = positive && v > 0.0;
      if (!positive) {
        f["at_floor"] = true;
        return f;
      }
      auto fit = scaling_fit(pts);
      f["slope"] = fit.slope;
      f["r_squared"] = fit.r_squared;
      f["monotone"] = fit.monotone;
      return f;
    };
    njson slopes = njson::array();
    bool checks_ok = true;
    std::vector<std::string> check_messages;
    for (size_t q = 0; q < quasimodes.size(); ++q) {
      njson sq;
      sq["branch"] = quasimode_branch[q];
      sq["eig_error"] = fit_or_note(err_pts[q]);
      sq["interior_residual"] = fit_or_note(res_pts[q]);
      slopes.push_back(sq);
      if (cfg.check_eig_slope && err_pts[q].size() >= 3) {
        const auto& f = slopes.back()["eig_error"];
        const bool ok = f.contains("at_floor") || f.at("slope").get<double>() >= *cfg.check_eig_slope;
        if (!ok)
          check_messages.push_back("eigenvalue error slope below the configured minimum on branch " +
                                   std::to_string(quasimode_branch[q]));
        checks_ok = checks_ok && ok;
      }
      if (cfg.check_residual_slope && res_pts[q].size() >= 3) {
        const auto& f = slopes.back()["interior_residual"];
        const bool ok = f.contains("at_floor") || f.at("slope").get<double>() >= *cfg.check_residual_slope;
        if (!ok)
          check_messages.push_back("interior residual slope below the configured minimum on branch " +
                                   std::to_string(quasimode_branch[q]));
        checks_ok = checks_ok && ok;
      }
    }
    vj["branch_fits"] = slopes;
    if (!gram_pts.empty()) {
      vj["gram_offdiag"] = fit_or_note(gram_pts);
      if (cfg.check_gram_offdiag) {
        bool ok = true;
        for (const auto& [e, v] : gram_pts) ok = ok && v <= *cfg.check_gram_offdiag;
        if (!ok) check_messages.push_back("normalized Gram off-diagonal above the configured maximum");
        checks_ok = checks_ok && ok;
      }
    }
    vj["checks_ok"] = checks_ok;
    if (!check_messages.empty()) vj["check_messages"] = check_messages;
    summary["verify"] = vj;
    summary["stages"].push_back("verify");
    out.log.push_back(std::string("verify: ") + (checks_ok ? "ok" : "checks FAILED"));
    if (!checks_ok) {
      summary["ok"] = false;
      summary["config"] = config_to_json(cfg);
      out.files["summary.json"] = summary;
      out.exit_code = 3;
      return out;
    }
  } catch (const std::invalid_argument& ex) {
    return fail(4, "verify", ex.what());
  } catch (const std::exception& ex) {
    return fail(3, "verify", ex.what());
  }

  summary["ok"] = true;
  summary["config"] = config_to_json(cfg);
  out.files["summary.json"] = summary;
  return out;
}

}  // namespace latwkb
