// latwkb — asymptotic eigenvalue expansions for lattice Schrodinger operators
// and their verification against direct diagonalization.
//
// Subcommands run the pipeline up to a stage and write that stage's artifacts
// into the output directory:
//
//   validate    check the model hypotheses
//   eikonal     phase jet and glued global phase        -> eikonal.json
//   expand      conjugated operator expansion           -> gk.json
//   spectrum    eigenvalue pencils for the low levels   -> spectrum.json
//   quasimode   polynomial amplitudes of one level      -> quasimode.json
//   verify      lattice diagonalization comparison      -> verify.csv
//   all         alias for verify (runs everything)
//
// Every run also writes summary.json and config.resolved.json.  Exit codes:
// 0 success, 2 model validation failure, 3 numeric failure, 4 config error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "latwkb/pipeline.hpp"

namespace fs = std::filesystem;

namespace {

struct CliOverrides {
  std::string config_path;
  std::string model;
  std::string out_dir;
  std::string mode;
  std::vector<double> eps_grid;
  std::optional<int> phase_degree, expansion_order, spectrum_order, quasimode_order;
  std::optional<int> level_index;
  std::optional<double> level_energy;
  std::optional<double> box_L;
  std::vector<double> box_offset;
};

int fail_config(const std::string& msg) {
  latwkb::njson err{{"error", {{"stage", "config"}, {"message", msg}}}, {"ok", false}};
  std::cerr << err.dump(2) << '\n';
  return 4;
}

int run(const std::string& stage_name, const CliOverrides& ov) {
  auto stage = latwkb::stage_from_name(stage_name);
  if (!stage) return fail_config("unknown stage: " + stage_name);

  latwkb::njson cfg_json = latwkb::njson::object();
  if (!ov.config_path.empty()) {
    std::ifstream in(ov.config_path);
    if (!in) return fail_config("cannot open config file: " + ov.config_path);
    try {
      in >> cfg_json;
    } catch (const std::exception& ex) {
      return fail_config(std::string("config parse error: ") + ex.what());
    }
  }

  latwkb::RunConfig cfg;
  try {
    cfg = latwkb::config_from_json(cfg_json);
  } catch (const std::exception& ex) {
    return fail_config(std::string("config error: ") + ex.what());
  }

  if (!ov.model.empty()) cfg.model_path = ov.model;
  if (!ov.out_dir.empty()) cfg.out_dir = ov.out_dir;
  if (!ov.mode.empty()) cfg.mode = ov.mode;
  if (!ov.eps_grid.empty()) cfg.eps_grid = ov.eps_grid;
  if (ov.phase_degree) cfg.phase_degree = *ov.phase_degree;
  if (ov.expansion_order) cfg.expansion_order = *ov.expansion_order;
  if (ov.spectrum_order) cfg.spectrum_order = *ov.spectrum_order;
  if (ov.quasimode_order) cfg.quasimode_order = *ov.quasimode_order;
  if (ov.level_index) cfg.level_index = *ov.level_index;
  if (ov.level_energy) cfg.level_energy = *ov.level_energy;
  if (ov.box_L) cfg.box_L = *ov.box_L;
  if (!ov.box_offset.empty()) cfg.box_offset_eps = ov.box_offset;

  if (cfg.model_path.empty()) return fail_config("no model file given (--model or config \"model\")");

  latwkb::njson model_json;
  {
    std::ifstream in(cfg.model_path);
    if (!in) return fail_config("cannot open model file: " + cfg.model_path);
    try {
      in >> model_json;
    } catch (const std::exception& ex) {
      return fail_config(std::string("model parse error: ") + ex.what());
    }
  }

  latwkb::PipelineOutput out;
  try {
    cfg.normalize();
    if (cfg.mode == "float")
      out = latwkb::run_pipeline<double>(cfg, *stage, model_json);
    else
      out = latwkb::run_pipeline<latwkb::Rat>(cfg, *stage, model_json);
  } catch (const std::invalid_argument& ex) {
    return fail_config(ex.what());
  } catch (const std::exception& ex) {
    latwkb::njson err{{"error", {{"stage", stage_name}, {"message", ex.what()}}}, {"ok", false}};
    std::cerr << err.dump(2) << '\n';
    return 3;
  }

  std::error_code ec;
  fs::create_directories(cfg.out_dir, ec);
  if (ec) return fail_config("cannot create output directory: " + cfg.out_dir);

  out.files["config.resolved.json"] = latwkb::config_to_json(cfg);
  for (const auto& [name, body] : out.files) {
    std::ofstream f(fs::path(cfg.out_dir) / name, std::ios::binary);
    f << body.dump(2) << '\n';
    if (!f) return fail_config("cannot write artifact: " + name);
  }
  for (const auto& [name, body] : out.texts) {
    std::ofstream f(fs::path(cfg.out_dir) / name, std::ios::binary);
    f << body;
    if (!f) return fail_config("cannot write artifact: " + name);
  }
  for (const auto& line : out.log) std::cout << line << '\n';
  if (out.exit_code != 0 && out.files.count("summary.json"))
    std::cerr << out.files.at("summary.json").dump(2) << '\n';
  return out.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"asymptotic eigenvalue expansions for lattice Schrodinger operators"};
  app.require_subcommand(1);

  CliOverrides ov;
  std::string stage_name;
  const std::vector<std::string> stages = {"validate", "eikonal",   "expand", "spectrum",
                                           "quasimode", "verify",   "all"};
  const std::vector<std::string> help = {
      "check the model hypotheses",
      "solve for the phase and glue it globally",
      "conjugated operator expansion",
      "eigenvalue series for the low-lying levels",
      "polynomial quasimode amplitudes for one level",
      "compare against direct lattice diagonalization",
      "run every stage",
  };
  for (size_t i = 0; i < stages.size(); ++i) {
    auto* sub = app.add_subcommand(stages[i], help[i]);
    sub->add_option("-c,--config", ov.config_path, "JSON run configuration");
    sub->add_option("-m,--model", ov.model, "model JSON file (overrides config)");
    sub->add_option("-o,--out", ov.out_dir, "output directory (overrides config)");
    sub->add_option("--mode", ov.mode, "arithmetic mode: exact or float")
        ->check(CLI::IsMember({"exact", "float"}));
    sub->add_option("--eps-grid", ov.eps_grid, "lattice spacings for verification")
        ->delimiter(',');
    sub->add_option("--phase-degree", ov.phase_degree, "Taylor degree of the phase jet");
    sub->add_option("--expansion-order", ov.expansion_order, "integer orders in the expansion");
    sub->add_option("--spectrum-order", ov.spectrum_order, "integer orders in eigenvalue series");
    sub->add_option("--quasimode-order", ov.quasimode_order, "integer orders in quasimodes");
    sub->add_option("--level-index", ov.level_index, "harmonic level to expand (by position)");
    sub->add_option("--level-energy", ov.level_energy, "harmonic level to expand (by energy)");
    sub->add_option("--box-L", ov.box_L, "half-width of the verification box");
    sub->add_option("--box-offset", ov.box_offset, "per-axis box offset in units of eps");
    sub->callback([&stage_name, name = stages[i]]() { stage_name = name; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 4;
  }

  return run(stage_name, ov);
}
