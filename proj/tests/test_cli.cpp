// End-to-end checks of the installed command-line binary.  The path to the
// executable arrives in the LATWKB_CLI environment variable (set by CTest);
// every test writes its inputs into a scratch directory and inspects the
// artifacts and exit codes of real subprocess runs.

#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>
#include <unistd.h>

#include <json.hpp>

namespace fs = std::filesystem;
using njson = nlohmann::json;

namespace {

std::string cli_path() {
  const char* p = std::getenv("LATWKB_CLI");
  REQUIRE(p != nullptr);
  return p;
}

fs::path scratch_dir() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() /
             ("latwkb_cli_test_" + std::to_string(static_cast<long>(::getpid())));
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

int run_cli(const std::string& args) {
  const std::string cmd = cli_path() + " " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  REQUIRE(rc != -1);
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -2;
}

void write_reference_model(const fs::path& p) {
  std::ofstream f(p);
  f << R"({
  "d": 1,
  "hops": [
    {"eta": [0], "orders": [[{"alpha": [0], "num": "2", "den": "1"}]]},
    {"eta": [1], "orders": [[{"alpha": [0], "num": "-1", "den": "1"}]]},
    {"eta": [-1], "orders": [[{"alpha": [0], "num": "-1", "den": "1"}]]}
  ],
  "potential": [[{"alpha": [2], "num": "1", "den": "1"}]]
})";
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE(f.good());
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

}  // namespace

TEST_CASE("cli: full run writes every artifact and exits 0") {
  const auto dir = scratch_dir();
  const auto model = dir / "model.json";
  write_reference_model(model);
  const auto out = dir / "run_all";

  const int rc = run_cli("all --model " + model.string() + " --out " + out.string() +
                         " --eps-grid 0.05 --eps-grid 0.035 --eps-grid 0.025");
  CHECK(rc == 0);
  for (const char* name : {"config.resolved.json", "eikonal.json", "gk.json", "spectrum.json",
                           "quasimode.json", "summary.json", "verify.csv"})
    CHECK(fs::exists(out / name));

  // the quartic phase coefficient appears verbatim in the artifact
  auto ej = njson::parse(slurp(out / "eikonal.json"));
  const auto& quartic = ej.at("pieces")[2].at("poly")[0];
  CHECK(quartic.at("alpha") == njson::array({4}));
  CHECK(quartic.at("num").get<std::string>() == "-1");
  CHECK(quartic.at("den").get<std::string>() == "96");

  auto sj = njson::parse(slurp(out / "summary.json"));
  CHECK(sj.at("ok").get<bool>());
  CHECK(sj.at("verify").at("checks_ok").get<bool>());

  // a low requested phase degree still yields the quartic coefficient (the
  // expansion stage raises the jet as needed, with a recorded notice)
  const auto out_low = dir / "run_eik4";
  REQUIRE(run_cli("eikonal --model " + model.string() + " --phase-degree 4 --out " +
                  out_low.string()) == 0);
  auto ej4 = njson::parse(slurp(out_low / "eikonal.json"));
  const auto& q4 = ej4.at("pieces")[2].at("poly")[0];
  CHECK(q4.at("num").get<std::string>() == "-1");
  CHECK(q4.at("den").get<std::string>() == "96");
  auto rj4 = njson::parse(slurp(out_low / "config.resolved.json"));
  CHECK(rj4.at("notices").size() >= 1);
}

TEST_CASE("cli: exact reruns are byte-identical") {
  const auto dir = scratch_dir();
  const auto model = dir / "model.json";
  write_reference_model(model);

  const std::string grid = " --eps-grid 0.05 --eps-grid 0.035";
  const auto out1 = dir / "rerun_a";
  const auto out2 = dir / "rerun_b";
  REQUIRE(run_cli("all --model " + model.string() + " --out " + out1.string() + grid) == 0);
  REQUIRE(run_cli("all --model " + model.string() + " --out " + out2.string() + grid) == 0);
  for (const char* name : {"eikonal.json", "gk.json", "spectrum.json", "quasimode.json",
                           "verify.csv"})
    CHECK(slurp(out1 / name) == slurp(out2 / name));
}

TEST_CASE("cli: config file with flag overrides and recorded notices") {
  const auto dir = scratch_dir();
  const auto model = dir / "model.json";
  write_reference_model(model);
  const auto cfg = dir / "run.json";
  {
    std::ofstream f(cfg);
    njson j{{"model", model.string()},
            {"orders", {{"quasimode", 4}}},
            {"eps_grid", {0.05, 0.035}},
            {"out_dir", (dir / "cfg_default").string()}};
    f << j.dump(2);
  }
  const auto out = dir / "cfg_out";
  REQUIRE(run_cli("spectrum --config " + cfg.string() + " --out " + out.string()) == 0);

  auto rj = njson::parse(slurp(out / "config.resolved.json"));
  // the quasimode order pulls the whole chain up, with notices
  CHECK(rj.at("orders").at("quasimode").get<int>() == 4);
  CHECK(rj.at("orders").at("spectrum").get<int>() == 4);
  CHECK(rj.at("orders").at("expansion").get<int>() == 4);
  CHECK(rj.at("orders").at("phase_degree").get<int>() == 10);
  CHECK(rj.at("notices").size() == 3);
  CHECK(rj.at("out_dir").get<std::string>() == out.string());
}

TEST_CASE("cli: exit codes distinguish config, validation and numeric failures") {
  const auto dir = scratch_dir();
  const auto model = dir / "model.json";
  write_reference_model(model);

  // 4: unusable invocations
  CHECK(run_cli("frobnicate --model " + model.string()) == 4);
  CHECK(run_cli("validate --model " + (dir / "missing.json").string()) == 4);
  CHECK(run_cli("validate") == 4);
  {
    std::ofstream f(dir / "broken.json");
    f << "{ not json";
  }
  CHECK(run_cli("validate --model " + (dir / "broken.json").string()) == 4);

  // 2: a model that violates the standing hypotheses
  {
    std::ofstream f(dir / "irreversible.json");
    f << R"({
  "d": 1,
  "hops": [
    {"eta": [0], "orders": [[{"alpha": [0], "num": "2", "den": "1"}]]},
    {"eta": [1], "orders": [[{"alpha": [0], "num": "-1", "den": "1"}]]},
    {"eta": [-1], "orders": [[{"alpha": [0], "num": "-2", "den": "1"}]]}
  ],
  "potential": [[{"alpha": [2], "num": "1", "den": "1"}]]
})";
  }
  CHECK(run_cli("validate --model " + (dir / "irreversible.json").string() + " --out " +
                (dir / "bad_out").string()) == 2);

  // 3: a numeric check that cannot hold
  const auto cfg = dir / "strict.json";
  {
    std::ofstream f(cfg);
    njson j{{"model", model.string()},
            {"eps_grid", {0.05, 0.035, 0.025}},
            {"checks", {{"residual_slope_min", 99.0}}}};
    f << j.dump(2);
  }
  CHECK(run_cli("verify --config " + cfg.string() + " --out " + (dir / "strict_out").string()) ==
        3);

  // a float-mode run accepts the same rational model file
  CHECK(run_cli("expand --model " + model.string() + " --mode float --out " +
                (dir / "float_out").string()) == 0);
}
