#include <doctest.h>

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "hbdm/error.hpp"
#include "hbdm/scenario.hpp"

using namespace hbdm;
using nlohmann::json;

namespace {

json minimal() {
  return json::parse(R"({
    "schema_version": 1,
    "name": "t",
    "seed": 7,
    "dimension": 1,
    "particles": 2,
    "foliation": {"type": "wedge", "a": 0.5, "v": 0.0, "c": 0.8660254037844386},
    "wavefunction": {
      "masses": [1.0, 1.0],
      "terms": [
        {"particles": [[{"k": 0.8}, {"k": -0.3, "amplitude": [0.4, 0.2]}], [{"k": -0.6}]]},
        {"coefficient": [0.3, 0.7], "particles": [[{"k": -1.2}], [{"k": 1.3}]]}
      ]
    },
    "run": {"type": "check-current-condition", "points": 10,
            "pushforward": {"points": 10, "side_gap_points": 4}}
  })");
}

std::string config_error_of(const json& j) {
  try {
    (void)parse_scenario(j.dump());
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ConfigError);
    return e.what();
  }
  FAIL("expected a ConfigError");
  return {};
}

bool contains(const std::string& s, const std::string& part) { return s.find(part) != std::string::npos; }

const std::string& output(const ScenarioResult& r, const std::string& name) {
  for (const auto& f : r.outputs)
    if (f.name == name) return f.contents;
  FAIL("missing output " << name);
  static const std::string empty;
  return empty;
}

}  // namespace

TEST_SUITE("scenario") {

TEST_CASE("a valid config parses") {
  const auto sc = parse_scenario(minimal().dump());
  CHECK(sc.name == "t");
  CHECK(sc.run == RunType::CheckCurrentCondition);
  CHECK(sc.particles == 2);
  CHECK(sc.output_dir == "out/t");
  CHECK(build_wavefunction(sc).particle_count() == 2);
  CHECK(build_foliation(sc)->kink_count() == 1);
}

TEST_CASE("errors name the offending field") {
  auto j = minimal();
  j["wavefunction"].erase("masses");
  CHECK(contains(config_error_of(j), "'wavefunction.masses': missing"));

  j = minimal();
  j["wavefunction"]["masses"] = {1.0};
  CHECK(contains(config_error_of(j), "wavefunction.masses"));

  j = minimal();
  j["foliation"]["slope"] = 0.1;
  CHECK(contains(config_error_of(j), "'foliation.slope': unknown field"));

  j = minimal();
  j["schema_version"] = 2;
  CHECK(contains(config_error_of(j), "schema_version"));

  j = minimal();
  j["foliation"]["a"] = 1.5;
  CHECK(contains(config_error_of(j), "'foliation'"));

  j = minimal();
  j["wavefunction"]["terms"][0]["particles"][1][0]["k"] = "fast";
  CHECK(contains(config_error_of(j), "wavefunction.terms[0].particles[1][0].k"));

  j = minimal();
  j["run"]["type"] = "teleport";
  CHECK(contains(config_error_of(j), "run.type"));
}

TEST_CASE("syntax errors report the line") {
  try {
    (void)parse_scenario("{\n  \"name\": \"x\",\n  oops\n}");
    FAIL("expected a ConfigError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ConfigError);
    CHECK(contains(e.what(), "line 3"));
  }
}

TEST_CASE("inconsistent dimension and module combinations are rejected") {
  auto j = minimal();
  j["run"] = {{"type", "slater-demo"}};
  CHECK(contains(config_error_of(j), "dimension"));

  j = minimal();
  j["dimension"] = 3;
  CHECK(contains(config_error_of(j), "dimension 1 only"));

  j = minimal();
  j["foliation"] = json::parse(R"({"type": "dn0", "initial": {"type": "wedge", "a": 0.5},
                                   "s_grid": [0.5], "x_grid": {"lo": -1, "hi": 1, "n": 5}})");
  j["dimension"] = 3;
  j["run"] = {{"type", "foliation-export"}, {"s_grid", {0.5}}, {"x_grid", {0.0}}};
  CHECK(contains(config_error_of(j), "dimension"));

  j = minimal();
  j["foliation"] = {{"type", "wedge3"}, {"random", true}};
  CHECK(contains(config_error_of(j), "slater-demo"));
}

TEST_CASE("run results are deterministic and the manifest lists every output") {
  const auto sc = parse_scenario(minimal().dump());
  RunSettings settings;
  const auto a = run_scenario(sc, settings);
  const auto b = run_scenario(sc, settings);
  REQUIRE(a.outputs.size() == b.outputs.size());
  for (std::size_t i = 0; i < a.outputs.size(); ++i) CHECK(a.outputs[i].contents == b.outputs[i].contents);
  CHECK(a.passed);
  CHECK(exit_status(a) == 0);
  const auto manifest = json::parse(output(a, "manifest.json"));
  CHECK(manifest["seed"] == 7);
  CHECK(manifest["scenario"]["run"] == "check-current-condition");
  CHECK(manifest["outputs"].size() == a.outputs.size() - 1);
  CHECK(manifest["passed"] == true);
  CHECK(contains(manifest["scenario"]["hash"].get<std::string>(), "fnv1a64:"));

  settings.seed = 99;
  const auto c = run_scenario(sc, settings);
  CHECK(output(c, "current_condition.csv") != output(a, "current_condition.csv"));
}

TEST_CASE("ensemble outputs do not depend on the thread count") {
  auto j = minimal();
  j["foliation"] = {{"type", "flat"}};
  j["wavefunction"] = json::parse(R"({"masses": [1.0, 1.0], "terms": [
      {"particles": [[{"packet": {"center": -1, "momentum": 1, "width": 0.8, "period": 30}}],
                     [{"packet": {"center": 1, "momentum": -1, "width": 0.8, "period": 30}}]]}]})");
  j["run"] = json::parse(R"({"type": "equivariance", "s0": 0, "targets": [0.5], "M": 300,
      "window": {"lo": [-5, -5], "hi": [5, 5]}, "reference": {"lo": [-15, -15], "hi": [15, 15]},
      "joint_bins": 5, "marginal_bins": 10, "quadrature": 40})");
  const auto sc = parse_scenario(j.dump());
  RunSettings one;
  RunSettings four;
  four.threads = 4;
  const auto a = run_scenario(sc, one);
  const auto b = run_scenario(sc, four);
  REQUIRE(a.outputs.size() == b.outputs.size());
  for (std::size_t i = 0; i < a.outputs.size(); ++i) CHECK(a.outputs[i].contents == b.outputs[i].contents);
}

TEST_CASE("bundled scenarios parse") {
  int n = 0;
  for (const auto& entry : std::filesystem::directory_iterator(HBDM_SCENARIO_DIR)) {
    if (entry.path().extension() != ".json") continue;
    CAPTURE(entry.path().string());
    CHECK_NOTHROW((void)load_scenario(entry.path().string()));
    ++n;
  }
  CHECK(n >= 10);
}

TEST_CASE("simulate run reports kink structure") {
  auto j = minimal();
  j["run"] = json::parse(R"({"type": "simulate", "s0": 0, "s1": 2.5,
      "starts": [[-0.4, 0.9], [0.7, -1.1], [-1.3, -0.2]],
      "checks": {"own_jump_max": 1e-9, "reversibility_factor": 10}})");
  const auto r = run_scenario(parse_scenario(j.dump()), {});
  CHECK(r.passed);
  CHECK(contains(output(r, "trajectory_0000.csv"), "s,q_1,q_2,v_1,v_2,event_flag"));
  CHECK(contains(output(r, "events.csv"), "s_star,slot,dv_1,dv_2"));
}

TEST_CASE("slater demo scenario") {
  const auto sc = load_scenario(std::string(HBDM_SCENARIO_DIR) + "/slater_demo.json");
  CHECK(sc.dimension == 3);
  RunSettings settings;
  const auto r = run_scenario(sc, settings);
  CHECK(r.passed);
  const auto rep = json::parse(output(r, "slater_report.json"));
  REQUIRE(rep["reports"].size() == 100);
  const auto& first = rep["reports"][0];
  for (const char* key : {"x", "j_L", "j_R", "mismatch_geometric", "n_K_star", "sign_left", "sign_right"})
    CHECK(first.contains(key));
  CHECK(first["sign_left"].get<int>() == -first["sign_right"].get<int>());
}

}  // TEST_SUITE
