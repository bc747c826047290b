#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "torusflux/harness.hpp"

using namespace torusflux;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("torusflux_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

const char* kSmall = R"(
grid: {dim: 1, n: 64}
scheme: {t_end: 0.05, dt: 1.0e-3, delta: 0.1}
monitor: {stride: 10, h: [0.25, 0.0625]}
)";

}  // namespace

TEST_CASE("minimal config resolves documented defaults") {
  const auto c = parse_config("grid: {dim: 1, n: 64}\nlaw: {kind: isentropic, gamma: 2}\n");
  CHECK(c.base.scheme.epsilon == 0.2);
  CHECK(c.base.scheme.delta == 0.0);
  CHECK(c.base.law.mu == 0.0);
  CHECK(c.base.scheme.m == 11.5);
  CHECK(c.dt_auto);
  CHECK(c.base.scheme.dt == doctest::Approx(cfl_dt_estimate(c.base)));
  CHECK(c.expand().size() == 1);
  CHECK(c.warnings.empty());
}

TEST_CASE("axis list becomes a sweep plan") {
  const auto c = parse_config("sweep:\n  axes:\n    epsilon: [0.4, 0.2, 0.1]\n    h: [0.25, 0.125]\n");
  const auto runs = c.expand();
  REQUIRE(runs.size() == 3);
  CHECK(runs[2].scheme.epsilon == 0.1);
  CHECK(runs[0].monitor.h == std::vector<double>{0.25, 0.125});
  const auto grid2 = parse_config("sweep:\n  axes:\n    delta: [0.1, 0]\n    n_per_axis: [32, 64]\n").expand();
  REQUIRE(grid2.size() == 4);
  CHECK(grid2[1].n == 64);
  CHECK(grid2[1].scheme.delta == 0.1);
  CHECK(grid2[1].scheme.dt == doctest::Approx(grid2[0].scheme.dt / 2));
}

TEST_CASE("inconsistent damping exponent is accepted with a warning") {
  const auto c = parse_config("law: {Gamma: 4}\nscheme: {m: 9}\n");
  REQUIRE(c.warnings.size() == 1);
  CHECK(c.warnings[0].find("5/2 Gamma + 3/2") != std::string::npos);
  CHECK(c.base.scheme.m == 9.0);
}

TEST_CASE("config errors name the line and field") {
  try {
    (void)parse_config("grid: {dim: 1, n: 64}\nscheme:\n  epsilon: 0.2\n  epsilom: 0.1\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.line() == 4);
    CHECK(e.field() == "scheme.epsilom");
  }
  try {
    (void)parse_config("grid:\n  n: many\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.line() == 2);
    CHECK(e.field() == "grid.n");
  }
  CHECK_THROWS_AS(parse_config("sweep:\n  max_runs: 4\n  axes:\n    epsilon: [1, 2, 3]\n    delta: [1, 2]\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("sweep:\n  axes:\n    epsilon: []\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("sweep:\n  axes:\n    gamma: [1]\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("grid: {n: 48}\n"), ConfigError);
}

TEST_CASE("resolved config echo round-trips") {
  const auto c = parse_config(
      "law: {kind: perturbed, gamma: 1.4, Gamma: 3.5, mu: 0.1}\nscheme: {forcing: midpoint, t_end: 0.3}\n"
      "sweep:\n  axes:\n    epsilon: [0.4, 0.2]\noutput: {snapshot_times: [0.1]}\n");
  const std::string once = to_yaml(c);
  const std::string twice = to_yaml(parse_config(once));
  CHECK(once == twice);
  const auto back = parse_config(once);
  CHECK(back.base.law.kind == LawKind::NonMonotonePerturbed);
  CHECK(back.base.scheme.forcing == ForcingMode::Midpoint);
  CHECK(back.axes.size() == 1);
}

TEST_CASE("environment overrides") {
  auto c = parse_config(kSmall);
  setenv("TORUSFLUX_WORKERS", "3", 1);
  setenv("TORUSFLUX_STRIDE", "7", 1);
  apply_env_overrides(c);
  unsetenv("TORUSFLUX_WORKERS");
  unsetenv("TORUSFLUX_STRIDE");
  CHECK(c.workers == 3);
  CHECK(c.base.monitor.stride == 7);
  setenv("TORUSFLUX_WORKERS", "zero", 1);
  CHECK_THROWS_AS(apply_env_overrides(c), ConfigError);
  unsetenv("TORUSFLUX_WORKERS");
}

TEST_CASE("single-point sweep has no pairwise tables") {
  const auto dir = scratch_dir("single");
  const auto rep = run_sweep(parse_config(kSmall), {dir});
  REQUIRE(rep.runs.size() == 1);
  CHECK(rep.runs[0].complete);
  CHECK(rep.pairs.empty());
  CHECK(fs::exists(dir / "config.resolved.yaml"));
  CHECK(fs::exists(dir / "monitors_r000.csv"));
  CHECK(fs::exists(dir / "snapshots" / "r000" / "index.json"));
  CHECK(rep.kernel.size() == 2);
  fs::remove_all(dir);
}

TEST_CASE("empty report writes header-only tables") {
  const auto dir = scratch_dir("empty");
  emit_report(ConvergenceReport{}, dir);
  CHECK(slurp(dir / "kernel_table.csv") == "run,h,value\n");
  CHECK(slurp(dir / "defect_table.csv") == "axis,group,k,value\n");
  CHECK(slurp(dir / "pairwise.csv") == "axis,group,from,to,from_value,to_value,rho_l1,u_l2,order\n");
  CHECK(slurp(dir / "sweep_summary.csv").find('\n') == slurp(dir / "sweep_summary.csv").size() - 1);
  fs::remove_all(dir);
}

TEST_CASE("identical runs differ by exactly zero") {
  const auto dir = scratch_dir("identical");
  auto c = parse_config(std::string(kSmall) + "sweep:\n  axes:\n    epsilon: [0.2, 0.2]\n");
  const auto rep = run_sweep(c, {dir});
  REQUIRE(rep.pairs.size() == 1);
  CHECK(rep.pairs[0].rho_l1 == 0.0);
  CHECK(rep.pairs[0].u_l2 == 0.0);
  fs::remove_all(dir);
}

TEST_CASE("sweeps are deterministic across worker counts and refuse collisions") {
  const auto a = scratch_dir("workers1"), b = scratch_dir("workers2");
  auto c = parse_config(std::string(kSmall) + "sweep:\n  axes:\n    epsilon: [0.4, 0.2, 0.1]\n");
  (void)run_sweep(c, {a, false, 1});
  (void)run_sweep(c, {b, false, 3});
  for (const char* f : {"sweep_summary.csv", "pairwise.csv", "kernel_table.csv", "defect_table.csv", "report.md"})
    CHECK(slurp(a / f) == slurp(b / f));
  CHECK_THROWS_AS(run_sweep(c, {a}), OutputCollision);
  CHECK_NOTHROW(run_sweep(c, {a, true}));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("report regenerated from snapshots matches bit for bit") {
  const auto dir = scratch_dir("analyze");
  auto c = parse_config(std::string(kSmall) + "sweep:\n  axes:\n    delta: [0.1, 0.01]\n    epsilon: [0.4, 0.2]\n");
  (void)run_sweep(c, {dir});
  std::map<std::string, std::string> before;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file()) before[e.path().filename().string()] = slurp(e.path());
  // Monitors are recorded every step and cannot be rebuilt from snapshots; everything else is derived.
  for (const auto& [name, text] : before)
    if (name != "config.resolved.yaml" && name.rfind("monitors_", 0) != 0) fs::remove(dir / name);
  const auto rep = analyze(dir);
  CHECK(rep.runs.size() == 4);
  for (const auto& [name, text] : before) CHECK_MESSAGE(slurp(dir / name) == text, name);
  fs::remove_all(dir);
}

TEST_CASE("delta sweep loses less mass as delta shrinks, within the ODE bound") {
  const auto dir = scratch_dir("delta");
  auto c = parse_config(std::string(kSmall) + "sweep:\n  axes:\n    delta: [0.1, 0.01, 0]\n");
  const auto rep = run_sweep(c, {dir});
  REQUIRE(rep.runs.size() == 3);
  std::vector<double> loss;
  for (const auto& r : rep.runs) {
    loss.push_back(r.records.front().mass - r.records.back().mass);
    // int rho0 - int rho(T) <= delta T max rho^m |torus|
    const double bound = r.config.scheme.delta * r.config.scheme.t_end *
                         std::pow(r.series.fields.front().max(), r.config.scheme.m) * two_pi<double>;
    CHECK(loss.back() <= bound * (1 + 1e-12));
  }
  CHECK(loss[0] > loss[1]);
  CHECK(loss[1] > loss[2]);
  CHECK(std::abs(loss[2]) <= 1e-12 * rep.runs[2].records.front().mass);
  fs::remove_all(dir);
}

TEST_CASE("failed runs are recorded without aborting the sweep") {
  const auto dir = scratch_dir("failure");
  // epsilon below two grid spacings is rejected by the mollifier.
  auto c = parse_config(std::string(kSmall) + "sweep:\n  axes:\n    epsilon: [0.2, 0.05]\n");
  const auto rep = run_sweep(c, {dir});
  REQUIRE(rep.runs.size() == 2);
  CHECK(rep.runs[0].complete);
  CHECK_FALSE(rep.runs[1].complete);
  CHECK_FALSE(rep.notes.empty());
  CHECK(slurp(dir / "sweep_summary.csv").find("failed") != std::string::npos);
  fs::remove_all(dir);
}
