// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>

#include "torusflux/harness.hpp"

using namespace torusflux;
using Grid = TorusGrid<double>;
using Field = PeriodicField<double>;
using State = SchemeState<double>;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(int id, bool pass, const std::string& detail, double seconds) {
  std::printf("criterion %d: %s  %s  [%.1f s]\n", id, pass ? "PASS" : "FAIL", detail.c_str(), seconds);
  std::fflush(stdout);
  failures += !pass;
}

void criterion(int id, const std::function<std::pair<bool, std::string>()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  std::pair<bool, std::string> r;
  try {
    r = body();
  } catch (const std::exception& e) {
    r = {false, std::string("threw: ") + e.what()};
  }
  report(id, r.first, r.second, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
}

template <typename... Args>
std::string fmt(const char* f, Args... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

const char* yes_no(bool b) { return b ? "yes" : "no"; }

State smoke(int n, double delta, double dt, double t_end = 0.5) {
  const Grid grid(2, n);
  SchemeParams<double> p;
  p.epsilon = 0.2;
  p.delta = delta;
  p.m = SchemeParams<double>::default_m(4.0);
  p.dt = dt;
  p.t_end = t_end;
  return {0.0, Field::sample(grid, [](auto x) { return 1 + 0.5 * std::sin(x[0]); }), Field(grid, 2), p,
          PressureLaw<double>::isentropic(2.0)};
}

struct StepChecks : RunObserver<double> {
  double mass0 = 0, max_drift = 0, min_rho = 1e300;
  bool mass_decreasing = true;
  double prev_mass = 0;
  void on_start(const State& s) override { mass0 = prev_mass = s.rho.integral(); }
  void on_step(const State&, const State& after, const StepTrace<double>&, bool) override {
    const double m = after.rho.integral();
    max_drift = std::max(max_drift, std::abs(m - mass0) / mass0);
    min_rho = std::min(min_rho, after.rho.min());
    mass_decreasing = mass_decreasing && m < prev_mass;
    prev_mass = m;
  }
};

struct WeightChecks : RunObserver<double> {
  const DiagnosticsMonitor<double>* monitor = nullptr;
  double worst_budget_ratio = 0;
  void on_step(const State&, const State&, const StepTrace<double>&, bool) override {
    const auto& r = monitor->records().back();
    if (r.rho_lambda_budget > 0) worst_budget_ratio = std::max(worst_budget_ratio, r.rho_logw_integral / r.rho_lambda_budget);
  }
};

struct MonitoredRun {
  DiagnosticsMonitor<double> monitor;
  StepChecks checks;
  WeightChecks weight;
  std::optional<Trajectory<double>> traj;

  explicit MonitoredRun(const State& s) : monitor(s.grid(), s.params, options()) {
    weight.monitor = &monitor;
    RunOptions<double> ro;
    ro.stride = 1;  // every step recorded so the weight check sees each one
    traj.emplace(run<double>(s, {&monitor, &checks, &weight}, ro));
  }

  static MonitorOptions<double> options() {
    MonitorOptions<double> mo;
    mo.keep_snapshots = false;
    return mo;
  }
};

double positive(double v) { return v > 0 ? v : 0.0; }

}  // namespace

int main() {
  // 1. Exact oracles.
  criterion(1, [] {
    const Grid g1(1, 32);
    Field u = Field::sample(g1, [](auto x) { return std::sin(x[0]); });
    const Field zero(g1, 1);
    for (int k = 0; k < 100; ++k) u = momentum_step_unmollified(u, zero, 0.01);
    const Field exact = Field::sample(g1, [](auto x) { return std::exp(-1.0) * std::sin(x[0]); });
    const double heat = l2_distance(u, exact) / l2_norm(exact);

    Field rho(g1, 1, 1.0);
    const Field v(g1, 1);
    for (int k = 0; k < 10; ++k) rho = continuity_step(rho, v, 1.0, 2.0, 0.1);
    const double damp = std::abs(rho.max() - 0.5) / 0.5;

    const Grid g2(2, 64);
    std::mt19937_64 rng(11);
    std::normal_distribution<double> nd;
    Field f(g2);
    for (int a = -6; a <= 6; ++a)
      for (int b = -6; b <= 6; ++b) {
        if (a == 0 && b == 0) continue;
        const double amp = nd(rng), ph = nd(rng);
        for (Eigen::Index i = 0; i < g2.points(); ++i) {
          const auto x = g2.coordinates(i);
          f(i) += amp * std::cos(a * x[0] + b * x[1] + ph);
        }
      }
    f.values() -= f.mean();
    Field back = laplacian(inv_laplacian(f));
    back.values() *= -1;
    const double poisson = l2_distance(back, f) / l2_norm(f);
    const bool pass = heat <= 1e-10 && damp <= 1e-12 && poisson <= 1e-11;
    return std::pair{pass, fmt("heat rel err %.2e (<= 1e-10), damping rel err %.2e (<= 1e-12), Poisson round trip %.2e (<= 1e-11)",
                               heat, damp, poisson)};
  });

  // Smoke-test runs shared by criteria 2, 3, 5 and 6.
  std::unique_ptr<MonitoredRun> base, half_dt;
  const auto smoke_base = [&]() -> MonitoredRun& {
    if (!base) base = std::make_unique<MonitoredRun>(smoke(64, 0.1, 1e-3));
    return *base;
  };

  // 2. Conservation and positivity.
  criterion(2, [&] {
    StepChecks plain;
    const auto traj = run<double>(smoke(64, 0.0, 1e-3), {&plain});
    const auto& damped = smoke_base();
    const bool pass = traj.complete && traj.steps == 500 && plain.max_drift <= 1e-12 && plain.min_rho >= -1e-12 &&
                      damped.traj->complete && damped.checks.min_rho >= -1e-12 && damped.checks.mass_decreasing;
    return std::pair{pass, fmt("delta=0 mass drift %.2e (<= 1e-12), min rho %.3g / %.3g (>= -1e-12), delta=0.1 mass strictly "
                               "decreasing every step: %s",
                               plain.max_drift, plain.min_rho, damped.checks.min_rho, yes_no(damped.checks.mass_decreasing))};
  });

  // 3. Energy inequality and its refinement trend.
  criterion(3, [&] {
    const auto& coarse = smoke_base();
    const MonitoredRun fine(smoke(128, 0.1, 5e-4));
    const double v1 = positive(coarse.monitor.energy_violation());
    const double v2 = positive(fine.monitor.energy_violation());
    const bool pass = coarse.traj->complete && fine.traj->complete && v1 <= 1e-3 && v2 <= v1 / 2;
    return std::pair{pass, fmt("worst relative increase %.3g at 64^2/dt=1e-3 (<= 1e-3), %.3g at 128^2/dt=5e-4 (<= half); raw "
                               "max step change %.3g / %.3g",
                               v1, v2, coarse.monitor.energy_violation(), fine.monitor.energy_violation())};
  });

  // 4. Pressure-law certification.
  criterion(4, [] {
    int checked = 0, passed = 0;
    double worst_identity = 0, worst_convexity = 1e300;
    std::vector<PressureLaw<double>> laws;
    for (double gamma : {1.4, 2.0})
      for (double Gamma : {3.5, 4.0})
        for (double mu : {0.1, 1.0}) laws.push_back(PressureLaw<double>::isentropic(gamma, Gamma, mu));
    laws.push_back(PressureLaw<double>::perturbed(2.0, 4.0, 0.1));
    for (const auto& law : laws) {
      const auto c = certify_law(law);
      ++checked;
      passed += c.has_split && c.passed(1e-8, 1e-10);
      worst_identity = std::max({worst_identity, c.identity_residual, c.split_identity_residual});
      worst_convexity = std::min(worst_convexity, c.convexity_min);
    }
    return std::pair{passed == checked, fmt("%d/%d laws certified, worst identity residual %.2e (<= 1e-8), min second "
                                           "difference %.3g (>= -1e-10)",
                                           passed, checked, worst_identity, worst_convexity)};
  });

  // 5. Effective viscous flux identity under dt halving.
  criterion(5, [&] {
    const auto& a = smoke_base();
    half_dt = std::make_unique<MonitoredRun>(smoke(64, 0.1, 5e-4));
    const double r1 = a.monitor.records().back().evf_residual, r2 = half_dt->monitor.records().back().evf_residual;
    const double ratio = r1 / r2;
    const bool pass = std::abs(ratio - 2) <= 0.4;
    return std::pair{pass, fmt("residual %.4g at dt=1e-3, %.4g at dt=5e-4, ratio %.3f (2 +- 20%%)", r1, r2, ratio)};
  });

  // 6. Weight bounds and the log-weight budget.
  criterion(6, [&] {
    const auto& a = smoke_base();
    const double slack = a.monitor.weight_bound_slack();
    const double worst = a.weight.worst_budget_ratio;
    const bool pass = slack >= 0 && worst <= 1 + 1e-2;
    return std::pair{pass, fmt("min over steps of (w_min, 1 - w_max) = %.3g (>= 0), max int rho|log w| / budget = %.6f (<= 1.01)",
                               slack, worst)};
  });

  // 7. Compactness discriminator.
  criterion(7, [] {
    const Grid grid(1, 256);
    const std::vector<double> hs{0.25, 0.125, 0.0625, 0.03125, 0.015625, 0.0078125};
    TimeSeries<double> smooth;
    smooth.push(1.0, Field::sample(grid, [](auto x) { return std::sin(x[0]); }));
    const auto r = kolmogorov_table(smooth, hs, KernelSpec<double>{});
    bool monotone = true;
    for (std::size_t i = 1; i < r.size(); ++i) monotone = monotone && r[i] < r[i - 1];
    const double smooth_ratio = r.back() / r.front();
    double sup_coarse = 0, sup_fine = 0;
    for (int j = 2; j <= 5; ++j) {
      TimeSeries<double> osc;
      const int n = 1 << j;
      osc.push(1.0, Field::sample(grid, [n](auto x) { return 1 + 0.5 * std::sin(n * x[0]); }));
      const auto v = kolmogorov_table(osc, {hs.front(), hs.back()}, KernelSpec<double>{});
      sup_coarse = std::max(sup_coarse, v[0]);
      sup_fine = std::max(sup_fine, v[1]);
    }
    const double osc_ratio = sup_fine / sup_coarse;
    const bool pass = monotone && smooth_ratio < 0.1 && osc_ratio > 0.5;
    return std::pair{pass, fmt("smooth field monotone: %s, R(2^-7)/R(2^-2) = %.4f (< 0.1); oscillatory sup ratio %.4f (> 0.5)",
                               yes_no(monotone), smooth_ratio, osc_ratio)};
  });

  // 8. Sweep trends through the harness.
  criterion(8, [] {
    const fs::path dir = fs::temp_directory_path() / "torusflux_acceptance_sweep";
    const std::string common =
        "grid: {dim: 1, n: 256}\nlaw: {kind: isentropic, gamma: 2, Gamma: 4}\n"
        "scheme: {dt: 1.0e-3, t_end: 0.5, delta: 0.1}\ninitial: {rho: sine, rho_mean: 1, rho_amplitude: 0.5, smooth: false}\n"
        "monitor: {stride: 50, kernel_stride: 50, h: [0.25]}\n";
    const auto eps = run_sweep(parse_config(common + "sweep:\n  axes:\n    epsilon: [0.4, 0.2, 0.1, 0.05]\n"),
                               {dir / "epsilon", true});
    std::vector<double> d;
    for (const auto& p : eps.pairs) d.push_back(p.rho_l1);
    bool cauchy = d.size() == 3;
    for (std::size_t i = 1; i < d.size(); ++i) cauchy = cauchy && d[i] < d[i - 1];

    const std::string smoke_config =
        "grid: {dim: 2, n: 64}\nlaw: {kind: isentropic, gamma: 2, Gamma: 4}\n"
        "scheme: {epsilon: 0.2, dt: 1.0e-3, t_end: 0.5}\ninitial: {rho: sine, rho_mean: 1, rho_amplitude: 0.5, smooth: false}\n"
        "monitor: {stride: 50, kernel_stride: 500, h: [0.25]}\n";
    const auto del =
        run_sweep(parse_config(smoke_config + "sweep:\n  axes:\n    delta: [0.1, 0.01, 0.001]\n"), {dir / "delta", true});
    std::vector<double> loss, bog;
    bool complete = true;
    for (const auto& r : del.runs) {
      complete = complete && r.complete;
      loss.push_back(r.records.front().mass - r.records.back().mass);
      bog.push_back(r.records.back().rho_Gamma_alpha_integral);
    }
    bool mass_trend = loss.size() == 3, bounded = bog.size() == 3;
    for (std::size_t i = 1; i < loss.size(); ++i) {
      mass_trend = mass_trend && loss[i] < loss[i - 1];
      const double ratio = std::max(bog[i], bog[i - 1]) / std::min(bog[i], bog[i - 1]);
      bounded = bounded && ratio < 2;
    }
    fs::remove_all(dir);
    const bool pass = complete && cauchy && mass_trend && bounded;
    std::string detail = fmt("eps L1 differences %.3g > %.3g > %.3g; ", d.size() > 0 ? d[0] : NAN, d.size() > 1 ? d[1] : NAN,
                             d.size() > 2 ? d[2] : NAN);
    detail += fmt("mass loss %.4g > %.4g > %.4g; ", loss[0], loss[1], loss[2]);
    detail += fmt("int int rho^(Gamma+alpha) %.4g, %.4g, %.4g (successive ratio < 2)", bog[0], bog[1], bog[2]);
    return std::pair{pass, detail};
  });

  // 9. Exponent relations.
  criterion(9, [] {
    bool strict = true;
    for (int i = 1; i <= 100; ++i) strict = strict && exponent_table(3.0 + 0.17 * i).all_strict();
    const auto e = exponent_table(3.0);
    const double gap = std::max({std::abs(e.p1 - 2.5), std::abs(e.p2 - 5.0), std::abs(e.s - 10.0 / 7.0)});
    const bool pass = strict && gap <= 1e-12;
    return std::pair{pass, fmt("strict inequalities on 100 values of Gamma in (3, 20]: %s; at Gamma = 3: p1 = %.6f, p2 = %.6f, "
                               "s = %.6f (threshold gap %.3g, needs <= 1e-12)",
                               yes_no(strict), e.p1, e.p2, e.s, gap)};
  });

  std::printf("%d criterion failure(s)\n", failures);
  return failures == 0 ? 0 : 1;
}
