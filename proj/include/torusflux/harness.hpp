#pragma once

// Configuration, sweep orchestration, persistence and reporting.

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "torusflux/diagnostics.hpp"

namespace torusflux {

/// Config errors carry the offending line (1-based, 0 when unknown) and field path.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& what, int line, std::string field)
      : std::runtime_error(what), line_(line), field_(std::move(field)) {}
  int line() const noexcept { return line_; }
  const std::string& field() const noexcept { return field_; }

 private:
  int line_;
  std::string field_;
};

class OutputCollision : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct LawConfig {
  LawKind kind = LawKind::Isentropic;
  double gamma = 2, Gamma = 4, mu = 0;
  BumpPerturbation<double> bump;
  std::string table;  // path to a two-column (rho, pi) file

  PressureLaw<double> build() const;
};

struct InitialConfig {
  std::string rho = "sine";  // sine | uniform | random
  double rho_mean = 1, rho_amplitude = 0.5;
  int rho_mode = 1;
  std::string u = "zero";    // zero | sine | shear
  double u_amplitude = 0;
  int u_mode = 1;
  bool smooth = true;        // mollify the clamped density at scale 4h
  unsigned seed = 0;
};

struct MonitorConfig {
  int stride = 10;
  int kernel_stride = 10;
  std::vector<double> h = {0.25, 0.125, 0.0625, 0.03125, 0.015625, 0.0078125};
  std::vector<double> k = {1, 2, 4, 8, 16};
  double p = 1, sigma = 0, defect_alpha = 2;
  WeightConstants<double> weight;
  double weight_level = 0;
  std::optional<double> bogovskii_alpha;  // default 13 Gamma / 20 - 1 / 20
};

struct RunConfig {
  int dim = 1, n = 64;
  LawConfig law;
  SchemeParams<double> scheme;
  InitialConfig initial;
  MonitorConfig monitor;
};

struct OutputConfig {
  std::vector<double> snapshot_times;
  bool snapshots = true;
};

struct SweepConfig {
  RunConfig base;
  std::vector<std::pair<std::string, std::vector<double>>> axes;  // in declaration order
  OutputConfig output;
  bool dt_auto = true;  // dt resolved per run from the CFL estimate
  int max_runs = 64;
  int workers = 1;
  unsigned seed = 0;
  std::vector<std::string> warnings;

  /// One resolved RunConfig per point of the axis cross product (last axis fastest).
  /// The h axis selects kernel scales and does not multiply runs.
  std::vector<RunConfig> expand() const;
  std::vector<std::map<std::string, double>> axis_points() const;
};

inline const std::vector<std::string>& axis_names() {
  static const std::vector<std::string> names = {"epsilon", "delta", "mu", "n_per_axis", "dt", "h"};
  return names;
}

/// Parses the YAML document; unset fields take documented defaults and dt is
/// resolved from a CFL estimate when absent.
SweepConfig parse_config(const std::string& text);
SweepConfig load_config(const std::filesystem::path& path);
/// Canonical YAML echo of a resolved config; parse_config(to_yaml(c)) reproduces c.
std::string to_yaml(const SweepConfig& config);

/// Applies TORUSFLUX_* environment overrides (WORKERS, STRIDE, MAX_RUNS).
void apply_env_overrides(SweepConfig& config);

SchemeState<double> initial_state(const RunConfig& config);
double cfl_dt_estimate(const RunConfig& config);

struct RunResult {
  std::string id;
  std::map<std::string, double> axis_values;
  RunConfig config;
  bool complete = false;
  std::string failure;
  long steps = 0;
  std::vector<DiagnosticsRecord<double>> records;
  std::optional<PeriodicField<double>> rho, u;  // final fields
  TimeSeries<double> series;  // strided density snapshots with weights
  struct Snapshot {
    double t;
    PeriodicField<double> rho, u;
  };
  std::vector<Snapshot> snapshots;     // at the requested output times
  BogovskiiRecord<double> bogovskii;  // at the final state
};

RunResult execute_run(const RunConfig& config, std::string id, std::map<std::string, double> axis_values = {},
                      const std::vector<double>& snapshot_times = {});

struct PairRow {
  std::string axis, group, from, to;
  double from_value = 0, to_value = 0;
  double rho_l1 = 0, u_l2 = 0;
  std::optional<double> order;  // only with >= 3 points on the axis
};

struct KernelRow {
  std::string run;
  double h = 0, value = 0;
};

struct DefectRow {
  std::string axis, group;
  double k = 0, value = 0;
};

struct ConvergenceReport {
  std::vector<RunResult> runs;
  std::vector<std::string> axes;
  std::vector<PairRow> pairs;
  std::vector<KernelRow> kernel;
  std::vector<DefectRow> defect;
  std::vector<std::string> notes;
};

struct SweepOptions {
  std::filesystem::path out;
  bool force = false;
  std::optional<int> workers;
  std::optional<int> stride;
};

ConvergenceReport assemble_report(std::vector<RunResult> runs, const SweepConfig& config);
ConvergenceReport run_sweep(SweepConfig config, const SweepOptions& options);

/// Writes sweep_summary.csv, monitors_<id>.csv, kernel_table.csv,
/// defect_table.csv and report.md into dir.
void emit_report(const ConvergenceReport& report, const std::filesystem::path& dir);

/// Persists resolved config and per-run snapshots with a JSON sidecar.
void persist_runs(const ConvergenceReport& report, const SweepConfig& config, const std::filesystem::path& dir);

/// Reloads a persisted sweep and rebuilds the report from disk.
ConvergenceReport analyze(const std::filesystem::path& dir);

}  // namespace torusflux
