#include <atomic>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "torusflux/field_io.hpp"
#include "torusflux/harness.hpp"

namespace torusflux {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr const char* kSnapshotSchema = "torusflux.snapshots/1";

std::string run_id(std::size_t i) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "r%03zu", i);
  return buf;
}

std::string short_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

PeriodicField<double> restrict_or_copy(const PeriodicField<double>& f, const TorusGrid<double>& coarse) {
  return f.grid() == coarse ? f : restrict_to(f, coarse);
}

BogovskiiRecord<double> final_bogovskii(const RunConfig& c, const PeriodicField<double>& rho,
                                        const PeriodicField<double>& u) {
  const double alpha = c.monitor.bogovskii_alpha.value_or(exponent_table(c.law.Gamma).alpha);
  return bogovskii_monitor(rho, u, c.law.build(), alpha, c.scheme.delta, c.scheme.m);
}

std::vector<DiagnosticsRecord<double>> read_monitor_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<DiagnosticsRecord<double>> out;
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      header = true;
      continue;
    }
    std::vector<double> v;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) v.push_back(std::strtod(cell.c_str(), nullptr));
    if (v.size() != monitor_columns().size()) throw std::runtime_error("malformed monitor row in " + path.string());
    DiagnosticsRecord<double> r;
    std::size_t i = 0;
    r.t = v[i++];
    r.step = long(v[i++]);
    for (double* f : {&r.mass, &r.energy, &r.enstrophy_integral, &r.damping_integral, &r.evf_l2, &r.evf_residual,
                      &r.u_L2H1, &r.u_LinfL2, &r.rho_Gamma_LinfL1, &r.pressure_Lp1, &r.pressure_Lp2, &r.damping_Ls,
                      &r.weight_min, &r.weight_max, &r.rho_logw_integral, &r.rho_lambda_budget, &r.min_rho})
      *f = v[i++];
    r.picard_iterations = int(v[i++]);
    r.rho_Gamma_alpha_integral = v[i++];
    out.push_back(r);
  }
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace

RunResult execute_run(const RunConfig& config, std::string id, std::map<std::string, double> axis_values,
                      const std::vector<double>& snapshot_times) {
  RunResult res;
  res.id = std::move(id);
  res.axis_values = std::move(axis_values);
  res.config = config;
  try {
    const SchemeState<double> s0 = initial_state(config);
    MonitorOptions<double> mo;
    mo.weight = config.monitor.weight;
    mo.weight_level = config.monitor.weight_level;
    mo.kernel_stride = config.monitor.kernel_stride;
    DiagnosticsMonitor<double> monitor(s0.grid(), config.scheme, mo);
    RunOptions<double> ro;
    ro.stride = config.monitor.stride;
    ro.snapshot_times = snapshot_times;
    ro.on_snapshot = [&res](const SchemeState<double>& s) { res.snapshots.push_back({s.t, s.rho, s.u}); };
    const auto traj = run<double>(s0, {&monitor}, ro);
    res.complete = traj.complete;
    res.failure = traj.failure;
    res.steps = traj.steps;
    res.records = monitor.records();
    if (res.records.empty()) {
      // Zero horizon: the observer never started.
      monitor.on_start(s0);
      res.records = monitor.records();
    }
    res.series = monitor.snapshots();
    res.rho = traj.final_state.rho;
    res.u = traj.final_state.u;
    res.bogovskii = final_bogovskii(config, *res.rho, *res.u);
  } catch (const std::exception& e) {
    res.complete = false;
    res.failure = e.what();
  }
  return res;
}

ConvergenceReport assemble_report(std::vector<RunResult> runs, const SweepConfig& config) {
  ConvergenceReport rep;
  rep.runs = std::move(runs);
  for (const auto& [name, values] : config.axes)
    if (name != "h") rep.axes.push_back(name);
  for (const auto& r : rep.runs)
    if (!r.complete) rep.notes.push_back(r.id + " failed: " + r.failure);

  // Kernel trends per run.
  for (const auto& r : rep.runs) {
    if (r.series.empty()) continue;
    KernelSpec<double> spec;
    spec.p = r.config.monitor.p;
    spec.sigma = r.config.monitor.sigma;
    const auto values = kolmogorov_table(r.series, r.config.monitor.h, spec);
    for (std::size_t k = 0; k < values.size(); ++k) rep.kernel.push_back({r.id, r.config.monitor.h[k], values[k]});
  }

  // Pairwise differences and defect along each axis, grouped by the other axes.
  for (const auto& axis : rep.axes) {
    std::map<std::string, std::vector<const RunResult*>> groups;
    std::vector<std::string> order;
    for (const auto& r : rep.runs) {
      std::string label;
      for (const auto& other : rep.axes) {
        if (other == axis) continue;
        if (!label.empty()) label += ";";
        label += other + "=" + short_number(r.axis_values.at(other));
      }
      if (label.empty()) label = "-";
      if (!groups.count(label)) order.push_back(label);
      groups[label].push_back(&r);
    }
    for (const auto& label : order) {
      const auto& g = groups[label];
      if (g.size() < 2) continue;
      std::vector<PairRow> rows;
      for (std::size_t i = 0; i + 1 < g.size(); ++i) {
        const RunResult& a = *g[i];
        const RunResult& b = *g[i + 1];
        if (!a.rho || !b.rho || !a.complete || !b.complete) {
          rep.notes.push_back("skipped pair " + a.id + "/" + b.id + " on axis " + axis + ": incomplete run");
          continue;
        }
        const TorusGrid<double>& coarse = a.rho->grid().n() <= b.rho->grid().n() ? a.rho->grid() : b.rho->grid();
        PairRow row;
        row.axis = axis;
        row.group = label;
        row.from = a.id;
        row.to = b.id;
        row.from_value = a.axis_values.at(axis);
        row.to_value = b.axis_values.at(axis);
        row.rho_l1 = l1_distance(restrict_or_copy(*a.rho, coarse), restrict_or_copy(*b.rho, coarse));
        row.u_l2 = l2_distance(restrict_or_copy(*a.u, coarse), restrict_or_copy(*b.u, coarse));
        rows.push_back(row);
      }
      if (g.size() >= 3)
        for (std::size_t i = 1; i < rows.size(); ++i) {
          const double step_prev = std::abs(rows[i - 1].from_value - rows[i - 1].to_value);
          const double step = std::abs(rows[i].from_value - rows[i].to_value);
          if (rows[i].rho_l1 > 0 && rows[i - 1].rho_l1 > 0 && step > 0 && step_prev != step)
            rows[i].order = std::log(rows[i - 1].rho_l1 / rows[i].rho_l1) / std::log(step_prev / step);
        }
      rep.pairs.insert(rep.pairs.end(), rows.begin(), rows.end());

      // Oscillation defect: the last run of the group stands in for the limit.
      const RunResult& lim = *g.back();
      bool aligned = !lim.series.empty();
      std::vector<TimeSeries<double>> seq;
      for (std::size_t i = 0; i + 1 < g.size() && aligned; ++i)
        aligned = g[i]->series.fields.size() == lim.series.fields.size();
      if (!aligned) {
        rep.notes.push_back("no defect for axis " + axis + " group " + label + ": snapshot series do not align");
        continue;
      }
      int coarse_n = lim.series.fields.front().grid().n();
      for (const auto* r : g) coarse_n = std::min(coarse_n, r->series.fields.front().grid().n());
      const TorusGrid<double> coarse(lim.series.fields.front().grid().dim(), coarse_n);
      const auto restricted = [&](const TimeSeries<double>& s) {
        TimeSeries<double> out;
        for (std::size_t t = 0; t < s.fields.size(); ++t)
          out.push(s.weights[t], restrict_or_copy(s.fields[t], coarse), s.times[t]);
        return out;
      };
      for (std::size_t i = 0; i + 1 < g.size(); ++i) seq.push_back(restricted(g[i]->series));
      const auto defect =
          oscillation_defect(seq, restricted(lim.series), config.base.monitor.defect_alpha, config.base.monitor.k);
      for (const auto& [k, v] : defect.per_k) rep.defect.push_back({axis, label, k, v});
    }
  }
  return rep;
}

ConvergenceReport run_sweep(SweepConfig config, const SweepOptions& options) {
  if (options.workers) config.workers = *options.workers;
  if (options.stride) config.base.monitor.stride = *options.stride;
  if (config.workers < 1) throw ConfigError("workers must be at least 1", 0, "workers");
  if (config.base.monitor.stride < 1) throw ConfigError("stride must be at least 1", 0, "stride");
  if (fs::exists(options.out) && !fs::is_empty(options.out) && !options.force)
    throw OutputCollision("output directory '" + options.out.string() + "' is not empty (use --force to overwrite)");
  fs::create_directories(options.out);

  const auto configs = config.expand();
  const auto points = config.axis_points();
  std::vector<RunResult> results(configs.size());
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i = next++; i < configs.size(); i = next++) results[i] = execute_run(configs[i], run_id(i), points[i], config.output.snapshot_times);
  };
  const int nthreads = std::max(1, std::min<int>(config.workers, int(configs.size())));
  std::vector<std::thread> pool;
  for (int t = 1; t < nthreads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  ConvergenceReport rep = assemble_report(std::move(results), config);
  persist_runs(rep, config, options.out);
  emit_report(rep, options.out);
  return rep;
}

void persist_runs(const ConvergenceReport& report, const SweepConfig& config, const fs::path& dir) {
  fs::create_directories(dir);
  write_text(dir / "config.resolved.yaml", to_yaml(config));
  for (const auto& r : report.runs) {
    const fs::path sd = dir / "snapshots" / r.id;
    fs::create_directories(sd);
    json j;
    j["schema"] = kSnapshotSchema;
    j["run"] = r.id;
    j["complete"] = r.complete;
    j["failure"] = r.failure;
    j["steps"] = r.steps;
    j["axis_values"] = r.axis_values;
    j["grid"] = {{"dim", r.config.dim}, {"n", r.config.n}, {"length", two_pi<double>}};
    if (r.rho) {
      save_field((sd / "rho_final.tflx").string(), *r.rho);
      save_field((sd / "u_final.tflx").string(), *r.u);
      j["final"] = {{"rho", "rho_final.tflx"}, {"u", "u_final.tflx"}};
    }
    json series = json::array();
    if (config.output.snapshots)
      for (std::size_t t = 0; t < r.series.fields.size(); ++t) {
        char name[48];
        std::snprintf(name, sizeof name, "series_%04zu_rho.tflx", t);
        save_field((sd / name).string(), r.series.fields[t]);
        json entry = {{"t", r.series.times[t]}, {"weight", r.series.weights[t]}, {"rho", name}};
        if (!r.series.w.empty()) {
          std::snprintf(name, sizeof name, "series_%04zu_w.tflx", t);
          save_field((sd / name).string(), r.series.w[t]);
          entry["w"] = name;
        }
        series.push_back(entry);
      }
    j["series"] = series;
    json snaps = json::array();
    for (std::size_t k = 0; k < r.snapshots.size(); ++k) {
      char rho_name[48], u_name[48];
      std::snprintf(rho_name, sizeof rho_name, "snapshot_%02zu_rho.tflx", k);
      std::snprintf(u_name, sizeof u_name, "snapshot_%02zu_u.tflx", k);
      save_field((sd / rho_name).string(), r.snapshots[k].rho);
      save_field((sd / u_name).string(), r.snapshots[k].u);
      snaps.push_back({{"t", r.snapshots[k].t}, {"rho", rho_name}, {"u", u_name}});
    }
    j["snapshots"] = snaps;
    write_text(sd / "index.json", j.dump(2) + "\n");
  }
}

void emit_report(const ConvergenceReport& rep, const fs::path& dir) {
  fs::create_directories(dir);

  std::ostringstream summary;
  summary << "run";
  for (const auto& a : rep.axes) summary << "," << a;
  summary << ",status,steps,t_final,mass_initial,mass_final,mass_loss,energy_final,min_rho,enstrophy_integral,"
             "damping_integral,rho_Gamma_alpha_integral,evf_residual,rho_logw_integral,rho_lambda_budget,"
             "weight_min,weight_max,bogovskii_alpha,bogovskii_pressure_rho_alpha,bogovskii_rho_Gamma_alpha\n";
  for (const auto& r : rep.runs) {
    summary << r.id;
    for (const auto& a : rep.axes) summary << "," << format_number(r.axis_values.at(a));
    summary << "," << (r.complete ? "ok" : "failed") << "," << r.steps;
    if (r.records.empty()) {
      for (int i = 0; i < 18; ++i) summary << ",nan";
      summary << "\n";
      continue;
    }
    const auto& f = r.records.front();
    const auto& l = r.records.back();
    for (double v : {l.t, f.mass, l.mass, f.mass - l.mass, l.energy, l.min_rho, l.enstrophy_integral, l.damping_integral,
                     l.rho_Gamma_alpha_integral, l.evf_residual, l.rho_logw_integral, l.rho_lambda_budget, l.weight_min,
                     l.weight_max, r.bogovskii.alpha, r.bogovskii.pressure_rho_alpha, r.bogovskii.rho_Gamma_alpha})
      summary << "," << format_number(v);
    summary << "\n";
  }
  write_text(dir / "sweep_summary.csv", summary.str());

  for (const auto& r : rep.runs) {
    std::ostringstream m;
    write_monitor_header<double>(m);
    for (const auto& rec : r.records) write_monitor_row(m, rec);
    write_text(dir / ("monitors_" + r.id + ".csv"), m.str());
  }

  std::ostringstream pairs;
  pairs << "axis,group,from,to,from_value,to_value,rho_l1,u_l2,order\n";
  for (const auto& p : rep.pairs)
    pairs << p.axis << "," << p.group << "," << p.from << "," << p.to << "," << format_number(p.from_value) << ","
          << format_number(p.to_value) << "," << format_number(p.rho_l1) << "," << format_number(p.u_l2) << ","
          << (p.order ? format_number(*p.order) : "") << "\n";
  write_text(dir / "pairwise.csv", pairs.str());

  std::ostringstream kernel;
  kernel << "run,h,value\n";
  for (const auto& k : rep.kernel) kernel << k.run << "," << format_number(k.h) << "," << format_number(k.value) << "\n";
  write_text(dir / "kernel_table.csv", kernel.str());

  std::ostringstream defect;
  defect << "axis,group,k,value\n";
  for (const auto& d : rep.defect)
    defect << d.axis << "," << d.group << "," << format_number(d.k) << "," << format_number(d.value) << "\n";
  write_text(dir / "defect_table.csv", defect.str());

  std::ostringstream md;
  md << "# Sweep report\n\n";
  md << "## Runs\n\n| run |";
  for (const auto& a : rep.axes) md << " " << a << " |";
  md << " status | steps | mass loss | final energy | int int rho^(Gamma+alpha) |\n|---|";
  for (std::size_t i = 0; i < rep.axes.size(); ++i) md << "---|";
  md << "---|---|---|---|---|\n";
  for (const auto& r : rep.runs) {
    md << "| " << r.id << " |";
    for (const auto& a : rep.axes) md << " " << short_number(r.axis_values.at(a)) << " |";
    md << " " << (r.complete ? "ok" : "failed") << " | " << r.steps << " |";
    if (r.records.empty()) md << " - | - | - |\n";
    else
      md << " " << short_number(r.records.front().mass - r.records.back().mass) << " | "
         << short_number(r.records.back().energy) << " | " << short_number(r.records.back().rho_Gamma_alpha_integral)
         << " |\n";
  }
  if (!rep.pairs.empty()) {
    md << "\n## Pairwise differences\n\nDifferences are taken on the coarsest grid after cell-average restriction. "
          "Observed orders appear when an axis has at least three points.\n\n";
    md << "| axis | group | from | to | L1 rho | L2 u | order |\n|---|---|---|---|---|---|---|\n";
    for (const auto& p : rep.pairs)
      md << "| " << p.axis << " | " << p.group << " | " << short_number(p.from_value) << " | " << short_number(p.to_value)
         << " | " << short_number(p.rho_l1) << " | " << short_number(p.u_l2) << " | "
         << (p.order ? short_number(*p.order) : "-") << " |\n";
  }
  if (!rep.kernel.empty()) {
    md << "\n## Compactness functional\n\n| run | h | value |\n|---|---|---|\n";
    for (const auto& k : rep.kernel) md << "| " << k.run << " | " << short_number(k.h) << " | " << short_number(k.value) << " |\n";
  }
  if (!rep.defect.empty()) {
    md << "\n## Oscillation defect\n\nThe last run of each group stands in for the limit; the maximum over the "
          "listed k is a lower bound for the supremum over all k.\n\n| axis | group | k | value |\n|---|---|---|---|\n";
    for (const auto& d : rep.defect)
      md << "| " << d.axis << " | " << d.group << " | " << short_number(d.k) << " | " << short_number(d.value) << " |\n";
  }
  if (!rep.notes.empty()) {
    md << "\n## Notes\n\n";
    for (const auto& n : rep.notes) md << "- " << n << "\n";
  }
  write_text(dir / "report.md", md.str());
}

ConvergenceReport analyze(const fs::path& dir) {
  const SweepConfig config = load_config(dir / "config.resolved.yaml");
  const auto configs = config.expand();
  const auto points = config.axis_points();
  std::vector<RunResult> runs(configs.size());
  for (std::size_t i = 0; i < configs.size(); ++i) {
    RunResult& r = runs[i];
    r.id = run_id(i);
    r.config = configs[i];
    r.axis_values = points[i];
    const fs::path sd = dir / "snapshots" / r.id;
    std::ifstream in(sd / "index.json");
    if (!in) throw std::runtime_error("missing snapshot index for " + r.id);
    const json j = json::parse(in);
    if (j.at("schema") != kSnapshotSchema) throw FormatError("unexpected snapshot schema in " + (sd / "index.json").string());
    r.complete = j.at("complete").get<bool>();
    r.failure = j.at("failure").get<std::string>();
    r.steps = j.at("steps").get<long>();
    if (j.contains("final")) {
      r.rho = load_field<double>((sd / j["final"]["rho"].get<std::string>()).string());
      r.u = load_field<double>((sd / j["final"]["u"].get<std::string>()).string());
      r.bogovskii = final_bogovskii(r.config, *r.rho, *r.u);
    }
    for (const auto& e : j.at("series")) {
      r.series.push(e.at("weight").get<double>(), load_field<double>((sd / e.at("rho").get<std::string>()).string()),
                    e.at("t").get<double>());
      if (e.contains("w")) r.series.w.push_back(load_field<double>((sd / e.at("w").get<std::string>()).string()));
    }
    r.records = read_monitor_csv(dir / ("monitors_" + r.id + ".csv"));
  }
  ConvergenceReport rep = assemble_report(std::move(runs), config);
  emit_report(rep, dir);
  return rep;
}

}  // namespace torusflux
