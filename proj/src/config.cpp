#include <cstdlib>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "torusflux/harness.hpp"

namespace torusflux {

namespace {

int line_of(const YAML::Node& node) { return node.Mark().is_null() ? 0 : node.Mark().line + 1; }

[[noreturn]] void fail(const YAML::Node& node, const std::string& field, const std::string& what) {
  const int line = line_of(node);
  std::ostringstream msg;
  msg << "config";
  if (line > 0) msg << " line " << line;
  msg << ", field '" << field << "': " << what;
  throw ConfigError(msg.str(), line, field);
}

class Section {
 public:
  Section(const YAML::Node& node, std::string name, std::set<std::string> keys)
      : name_(std::move(name)) {
    if (!node || node.IsNull()) return;
    if (!node.IsMap()) fail(node, name_, "expected a mapping");
    node_ = node;
    present_ = true;
    for (const auto& kv : node_) {
      const auto key = kv.first.as<std::string>();
      if (!keys.count(key)) fail(kv.first, name_ + "." + key, "unknown key");
    }
  }

  bool has(const std::string& key) const { return present_ && node_[key]; }

  template <typename T>
  void get(const std::string& key, T& out) const {
    if (!has(key)) return;
    const YAML::Node v = node_[key];
    if (!v.IsScalar()) fail(v, name_ + "." + key, "expected a scalar");
    try {
      out = v.as<T>();
    } catch (const YAML::BadConversion&) {
      fail(v, name_ + "." + key, "type mismatch");
    }
  }

  void get_list(const std::string& key, std::vector<double>& out) const {
    if (!has(key)) return;
    const YAML::Node v = node_[key];
    if (!v.IsSequence()) fail(v, name_ + "." + key, "expected a list");
    try {
      out = v.as<std::vector<double>>();
    } catch (const YAML::BadConversion&) {
      fail(v, name_ + "." + key, "type mismatch");
    }
  }

  YAML::Node node(const std::string& key) const { return present_ ? node_[key] : YAML::Node(YAML::NodeType::Undefined); }
  const std::string& name() const { return name_; }

 private:
  YAML::Node node_;
  std::string name_;
  bool present_ = false;
};

LawKind parse_kind(const YAML::Node& node, const std::string& s) {
  if (s == "isentropic") return LawKind::Isentropic;
  if (s == "perturbed") return LawKind::NonMonotonePerturbed;
  if (s == "tabulated") return LawKind::Tabulated;
  fail(node, "law.kind", "expected isentropic, perturbed or tabulated");
}

ForcingMode parse_forcing(const YAML::Node& node, const std::string& s) {
  if (s == "step_start") return ForcingMode::StepStart;
  if (s == "midpoint") return ForcingMode::Midpoint;
  fail(node, "scheme.forcing", "expected step_start or midpoint");
}

const char* forcing_name(ForcingMode f) { return f == ForcingMode::Midpoint ? "midpoint" : "step_start"; }

void check_positive(bool ok, const Section& s, const std::string& key, const char* what) {
  if (!ok) fail(s.node(key), s.name() + "." + key, what);
}

}  // namespace

PressureLaw<double> LawConfig::build() const {
  switch (kind) {
    case LawKind::Isentropic: return PressureLaw<double>::isentropic(gamma, Gamma, mu);
    case LawKind::NonMonotonePerturbed: return PressureLaw<double>::perturbed(gamma, Gamma, mu, bump);
    case LawKind::Tabulated: {
      std::ifstream in(table);
      if (!in) throw DomainError("cannot open pressure table '" + table + "'");
      return PressureLaw<double>::read_tabulated(in, gamma, Gamma, mu);
    }
  }
  throw DomainError("unknown law kind");
}

SweepConfig parse_config(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError(std::string("config line ") + std::to_string(e.mark.line + 1) + ": " + e.msg, e.mark.line + 1, "");
  }
  if (root.IsNull()) root = YAML::Node(YAML::NodeType::Map);
  if (!root.IsMap()) fail(root, "", "top level must be a mapping");
  const Section top(root, "", {"grid", "law", "scheme", "initial", "monitor", "sweep", "output"});

  SweepConfig c;
  RunConfig& r = c.base;

  const Section grid(top.node("grid"), "grid", {"dim", "n"});
  grid.get("dim", r.dim);
  grid.get("n", r.n);
  check_positive(r.dim >= 1 && r.dim <= 3, grid, "dim", "dim must be 1, 2 or 3");
  check_positive(is_power_of_two(r.n) && r.n >= 8, grid, "n", "n must be a power of two >= 8");

  const Section law(top.node("law"), "law", {"kind", "gamma", "Gamma", "mu", "table", "bump"});
  if (law.has("kind")) {
    std::string kind;
    law.get("kind", kind);
    r.law.kind = parse_kind(law.node("kind"), kind);
  }
  law.get("gamma", r.law.gamma);
  law.get("Gamma", r.law.Gamma);
  law.get("mu", r.law.mu);
  law.get("table", r.law.table);
  check_positive(r.law.gamma > 1, law, "gamma", "gamma must exceed 1");
  check_positive(r.law.mu >= 0, law, "mu", "mu must be nonnegative");
  if (r.law.kind == LawKind::Tabulated && r.law.table.empty())
    fail(law.node("kind"), "law.table", "tabulated law needs a table path");
  const Section bump(law.node("bump"), "law.bump", {"amplitude", "center", "half_width"});
  bump.get("amplitude", r.law.bump.amplitude);
  bump.get("center", r.law.bump.center);
  bump.get("half_width", r.law.bump.half_width);

  const Section scheme(top.node("scheme"), "scheme",
                       {"epsilon", "epsilon_pressure", "delta", "m", "dt", "t_end", "picard_tol", "picard_max",
                        "relaxation", "forcing"});
  auto& p = r.scheme;
  p.t_end = 0.1;
  scheme.get("epsilon", p.epsilon);
  scheme.get("epsilon_pressure", p.epsilon_pressure);
  scheme.get("delta", p.delta);
  p.m = SchemeParams<double>::default_m(r.law.Gamma);
  if (scheme.has("m")) {
    scheme.get("m", p.m);
    if (std::abs(p.m - SchemeParams<double>::default_m(r.law.Gamma)) > 1e-12) {
      std::ostringstream w;
      w << "scheme.m = " << p.m << " differs from m = 5/2 Gamma + 3/2 = " << SchemeParams<double>::default_m(r.law.Gamma)
        << " (the damping exponent relation)";
      c.warnings.push_back(w.str());
    }
  }
  if (scheme.has("dt")) {
    const YAML::Node v = scheme.node("dt");
    if (v.IsScalar() && v.Scalar() == "auto") {
      c.dt_auto = true;
    } else {
      scheme.get("dt", p.dt);
      c.dt_auto = false;
      check_positive(p.dt > 0, scheme, "dt", "dt must be positive");
    }
  }
  scheme.get("t_end", p.t_end);
  scheme.get("picard_tol", p.picard_tol);
  scheme.get("picard_max", p.picard_max);
  scheme.get("relaxation", p.relaxation);
  if (scheme.has("forcing")) {
    std::string f;
    scheme.get("forcing", f);
    p.forcing = parse_forcing(scheme.node("forcing"), f);
  }
  check_positive(p.epsilon > 0, scheme, "epsilon", "epsilon must be positive");
  check_positive(p.delta >= 0, scheme, "delta", "delta must be nonnegative");
  check_positive(p.t_end >= 0, scheme, "t_end", "t_end must be nonnegative");
  check_positive(p.picard_max >= 1, scheme, "picard_max", "picard_max must be at least 1");
  check_positive(p.relaxation > 0 && p.relaxation <= 1, scheme, "relaxation", "relaxation must lie in (0, 1]");

  const Section init(top.node("initial"), "initial",
                     {"rho", "rho_mean", "rho_amplitude", "rho_mode", "u", "u_amplitude", "u_mode", "smooth", "seed"});
  auto& ic = r.initial;
  init.get("rho", ic.rho);
  init.get("rho_mean", ic.rho_mean);
  init.get("rho_amplitude", ic.rho_amplitude);
  init.get("rho_mode", ic.rho_mode);
  init.get("u", ic.u);
  init.get("u_amplitude", ic.u_amplitude);
  init.get("u_mode", ic.u_mode);
  init.get("smooth", ic.smooth);
  init.get("seed", ic.seed);
  check_positive(ic.rho == "sine" || ic.rho == "uniform" || ic.rho == "random", init, "rho",
                 "expected sine, uniform or random");
  check_positive(ic.u == "zero" || ic.u == "sine" || ic.u == "shear", init, "u", "expected zero, sine or shear");

  const Section mon(top.node("monitor"), "monitor",
                    {"stride", "kernel_stride", "h", "k", "p", "sigma", "defect_alpha", "c1", "c2", "c3", "c4",
                     "weight_C", "weight_level", "bogovskii_alpha"});
  auto& m = r.monitor;
  mon.get("stride", m.stride);
  mon.get("kernel_stride", m.kernel_stride);
  mon.get_list("h", m.h);
  mon.get_list("k", m.k);
  mon.get("p", m.p);
  mon.get("sigma", m.sigma);
  mon.get("defect_alpha", m.defect_alpha);
  if (mon.has("weight_C")) {
    double C = 0;
    mon.get("weight_C", C);
    m.weight = WeightConstants<double>::from_evf_form(C);
  }
  mon.get("c1", m.weight.c1);
  mon.get("c2", m.weight.c2);
  mon.get("c3", m.weight.c3);
  mon.get("c4", m.weight.c4);
  mon.get("weight_level", m.weight_level);
  if (mon.has("bogovskii_alpha")) {
    double a = 0;
    mon.get("bogovskii_alpha", a);
    m.bogovskii_alpha = a;
  }
  check_positive(m.stride >= 1, mon, "stride", "stride must be at least 1");
  check_positive(m.kernel_stride >= 1, mon, "kernel_stride", "kernel_stride must be at least 1");
  for (double h : m.h) check_positive(h > 0 && h < 0.5, mon, "h", "kernel scales must lie in (0, 1/2)");
  check_positive(!m.k.empty(), mon, "k", "truncation list must be nonempty");

  const Section sweep(top.node("sweep"), "sweep", {"axes", "max_runs", "workers", "seed"});
  sweep.get("max_runs", c.max_runs);
  sweep.get("workers", c.workers);
  sweep.get("seed", c.seed);
  check_positive(c.workers >= 1, sweep, "workers", "workers must be at least 1");
  if (const YAML::Node axes = sweep.node("axes")) {
    if (!axes.IsMap()) fail(axes, "sweep.axes", "expected a mapping of axis lists");
    for (const auto& kv : axes) {
      const auto name = kv.first.as<std::string>();
      const std::string field = "sweep.axes." + name;
      if (std::find(axis_names().begin(), axis_names().end(), name) == axis_names().end())
        fail(kv.first, field, "unknown axis");
      if (!kv.second.IsSequence()) fail(kv.second, field, "expected a list");
      std::vector<double> values;
      try {
        values = kv.second.as<std::vector<double>>();
      } catch (const YAML::BadConversion&) {
        fail(kv.second, field, "type mismatch");
      }
      if (values.empty()) fail(kv.second, field, "axis must be nonempty");
      if (name == "n_per_axis")
        for (double v : values)
          if (v != std::floor(v) || !is_power_of_two(long(v)) || v < 8) fail(kv.second, field, "n must be a power of two >= 8");
      if (name == "h")
        for (double v : values)
          if (!(v > 0 && v < 0.5)) fail(kv.second, field, "kernel scales must lie in (0, 1/2)");
      c.axes.emplace_back(name, std::move(values));
    }
  }
  std::size_t runs = 1;
  for (const auto& [name, values] : c.axes)
    if (name != "h") runs *= values.size();
  if (runs > std::size_t(c.max_runs)) {
    std::ostringstream msg;
    msg << "sweep has " << runs << " runs, above the cap of " << c.max_runs;
    fail(sweep.node("axes"), "sweep.axes", msg.str());
  }

  const Section out(top.node("output"), "output", {"snapshot_times", "snapshots"});
  out.get_list("snapshot_times", c.output.snapshot_times);
  out.get("snapshots", c.output.snapshots);

  if (c.dt_auto) p.dt = cfl_dt_estimate(r);
  return c;
}

SweepConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'", 0, "");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string to_yaml(const SweepConfig& c) {
  const RunConfig& r = c.base;
  YAML::Emitter e;
  e.SetDoublePrecision(17);
  e << YAML::BeginMap;
  e << YAML::Key << "grid" << YAML::Value << YAML::BeginMap << YAML::Key << "dim" << YAML::Value << r.dim
    << YAML::Key << "n" << YAML::Value << r.n << YAML::EndMap;

  e << YAML::Key << "law" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "kind" << YAML::Value << to_string(r.law.kind);
  e << YAML::Key << "gamma" << YAML::Value << r.law.gamma;
  e << YAML::Key << "Gamma" << YAML::Value << r.law.Gamma;
  e << YAML::Key << "mu" << YAML::Value << r.law.mu;
  if (!r.law.table.empty()) e << YAML::Key << "table" << YAML::Value << r.law.table;
  e << YAML::Key << "bump" << YAML::Value << YAML::Flow << YAML::BeginMap << YAML::Key << "amplitude" << YAML::Value
    << r.law.bump.amplitude << YAML::Key << "center" << YAML::Value << r.law.bump.center << YAML::Key << "half_width"
    << YAML::Value << r.law.bump.half_width << YAML::EndMap;
  e << YAML::EndMap;

  const auto& p = r.scheme;
  e << YAML::Key << "scheme" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "epsilon" << YAML::Value << p.epsilon;
  e << YAML::Key << "epsilon_pressure" << YAML::Value << p.epsilon_pressure;
  e << YAML::Key << "delta" << YAML::Value << p.delta;
  e << YAML::Key << "m" << YAML::Value << p.m;
  if (c.dt_auto) e << YAML::Key << "dt" << YAML::Value << "auto" << YAML::Comment("resolved per run from the CFL estimate");
  else e << YAML::Key << "dt" << YAML::Value << p.dt;
  e << YAML::Key << "t_end" << YAML::Value << p.t_end;
  e << YAML::Key << "picard_tol" << YAML::Value << p.picard_tol;
  e << YAML::Key << "picard_max" << YAML::Value << p.picard_max;
  e << YAML::Key << "relaxation" << YAML::Value << p.relaxation;
  e << YAML::Key << "forcing" << YAML::Value << forcing_name(p.forcing);
  e << YAML::EndMap;

  const auto& ic = r.initial;
  e << YAML::Key << "initial" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "rho" << YAML::Value << ic.rho;
  e << YAML::Key << "rho_mean" << YAML::Value << ic.rho_mean;
  e << YAML::Key << "rho_amplitude" << YAML::Value << ic.rho_amplitude;
  e << YAML::Key << "rho_mode" << YAML::Value << ic.rho_mode;
  e << YAML::Key << "u" << YAML::Value << ic.u;
  e << YAML::Key << "u_amplitude" << YAML::Value << ic.u_amplitude;
  e << YAML::Key << "u_mode" << YAML::Value << ic.u_mode;
  e << YAML::Key << "smooth" << YAML::Value << ic.smooth;
  e << YAML::Key << "seed" << YAML::Value << ic.seed;
  e << YAML::EndMap;

  const auto& m = r.monitor;
  e << YAML::Key << "monitor" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "stride" << YAML::Value << m.stride;
  e << YAML::Key << "kernel_stride" << YAML::Value << m.kernel_stride;
  e << YAML::Key << "h" << YAML::Value << YAML::Flow << m.h;
  e << YAML::Key << "k" << YAML::Value << YAML::Flow << m.k;
  e << YAML::Key << "p" << YAML::Value << m.p;
  e << YAML::Key << "sigma" << YAML::Value << m.sigma;
  e << YAML::Key << "defect_alpha" << YAML::Value << m.defect_alpha;
  e << YAML::Key << "c1" << YAML::Value << m.weight.c1;
  e << YAML::Key << "c2" << YAML::Value << m.weight.c2;
  e << YAML::Key << "c3" << YAML::Value << m.weight.c3;
  e << YAML::Key << "c4" << YAML::Value << m.weight.c4;
  e << YAML::Key << "weight_level" << YAML::Value << m.weight_level;
  if (m.bogovskii_alpha) e << YAML::Key << "bogovskii_alpha" << YAML::Value << *m.bogovskii_alpha;
  e << YAML::EndMap;

  e << YAML::Key << "sweep" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "axes" << YAML::Value << YAML::BeginMap;
  for (const auto& [name, values] : c.axes) e << YAML::Key << name << YAML::Value << YAML::Flow << values;
  e << YAML::EndMap;
  e << YAML::Key << "max_runs" << YAML::Value << c.max_runs;
  e << YAML::Key << "workers" << YAML::Value << c.workers;
  e << YAML::Key << "seed" << YAML::Value << c.seed;
  e << YAML::EndMap;

  e << YAML::Key << "output" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "snapshot_times" << YAML::Value << YAML::Flow << c.output.snapshot_times;
  e << YAML::Key << "snapshots" << YAML::Value << c.output.snapshots;
  e << YAML::EndMap;
  e << YAML::EndMap;
  return std::string(e.c_str()) + "\n";
}

void apply_env_overrides(SweepConfig& config) {
  const auto read_int = [](const char* name, int& out) {
    if (const char* v = std::getenv(name)) {
      char* end = nullptr;
      const long x = std::strtol(v, &end, 10);
      if (end == v || *end != '\0' || x < 1) throw ConfigError(std::string(name) + " must be a positive integer", 0, name);
      out = int(x);
    }
  };
  read_int("TORUSFLUX_WORKERS", config.workers);
  read_int("TORUSFLUX_STRIDE", config.base.monitor.stride);
  read_int("TORUSFLUX_MAX_RUNS", config.max_runs);
}

std::vector<std::map<std::string, double>> SweepConfig::axis_points() const {
  std::vector<std::map<std::string, double>> points{{}};
  for (const auto& [name, values] : axes) {
    if (name == "h") continue;
    std::vector<std::map<std::string, double>> next;
    for (const auto& pt : points)
      for (double v : values) {
        auto q = pt;
        q[name] = v;
        next.push_back(std::move(q));
      }
    points = std::move(next);
  }
  return points;
}

std::vector<RunConfig> SweepConfig::expand() const {
  std::vector<RunConfig> runs;
  bool dt_axis = false;
  for (const auto& [name, values] : axes) dt_axis |= name == "dt";
  for (const auto& pt : axis_points()) {
    RunConfig r = base;
    for (const auto& [name, v] : pt) {
      if (name == "epsilon") r.scheme.epsilon = v;
      else if (name == "delta") r.scheme.delta = v;
      else if (name == "mu") r.law.mu = v;
      else if (name == "n_per_axis") r.n = int(v);
      else if (name == "dt") r.scheme.dt = v;
    }
    for (const auto& [name, values] : axes)
      if (name == "h") r.monitor.h = values;
    if (dt_auto && !dt_axis) r.scheme.dt = cfl_dt_estimate(r);
    runs.push_back(std::move(r));
  }
  return runs;
}

namespace {

PeriodicField<double> random_density(const TorusGrid<double>& grid, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ud(0, 1);
  PeriodicField<double> f(grid);
  const int band = 4, d = grid.dim();
  for (int a = -band; a <= band; ++a)
    for (int b = d > 1 ? -band : 0; b <= (d > 1 ? band : 0); ++b)
      for (int c = d > 2 ? -band : 0; c <= (d > 2 ? band : 0); ++c) {
        if (a == 0 && b == 0 && c == 0) continue;
        const double amp = 2 * ud(rng) - 1, phase = two_pi<double> * ud(rng);
        for (Eigen::Index i = 0; i < grid.points(); ++i) {
          const auto x = grid.coordinates(i);
          f(i) += amp * std::cos(a * x[0] + b * x[1] + c * x[2] + phase);
        }
      }
  const double peak = f.values().abs().maxCoeff();
  if (peak > 0) f.values() /= peak;
  return f;
}

}  // namespace

SchemeState<double> initial_state(const RunConfig& config) {
  const TorusGrid<double> grid(config.dim, config.n);
  const auto& ic = config.initial;
  PeriodicField<double> rho(grid, 1, ic.rho_mean);
  if (ic.rho == "sine") {
    const int k = ic.rho_mode;
    rho = PeriodicField<double>::sample(grid, [&](auto x) { return ic.rho_mean + ic.rho_amplitude * std::sin(k * x[0]); });
  } else if (ic.rho == "random") {
    rho.values() = ic.rho_mean + ic.rho_amplitude * random_density(grid, ic.seed).values();
  }
  rho.values() = rho.values().max(0.0);
  rho.set_nonnegative(true);
  if (ic.smooth && ic.rho != "uniform") rho = mollify(rho, MollifierSpec<double>{4 * grid.spacing()});

  PeriodicField<double> u(grid, grid.dim());
  const int k = ic.u_mode;
  if (ic.u == "sine") {
    for (Eigen::Index i = 0; i < grid.points(); ++i) {
      const auto x = grid.coordinates(i);
      for (int a = 0; a < grid.dim(); ++a) u(i, a) = ic.u_amplitude * std::sin(k * x[a]);
    }
  } else if (ic.u == "shear") {
    for (Eigen::Index i = 0; i < grid.points(); ++i) {
      const auto x = grid.coordinates(i);
      u(i, 0) = ic.u_amplitude * std::sin(k * x[grid.dim() > 1 ? 1 : 0]);
    }
  }
  return {0.0, std::move(rho), std::move(u), config.scheme, config.law.build()};
}

double cfl_dt_estimate(const RunConfig& config) {
  const double h = two_pi<double> / config.n;
  // Velocities stay O(1) for the supported initial data; a fifth of the
  // advective limit leaves room for the pressure-driven growth.
  const double umax = std::max(1.0, std::abs(config.initial.u == "zero" ? 0.0 : config.initial.u_amplitude));
  return 0.2 * h / umax;
}

}  // namespace torusflux
