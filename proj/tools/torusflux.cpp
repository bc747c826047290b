#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>

#include "torusflux/harness.hpp"

using namespace torusflux;

namespace {

void print_certificate(const PressureLaw<double>& law, const LawCertificate<double>& c) {
  std::cout << "law " << to_string(law.kind()) << " gamma=" << law.gamma() << " Gamma=" << law.Gamma()
            << " mu=" << law.mu() << "\n"
            << "identity_residual " << c.identity_residual << "\n"
            << "envelope_violation " << c.envelope_violation << "\n"
            << "derivative_ratio " << c.derivative_ratio << "\n"
            << "positivity " << (c.positivity ? "yes" : "no") << "\n";
  if (c.has_split)
    std::cout << "split M=" << c.M << " lambda_q=" << c.lambda_q << " C_q=" << c.C_q << "\n"
              << "convexity_min " << c.convexity_min << "\n"
              << "split_identity_residual " << c.split_identity_residual << "\n"
              << "derivative_min " << c.derivative_min << "\n"
              << "q_support " << (c.q_support_ok ? "ok" : "violated") << "\n";
  std::cout << (c.passed() ? "PASS" : "FAIL") << "\n";
}

std::filesystem::path out_dir(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("TORUSFLUX_OUT")) return env;
  throw ConfigError("an output directory is required (--out or TORUSFLUX_OUT)", 0, "out");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Periodic-domain lab for a regularized compressible active-scalar system"};
  app.require_subcommand(1);

  std::string config_path, out;
  int workers = 0, stride = 0;
  bool force = false;

  const auto add_run_flags = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "YAML run configuration")->required()->check(CLI::ExistingFile);
    cmd->add_option("--out", out, "output directory");
    cmd->add_option("--workers", workers, "concurrent runs")->check(CLI::PositiveNumber);
    cmd->add_option("--stride", stride, "monitor sampling stride in steps")->check(CLI::PositiveNumber);
    cmd->add_flag("--force", force, "overwrite a nonempty output directory");
  };
  auto* run_cmd = app.add_subcommand("run", "run the base configuration (sweep axes ignored)");
  add_run_flags(run_cmd);
  auto* sweep_cmd = app.add_subcommand("sweep", "run the axis cross product and write the report");
  add_run_flags(sweep_cmd);
  auto* analyze_cmd = app.add_subcommand("analyze", "rebuild the report from persisted snapshots");
  analyze_cmd->add_option("--out", out, "sweep output directory");
  auto* cert_cmd = app.add_subcommand("certify-law", "run the pressure-law invariant suite");
  std::string kind = "isentropic";
  double gamma = 2, Gamma = 4, mu = 0;
  cert_cmd->add_option("--config", config_path, "take the law from a YAML configuration")->check(CLI::ExistingFile);
  cert_cmd->add_option("--kind", kind, "isentropic | perturbed")->check(CLI::IsMember({"isentropic", "perturbed"}));
  cert_cmd->add_option("--gamma", gamma, "adiabatic exponent");
  cert_cmd->add_option("--Gamma", Gamma, "regularization exponent");
  cert_cmd->add_option("--mu", mu, "regularization weight");

  CLI11_PARSE(app, argc, argv);

  try {
    if (cert_cmd->parsed()) {
      PressureLaw<double> law = PressureLaw<double>::isentropic(gamma, Gamma, mu);
      if (!config_path.empty()) law = load_config(config_path).base.law.build();
      else if (kind == "perturbed") law = PressureLaw<double>::perturbed(gamma, Gamma, mu);
      const auto cert = certify_law(law);
      print_certificate(law, cert);
      return cert.passed() ? 0 : 1;
    }
    if (analyze_cmd->parsed()) {
      const auto rep = analyze(out_dir(out));
      std::cout << "rebuilt report for " << rep.runs.size() << " runs in " << out_dir(out).string() << "\n";
      return 0;
    }
    SweepConfig config = load_config(config_path);
    apply_env_overrides(config);
    if (const char* env = std::getenv("TORUSFLUX_FORCE")) force = force || std::string(env) == "1";
    for (const auto& w : config.warnings) std::cerr << "warning: " << w << "\n";
    if (run_cmd->parsed()) config.axes.clear();
    SweepOptions opt;
    opt.out = out_dir(out);
    opt.force = force;
    if (workers > 0) opt.workers = workers;
    if (stride > 0) opt.stride = stride;
    const auto rep = run_sweep(config, opt);
    int failed = 0;
    for (const auto& r : rep.runs) {
      std::cout << r.id << " " << (r.complete ? "ok" : "failed") << " steps=" << r.steps;
      if (!r.complete) std::cout << " (" << r.failure << ")";
      std::cout << "\n";
      failed += !r.complete;
    }
    std::cout << "wrote " << opt.out.string() << "\n";
    return failed ? 3 : 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const OutputCollision& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
