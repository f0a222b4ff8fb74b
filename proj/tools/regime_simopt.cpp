// regime-simopt: command-line front end.
//   run            run an experiment from a JSON config
//   simulate-data  write a synthetic or return-table stream as CSV
//   infer          posterior draws (or an HDP regime count) for a stream
//   gap-report     summarize traces.csv of a results directory
// Exit codes: 0 success, 2 configuration error, 3 runtime failure.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rsopt/errors.hpp"
#include "rsopt/harness.hpp"

namespace {

constexpr int kConfigError = 2;
constexpr int kRuntimeError = 3;

struct RunArgs {
  std::string config;
  std::string out;
  std::vector<std::string> methods;
  std::string problem;
  std::optional<std::uint64_t> seed;
  std::optional<int> macros;
  std::optional<int> threads;
};

int cmd_run(const RunArgs& a) {
  rsopt::ExperimentSpec spec = rsopt::load_experiment(a.config);
  if (!a.methods.empty()) {
    spec.methods.clear();
    for (const auto& m : a.methods) spec.methods.push_back(rsopt::method_from_string(m));
  }
  if (!a.problem.empty()) spec.problem = a.problem;
  if (a.seed) spec.run.seed = *a.seed;
  if (a.macros) spec.macros = *a.macros;
  if (a.threads) spec.threads = *a.threads;
  if (!a.out.empty()) spec.out_dir = a.out;
  if (spec.out_dir.empty()) throw rsopt::ConfigError("no output directory: pass --out or set \"out\"");

  const rsopt::ExperimentResult result = rsopt::run_experiment(spec);
  for (const auto& row : result.summary) {
    if (row.stage + 1 != spec.run.t_max) continue;
    std::cout << rsopt::to_string(row.method) << " final mean cumulative GAP " << row.mean_cum_gap << " (se " << row.se
              << ")\n";
  }
  if (!result.ok()) {
    for (const auto& f : result.failures) {
      std::cerr << "failed: " << rsopt::to_string(f.method) << " macro " << f.macro << ": " << f.message << "\n";
    }
    std::cerr << "failure manifest: " << (spec.out_dir / "failures.csv").string() << "\n";
    return kRuntimeError;
  }
  return 0;
}

struct SimulateArgs {
  std::string config;
  std::string returns;
  std::string out;
  std::optional<std::size_t> length;
  std::optional<std::uint64_t> seed;
};

int cmd_simulate(const SimulateArgs& a) {
  if (a.config.empty() == a.returns.empty()) throw rsopt::ConfigError("pass exactly one of --config or --returns");
  if (!a.returns.empty()) {
    rsopt::write_stream_csv(rsopt::read_return_table(a.returns).to_stream(), a.out);
    return 0;
  }
  const rsopt::ExperimentSpec spec = rsopt::load_experiment(a.config);
  if (!spec.truth) throw rsopt::ConfigError("config has no \"truth\" model to simulate");
  const std::size_t n = a.length.value_or(rsopt::required_observations(spec.run));
  rsopt::write_stream_csv(rsopt::simulate(*spec.truth, n, a.seed.value_or(spec.run.seed)), a.out);
  return 0;
}

struct InferArgs {
  std::string data;
  std::string config;
  std::string family = "exponential";
  std::string out;
  int regimes = 2;
  int n_mc = 100;
  int burn_in = 200;
  std::uint64_t seed = 1;
  bool hdp = false;
};

int cmd_infer(const InferArgs& a) {
  rsopt::ObservationStream stream = rsopt::read_stream_csv(a.data);
  rsopt::PriorSpec prior;
  if (!a.config.empty()) {
    prior = rsopt::load_experiment(a.config).run.prior;
  } else {
    prior.kind = stream.dim == 2 ? rsopt::EmissionKind::DiagonalBivariateGaussian : rsopt::emission_kind_from_string(a.family);
  }
  if (rsopt::observation_dim(prior.kind) != stream.dim) throw rsopt::ConfigError("stream dimension does not match the family");

  if (a.hdp) {
    const double tau = 1.0 / std::sqrt(static_cast<double>(stream.size()));
    const rsopt::RegimeCount rc =
        rsopt::infer_regime_count(stream, prior.hdp.truncation, a.n_mc, tau, prior, a.seed, a.burn_in);
    std::cout << "r_hat " << rc.r_hat << "\ns_max " << rc.s_max << "\nclamped " << (rc.clamped ? 1 : 0) << "\n";
    return 0;
  }
  const rsopt::PosteriorDraws draws =
      rsopt::posterior_draws(stream, a.regimes, prior, rsopt::GibbsOptions{a.n_mc, a.burn_in, 1}, a.seed);
  if (!a.out.empty()) rsopt::write_draws_csv(draws, a.out);
  const rsopt::PlugInEstimate est = rsopt::plug_in_estimate(draws);
  for (int l = 0; l < est.theta.regimes(); ++l) {
    std::cout << "regime " << l << ":";
    for (double p : est.theta.emissions[static_cast<std::size_t>(l)].params()) std::cout << " " << p;
    std::cout << "  weight " << est.weights(l) << "\n";
  }
  std::cout << "transition\n" << est.theta.transition.matrix() << "\n";
  return 0;
}

int cmd_gap_report(const std::string& dir, const std::string& out) {
  const auto traces = rsopt::read_traces_csv(std::filesystem::path(dir) / "traces.csv");
  if (traces.empty()) throw rsopt::ConfigError("no traces in " + dir);
  const auto target = out.empty() ? std::filesystem::path(dir) / "summary.csv" : std::filesystem::path(out);
  rsopt::write_summary_csv(rsopt::gap_report(traces), target);
  std::cout << target.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Online simulation optimization under regime-switching inputs"};
  app.require_subcommand(1);

  RunArgs run;
  auto* c_run = app.add_subcommand("run", "Run an experiment");
  c_run->add_option("--config", run.config, "JSON experiment file")->required()->check(CLI::ExistingFile);
  c_run->add_option("--out", run.out, "Output directory");
  c_run->add_option("--method", run.methods, "Method(s); overrides the config");
  c_run->add_option("--problem", run.problem, "Problem; overrides the config");
  c_run->add_option("--seed", run.seed, "Master seed");
  c_run->add_option("--macros", run.macros, "Macro-replications");
  c_run->add_option("--threads", run.threads, "Worker threads (0 = all cores)");

  SimulateArgs sim;
  auto* c_sim = app.add_subcommand("simulate-data", "Write an observation stream CSV");
  c_sim->add_option("--config", sim.config, "JSON file with a \"truth\" model")->check(CLI::ExistingFile);
  c_sim->add_option("--returns", sim.returns, "Return table (date, ret1, ret2 in percent)")->check(CLI::ExistingFile);
  c_sim->add_option("--length", sim.length, "Observations to simulate");
  c_sim->add_option("--seed", sim.seed, "Seed");
  c_sim->add_option("--out", sim.out, "Output CSV")->required();

  InferArgs inf;
  auto* c_inf = app.add_subcommand("infer", "Posterior inference on a stream");
  c_inf->add_option("--data", inf.data, "Stream CSV")->required()->check(CLI::ExistingFile);
  c_inf->add_option("--regimes", inf.regimes, "Regime count")->check(CLI::PositiveNumber);
  c_inf->add_option("--config", inf.config, "JSON file supplying the prior")->check(CLI::ExistingFile);
  c_inf->add_option("--family", inf.family, "Emission family without --config");
  c_inf->add_option("--draws", inf.n_mc, "Posterior draws")->check(CLI::PositiveNumber);
  c_inf->add_option("--burn-in", inf.burn_in, "Burn-in sweeps")->check(CLI::NonNegativeNumber);
  c_inf->add_option("--seed", inf.seed, "Seed");
  c_inf->add_option("--out", inf.out, "Draws CSV");
  c_inf->add_flag("--hdp", inf.hdp, "Infer the regime count instead");

  std::string report_dir;
  std::string report_out;
  auto* c_rep = app.add_subcommand("gap-report", "Summarize a results directory");
  c_rep->add_option("dir", report_dir, "Results directory")->required()->check(CLI::ExistingDirectory);
  c_rep->add_option("--out", report_out, "Summary CSV (default <dir>/summary.csv)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigError;
  }

  try {
    if (c_run->parsed()) return cmd_run(run);
    if (c_sim->parsed()) return cmd_simulate(sim);
    if (c_inf->parsed()) return cmd_infer(inf);
    if (c_rep->parsed()) return cmd_gap_report(report_dir, report_out);
  } catch (const rsopt::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
  return 0;
}
