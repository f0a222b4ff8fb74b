#pragma once

// Experiment orchestration: declarative configuration, seed splitting,
// macro-replications over several methods, GAP accounting and reports.
//
// Seeds. Macro k of an experiment with master seed s uses
//   stream     derive_seed(s, kTagStream, k)
//   method M   derive_seed(s, k, hash_tag(name of M))
//   GAP        derive_seed(s, kTagGap, k, t)
// so every method in a macro reads the same stream, the GAP of stage t is
// estimated with the same random numbers for every method, and adding or
// removing a method never changes another method's results.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rsopt/optimizer.hpp"
#include "rsopt/problems.hpp"

namespace rsopt {

inline constexpr std::uint64_t kTagStream = 0x73747265616d;
inline constexpr std::uint64_t kTagGap = 0x676170;

struct ExperimentSpec {
  RunConfig run;
  std::string problem = "quad_exp";
  InventoryParams inventory;
  std::vector<Method> methods{Method::RSOBSO};
  /// Synthetic experiments: streams are simulated from this model and GAP
  /// is measured against the realized regime.
  std::optional<ThetaVector> truth;
  /// Real data: an ObservationStream CSV or a percent return table. No GAP
  /// is available; traces record decisions only.
  std::optional<std::filesystem::path> data_file;
  std::optional<std::filesystem::path> returns_file;
  int macros = 10;
  /// Replications per simulated GAP term.
  int m_gap = 10000;
  /// Worker threads for macro-replications; 0 uses the hardware count.
  int threads = 1;
  std::filesystem::path out_dir;

  void validate() const;
};

/// Parses a JSON experiment file; relative data paths resolve against the
/// file's directory. Throws ConfigError on unknown keys or bad values.
ExperimentSpec load_experiment(const std::filesystem::path& path);
ExperimentSpec parse_experiment(const std::string& json_text, const std::filesystem::path& base_dir = {});

/// Parameters of one regime-switching model in the config schema:
/// {"emissions": [{"rate": ..} | {"mean": .., "sd": ..} | {"mean1", "mean2", "sd1", "sd2"}],
///  "transition": [[..]], "initial": [..]}.
ThetaVector parse_theta(const std::string& json_text, EmissionKind kind, double known_sd);

struct GapRow {
  int stage = 0;
  std::vector<double> x_hat;
  /// Realized regime of observation h + stage; -1 without a known truth.
  int regime = -1;
  double gap = 0.0;
  double cum_gap = 0.0;
};

struct GapTrace {
  Method method = Method::RSOBSO;
  int macro = 0;
  std::uint64_t seed = 0;
  double wall_time = 0.0;
  std::vector<GapRow> rows;
};

struct RunFailure {
  Method method = Method::RSOBSO;
  int macro = 0;
  /// Stage that raised; completed stages are kept in the trace.
  int stage = 0;
  std::string message;
};

struct SummaryRow {
  Method method = Method::RSOBSO;
  int stage = 0;
  double mean_cum_gap = 0.0;
  /// Standard error across macro-replications.
  double se = 0.0;
  /// Realized regime when every macro shares it, otherwise -1.
  int regime = -1;
};

struct ExperimentResult {
  std::vector<GapTrace> traces;
  std::vector<SummaryRow> summary;
  std::vector<RunFailure> failures;

  bool ok() const noexcept { return failures.empty(); }
};

/// Observation stream of macro k.
ObservationStream experiment_stream(const ExperimentSpec& spec, int macro);

/// Runs every (method, macro) pair. With a non-empty out_dir it writes
///   traces.csv, summary.csv          GAP per stage and its macro summary
///   runs/<method>_<k>/stages.csv     one row per stage
///   runs/<method>_<k>/design.csv     the final design set
///   stages.csv, design.csv           copies of the above for a single run
///   streams/macro_<k>.csv            the stream shared by all methods
///   failures.csv                     only when a run failed
///   timing.log                       wall-clock seconds per run
/// All CSVs are byte-identical for identical specs; timing.log is not.
ExperimentResult run_experiment(const ExperimentSpec& spec);

/// Per (method, stage): mean and standard error of the cumulative GAP over
/// the traces of that method. Methods appear in first-seen order.
std::vector<SummaryRow> gap_report(const std::vector<GapTrace>& traces);

void write_traces_csv(const std::vector<GapTrace>& traces, const std::filesystem::path& path);
std::vector<GapTrace> read_traces_csv(const std::filesystem::path& path);
void write_summary_csv(const std::vector<SummaryRow>& rows, const std::filesystem::path& path);
void write_stages_csv(const RunResult& result, const std::filesystem::path& path);

struct ConsistencyRow {
  int t = 0;
  /// Mean over macros of |E_post[K(x, ϑ)] - K(x, ϑ_true)|.
  double mean_abs_error = 0.0;
  /// Sample sd over macros of √t (E_post[K(x, ϑ)] - K(x, ϑ_true)).
  double scaled_sd = 0.0;
  std::vector<double> errors;
};

struct ConsistencyOptions {
  int macros = 20;
  GibbsOptions gibbs;
  PriorSpec prior;
  /// Replaces the posterior by a point mass at the true parameters.
  bool point_mass = false;
};

/// K(x, ϑ) = Σ_l w_l(ϑ) z(x, λ_l) with weights predicted from the first t
/// observations. For each t the posterior expectation under t observations
/// is compared with K at the true parameters. Macro k uses the stream
/// derive_seed(seed, kTagStream, k). Throws Unavailable without a closed-form z.
std::vector<ConsistencyRow> consistency_study(const Problem& problem, const ThetaVector& truth,
                                              std::span<const double> x, const std::vector<int>& t_grid,
                                              std::uint64_t seed, const ConsistencyOptions& options = {});

}  // namespace rsopt
