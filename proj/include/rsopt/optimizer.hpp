#pragma once

// The online stage loop and its method variants. Every method shares one
// loop and differs only in the atoms that integrate Z(x, λ) into Ĝ(x):
//
//   RSOBSO         every (posterior draw, regime) pair, weight w_l^{(i)}/N_MC
//   RSOPSO         the plug-in regimes λ̂_l with weights ŵ_l
//   NOBSO          one-regime posterior draws, weight 1/N_MC
//   NOPSO          the one-regime plug-in λ̂
//   NOKSO          a single parameter-free atom; inputs come from a KDE
//   HDPHMM_RSOBSO  RSOBSO with the regime count re-inferred every stage

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rsopt/acquisition.hpp"
#include "rsopt/errors.hpp"
#include "rsopt/posterior.hpp"
#include "rsopt/problems.hpp"
#include "rsopt/surrogate.hpp"

namespace rsopt {

enum class Method { RSOBSO, RSOPSO, NOBSO, NOPSO, NOKSO, HDPHMM_RSOBSO };

std::string to_string(Method method);
Method method_from_string(const std::string& name);

struct RunConfig {
  /// Observations available before the first stage.
  int h = 100;
  int t_max = 25;
  /// EI-driven evaluations per stage.
  int u = 30;
  /// Replications per evaluation.
  int m = 100;
  int n_mc = 100;
  /// LHS decisions in the initial design; the design has n0 × R points.
  int n0 = 10;
  /// Regime count assumed by the regime-switching methods.
  int regimes = 2;
  /// New observations per stage.
  int batch = 1;
  Method method = Method::RSOBSO;
  std::uint64_t seed = 1;

  PriorSpec prior;
  int burn_in = 200;
  int thin = 1;

  EiOptions ei;
  double lambda_padding = 0.2;
  /// The kernel sees log λ for strictly positive parameters (rates, sds).
  bool log_lambda = true;
  /// Stochastic-kriging noise: each point carries its own replication variance.
  FitOptions fit{.per_point_noise = true};
  /// Maximum design size; 0 keeps every point.
  std::size_t window = 0;
  /// Continuous polish of the stage decision.
  bool polish = true;

  /// Replaces the posterior by a point mass at these parameters.
  std::optional<ThetaVector> fixed_theta;

  int hdp_truncation = 10;
  int hdp_steps = 100;
  int hdp_burn_in = 100;
  /// Skips regime-count inference and uses this count.
  std::optional<int> force_regimes;

  void validate() const;
};

struct StageResult {
  int t = 0;
  std::vector<double> x_hat;
  /// μ_t(x̂_t).
  double mu_hat = 0.0;
  std::size_t n_points = 0;
  int regimes_used = 0;
  /// Regime-count bookkeeping (HDP method only; 0 otherwise).
  int s_max = 0;
  int n_max = 0;
  double wall_time = 0.0;
};

struct RunResult {
  std::vector<StageResult> stages;
  std::vector<DesignPoint> design;
  /// Design size after the initial design.
  std::size_t initial_points = 0;
};

/// A stage raised an error. Carries the stages completed before it and the
/// design after the last completed stage.
class StageFailure : public Error {
 public:
  StageFailure(int stage, const std::string& cause, RunResult partial)
      : Error("stage " + std::to_string(stage) + ": " + cause), stage_(stage), partial_(std::move(partial)) {}

  int stage() const noexcept { return stage_; }
  const RunResult& partial() const noexcept { return partial_; }

 private:
  int stage_;
  RunResult partial_;
};

/// Observations needed for a run: h + t_max × batch.
std::size_t required_observations(const RunConfig& config);

/// Runs `config.method` on `stream`. Stage t conditions on the first
/// h + t × batch observations. The first failing stage aborts the run with
/// StageFailure; configuration problems throw ConfigError before any stage.
RunResult run_method(const Problem& problem, const ObservationStream& stream, const RunConfig& config);

RunResult run_rsobso(const Problem& problem, const ObservationStream& stream, RunConfig config);
/// RSOPSO, NOBSO, NOPSO or NOKSO.
RunResult run_benchmark(const Problem& problem, const ObservationStream& stream, RunConfig config);
RunResult run_hdphmm_rsobso(const Problem& problem, const ObservationStream& stream, RunConfig config);

/// Atoms for one stage of a parametric method.
std::vector<Atom> stage_atoms(Method method, const PosteriorDraws& draws);

struct RegimeCount {
  int s_max = 0;
  int r_hat = 0;
  /// s_i per sampler step.
  std::vector<int> counts;
  /// True when no step had a weight above the threshold and r_hat was set to 1.
  bool clamped = false;
};

/// Thresholded stick-breaking counts s_i = #{j : β_j ≥ τ} over `m_steps`
/// weak-limit sweeps after `burn_in`. r_hat is the mode (smallest on ties),
/// at least 1; s_max is the largest count, at least r_hat.
RegimeCount infer_regime_count(const ObservationStream& stream, int n_max, int m_steps, double tau,
                               const PriorSpec& prior, std::uint64_t seed, int burn_in = 100);

}  // namespace rsopt
