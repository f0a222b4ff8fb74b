#pragma once

// Bayesian inference for the Markov-switching input model: blocked Gibbs
// sampling (forward-filtering backward-sampling of regimes, Dirichlet
// transition rows, emission updates), the weak-limit HDP-HMM sampler, and a
// kernel density input model.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "rsopt/msm.hpp"
#include "rsopt/random.hpp"

namespace rsopt {

struct GammaPrior {
  double shape = 1.0;
  double rate = 1.0;
  double mean() const { return shape / rate; }
};

struct UniformPrior {
  double lo = 0.0;
  double hi = 1.0;
  double mean() const { return 0.5 * (lo + hi); }
};

struct HdpPrior {
  GammaPrior gamma{5.0, 1.0};
  GammaPrior alpha{5.0, 1.0};
  int truncation = 10;
};

/// Priors for ϑ. The emission family decides which emission prior is used:
/// `rate` for Exponential, `mean` (and `sd` when unknown) for the Gaussian
/// families. The bivariate family applies `mean` and `sd` to both coordinates.
struct PriorSpec {
  EmissionKind kind = EmissionKind::Exponential;
  double transition_concentration = 1.0;
  GammaPrior rate{1.0, 0.1};
  UniformPrior mean{0.0, 50.0};
  UniformPrior sd{0.1, 20.0};
  /// Standard deviation of GaussianKnownVar emissions.
  double known_sd = 1.0;
  HdpPrior hdp;

  void validate() const;
  /// One emission drawn from the prior.
  Emission sample_emission(Rng& rng) const;
};

/// Regime labels are 0-based throughout.
using LabelPath = std::vector<int>;

/// S_T ~ P(S_T | ξ_{1:T}); S_t | S_{t+1} ∝ A(S_t, S_{t+1}) P(S_t | ξ_{1:t}).
LabelPath ffbs_sample_states(const ThetaVector& theta, const ObservationStream& stream, Rng& rng);
LabelPath ffbs_sample_states(const ThetaVector& theta, const ObservationStream& stream, std::uint64_t seed);

/// n(i, j) = number of i -> j transitions in `labels`.
Eigen::MatrixXd transition_counts(std::span<const int> labels, int regimes);

/// Row i ~ Dir(c + n(i, 1), ..., c + n(i, R)) with c the prior concentration.
TransitionMatrix sample_transition_rows(std::span<const int> labels, int regimes, const PriorSpec& prior,
                                        Rng& rng);
TransitionMatrix sample_transition_rows(std::span<const int> labels, int regimes, const PriorSpec& prior,
                                        std::uint64_t seed);

/// Draws every regime's emission parameters from their conditional posterior
/// given the observations assigned to it. Exponential rates use the exact
/// Gamma conjugate draw; Gaussian families use one univariate slice-sampling
/// update per free parameter starting from `current`. Regimes with no
/// assigned observations are drawn from the prior.
std::vector<Emission> sample_emission_params(std::span<const int> labels, const ObservationStream& stream,
                                             const PriorSpec& prior, const ThetaVector& current, Rng& rng);
std::vector<Emission> sample_emission_params(std::span<const int> labels, const ObservationStream& stream,
                                             const PriorSpec& prior, const ThetaVector& current,
                                             std::uint64_t seed);

/// Univariate slice sampler (stepping out, then shrinkage) on [lo, hi].
/// `log_density` may return -inf; the current point must have finite density.
template <class LogDensity>
double slice_sample(double x0, LogDensity&& log_density, double width, double lo, double hi, Rng& rng,
                    int max_steps_out = 32);

/// Permutation `perm` such that regime perm[k] of `theta` becomes canonical
/// regime k: ascending rate, ascending mean, or lexicographic (mean1, mean2).
std::vector<int> canonical_order(const ThetaVector& theta);

/// Applies a regime permutation (new k <- old perm[k]) to parameters.
ThetaVector permute_regimes(const ThetaVector& theta, std::span<const int> perm);
Eigen::VectorXd permute_vector(const Eigen::VectorXd& v, std::span<const int> perm);
LabelPath permute_labels(std::span<const int> labels, std::span<const int> perm);

/// Blocked Gibbs sampler state for a fixed number of regimes. Each sweep
/// draws labels (FFBS), then transition rows, then emissions. The initial
/// regime distribution stays uniform.
class GibbsSampler {
 public:
  GibbsSampler(ObservationStream stream, int regimes, PriorSpec prior, std::uint64_t seed);
  /// Starts from explicit parameters instead of the data-quantile start.
  GibbsSampler(ObservationStream stream, ThetaVector start, PriorSpec prior, std::uint64_t seed);

  void sweep();

  const ThetaVector& theta() const noexcept { return theta_; }
  const LabelPath& labels() const noexcept { return labels_; }
  const ObservationStream& stream() const noexcept { return stream_; }

 private:
  ObservationStream stream_;
  PriorSpec prior_;
  Rng rng_;
  ThetaVector theta_;
  LabelPath labels_;
};

/// Initial parameters for a sampler: the sorted data split into R equal
/// groups, each group's moments giving one regime; transitions uniform.
ThetaVector quantile_start(const ObservationStream& stream, int regimes, const PriorSpec& prior);

struct PosteriorDraws {
  /// Draws in canonical regime order.
  std::vector<ThetaVector> draws;
  /// weights[i][l] = P(S_{t+1} = l | ξ^t, draws[i]).
  std::vector<Eigen::VectorXd> weights;
  int burn_in = 0;
  int thin = 1;

  std::size_t size() const noexcept { return draws.size(); }
  int regimes() const { return draws.front().regimes(); }
  EmissionKind kind() const { return draws.front().kind(); }

  /// N_MC copies of `theta` with weights from filtering `stream`.
  static PosteriorDraws point_mass(const ThetaVector& theta, const ObservationStream& stream, std::size_t n = 1);
};

struct GibbsOptions {
  int n_mc = 100;
  int burn_in = 200;
  int thin = 1;
};

/// Runs the blocked Gibbs sampler and returns `n_mc` relabeled draws with
/// their predictive weights. Bitwise reproducible given `seed`.
PosteriorDraws posterior_draws(const ObservationStream& stream, int regimes, const PriorSpec& prior,
                               const GibbsOptions& options, std::uint64_t seed);

/// Posterior-mean ("plug-in") parameters and regime weights.
struct PlugInEstimate {
  ThetaVector theta;
  Eigen::VectorXd weights;
};

PlugInEstimate plug_in_estimate(const PosteriorDraws& draws);

/// One row per draw: emission parameters, transition entries and weights.
void write_draws_csv(const PosteriorDraws& draws, const std::filesystem::path& path);

// ------------------------------------------------------------------- HDP-HMM

struct HdpStep {
  Eigen::VectorXd beta;
  ThetaVector theta;
  double gamma = 0.0;
  double alpha = 0.0;
};

struct HdpOptions {
  int burn_in = 100;
  int n_steps = 100;
};

/// Weak-limit HDP-HMM blocked Gibbs sampler with L components:
///   β ~ Dir(γ/L, ..., γ/L),  π_j ~ Dir(α β),  emissions ~ prior.
/// β is updated through auxiliary table counts, γ and α by log-scale
/// random-walk Metropolis against their Gamma priors.
class WeakLimitHdpSampler {
 public:
  WeakLimitHdpSampler(ObservationStream stream, int truncation, PriorSpec prior, std::uint64_t seed);

  void sweep();

  HdpStep state() const;
  const LabelPath& labels() const noexcept { return labels_; }

 private:
  void sample_concentrations(const Eigen::MatrixXd& counts);

  ObservationStream stream_;
  PriorSpec prior_;
  int truncation_;
  Rng rng_;
  double gamma_;
  double alpha_;
  Eigen::VectorXd beta_;
  ThetaVector theta_;
  LabelPath labels_;
};

/// Runs `options.burn_in` sweeps then records `options.n_steps` states.
std::vector<HdpStep> weak_limit_hdp_sample(const ObservationStream& stream, int truncation,
                                           const PriorSpec& prior, const HdpOptions& options,
                                           std::uint64_t seed);

// ----------------------------------------------------------------------- KDE

/// Gaussian product-kernel density estimate with Silverman bandwidths
/// h = 1.06 σ̂ n^(-1/5) per coordinate. A coordinate with zero spread gets
/// bandwidth 0 and behaves as a point mass.
struct KdeModel {
  std::vector<Observation> data;
  int dim = 1;
  double bandwidth = 0.0;
  double bandwidth2 = 0.0;

  double density(const Observation& at) const;
};

KdeModel kde_fit(const ObservationStream& stream);
KdeModel kde_fit(std::span<const double> data);
Observation kde_draw(const KdeModel& model, Rng& rng);
std::vector<Observation> kde_sample(const KdeModel& model, std::size_t n, std::uint64_t seed);

double silverman_bandwidth(std::span<const double> data);

// ------------------------------------------------------------ implementation

template <class LogDensity>
double slice_sample(double x0, LogDensity&& log_density, double width, double lo, double hi, Rng& rng,
                    int max_steps_out) {
  auto logf = [&](double x) {
    if (!(x > lo && x < hi)) return -std::numeric_limits<double>::infinity();
    return static_cast<double>(log_density(x));
  };
  const double f0 = logf(x0);
  double e = uniform01(rng);
  while (e <= 0.0) e = uniform01(rng);
  const double level = f0 + std::log(e);

  double left = x0 - width * uniform01(rng);
  double right = left + width;
  for (int i = 0; i < max_steps_out && logf(left) > level; ++i) left -= width;
  for (int i = 0; i < max_steps_out && logf(right) > level; ++i) right += width;
  left = std::max(left, lo);
  right = std::min(right, hi);

  for (int iter = 0; iter < 200; ++iter) {
    const double x1 = uniform(rng, left, right);
    if (logf(x1) > level) return x1;
    if (x1 < x0) {
      left = x1;
    } else {
      right = x1;
    }
  }
  return x0;
}

}  // namespace rsopt
