#pragma once

// Markov-switching (hidden Markov) input model: regime-specific emission
// distributions, a fixed transition matrix, filtering, one-step regime
// prediction, likelihood and simulation.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "rsopt/random.hpp"

namespace rsopt {

enum class EmissionKind { Exponential, GaussianKnownVar, GaussianUnknown, DiagonalBivariateGaussian };

std::string to_string(EmissionKind kind);
EmissionKind emission_kind_from_string(const std::string& name);

/// Number of estimated parameters of one regime (the kernel's λ dimension).
int free_param_count(EmissionKind kind);
/// 1 for scalar families, 2 for the bivariate family.
int observation_dim(EmissionKind kind);

/// A scalar or 2-vector observation. `value2` is ignored by scalar families.
struct Observation {
  double value = 0.0;
  double value2 = 0.0;

  friend bool operator==(const Observation&, const Observation&) = default;
};

/// One regime's emission distribution.
///
/// Parameter layout: Exponential {rate}; GaussianKnownVar and GaussianUnknown
/// {mean, sd}; DiagonalBivariateGaussian {mean1, mean2, sd1, sd2}. Free
/// parameters are all of them except the known sd of GaussianKnownVar.
class Emission {
 public:
  static Emission exponential(double rate);
  static Emission gaussian_known_var(double mean, double sd);
  static Emission gaussian(double mean, double sd);
  static Emission bivariate(double mean1, double mean2, double sd1, double sd2);

  /// Rebuilds an emission of `kind` from its free parameters; `fixed_sd` is
  /// used only by GaussianKnownVar.
  static Emission from_free_params(EmissionKind kind, std::span<const double> free,
                                   double fixed_sd = 1.0);

  EmissionKind kind() const noexcept { return kind_; }

  double rate() const { return p_[0]; }
  double mean() const { return p_[0]; }
  double sd() const { return p_[1]; }

  std::span<const double> params() const;
  std::vector<double> free_params() const;

  /// 0 outside the support.
  double density(const Observation& obs) const;
  /// -inf outside the support.
  double log_density(const Observation& obs) const;
  Observation sample(Rng& rng) const;

  /// Expected value of the (first) observation coordinate.
  double expected_value() const;

  friend bool operator==(const Emission&, const Emission&) = default;

 private:
  Emission(EmissionKind kind, std::array<double, 4> p);
  void validate() const;

  EmissionKind kind_ = EmissionKind::Exponential;
  std::array<double, 4> p_{};
};

/// Row-stochastic R x R matrix.
class TransitionMatrix {
 public:
  /// Throws std::invalid_argument unless every row sums to 1 within 1e-12 and
  /// all entries are in [0, 1].
  explicit TransitionMatrix(Eigen::MatrixXd entries);
  /// Divides every row by its sum first.
  static TransitionMatrix normalized(Eigen::MatrixXd entries);
  static TransitionMatrix identity(int regimes);

  int regimes() const noexcept { return static_cast<int>(a_.rows()); }
  const Eigen::MatrixXd& matrix() const noexcept { return a_; }
  double operator()(int from, int to) const { return a_(from, to); }

 private:
  Eigen::MatrixXd a_;
};

/// One full parameterization ϑ: emissions, transitions and initial regime law.
struct ThetaVector {
  std::vector<Emission> emissions;
  TransitionMatrix transition = TransitionMatrix::identity(1);
  Eigen::VectorXd initial;

  /// Uniform initial distribution.
  ThetaVector(std::vector<Emission> emissions, TransitionMatrix transition);
  ThetaVector(std::vector<Emission> emissions, TransitionMatrix transition, Eigen::VectorXd initial);

  int regimes() const noexcept { return static_cast<int>(emissions.size()); }
  EmissionKind kind() const { return emissions.front().kind(); }
  void validate() const;
};

/// P(S_t = . | ξ^t, ϑ) after absorbing `t` observations. With t == 0 the
/// vector is the initial regime distribution.
struct FilterState {
  Eigen::VectorXd probs;
  std::size_t t = 0;
};

struct ObservationStream {
  std::vector<Observation> values;
  /// Ground-truth regimes, 0-based in memory (1-based in CSV files).
  std::optional<std::vector<int>> regimes;
  int dim = 1;

  std::size_t size() const noexcept { return values.size(); }
  /// First `n` observations (and labels).
  ObservationStream prefix(std::size_t n) const;
  std::vector<double> first_coordinate() const;
  void validate(int regime_count = 0) const;
};

FilterState start_filter(const ThetaVector& theta);

/// One Bayes update. Throws AllZeroLikelihood (carrying state.t) when no
/// regime can produce `obs`.
FilterState filter_step(const FilterState& state, const ThetaVector& theta, const Observation& obs);

/// Same update, also returning log of the normalizer p(ξ_t | ξ^{t-1}, ϑ).
FilterState filter_step(const FilterState& state, const ThetaVector& theta, const Observation& obs,
                        double& log_normalizer);

FilterState filter(const ThetaVector& theta, const ObservationStream& stream);

/// w_l = Σ_k A(k, l) P(S_t = k | ξ^t, ϑ).
Eigen::VectorXd predictive_weights(const FilterState& state, const ThetaVector& theta);

/// log p(ξ^t | ϑ) via the forward recursion.
double log_likelihood(const ThetaVector& theta, const ObservationStream& stream);

ObservationStream simulate(const ThetaVector& theta, std::size_t t, std::uint64_t seed);

/// Draws observations for a fixed regime path (used when regime labels are
/// supplied from a file).
ObservationStream simulate_given_regimes(const ThetaVector& theta, std::span<const int> regimes,
                                         std::uint64_t seed);

/// CSV layout: `t, value[, value2][, regime]` with a header row.
void write_stream_csv(const ObservationStream& stream, const std::filesystem::path& path);
ObservationStream read_stream_csv(const std::filesystem::path& path);

}  // namespace rsopt
