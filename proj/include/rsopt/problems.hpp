#pragma once

// Test problems: simulation output y(x, ξ), objective z(x, λ) = E[y(x, ξ)]
// and, where known, the optimum for a given input distribution.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "rsopt/local_search.hpp"
#include "rsopt/msm.hpp"

namespace rsopt {

/// Draws one input observation.
using InputSampler = std::function<Observation(Rng&)>;

InputSampler emission_sampler(const Emission& emission);

struct Optimum {
  std::vector<double> x;
  double z = 0.0;
};

class Problem {
 public:
  virtual ~Problem() = default;

  virtual std::string name() const = 0;
  virtual Box bounds() const = 0;
  virtual EmissionKind emission_kind() const = 0;

  /// `m` replications at `x`; every replication consumes the same number of
  /// sampler draws regardless of `x` (common random numbers across x).
  virtual std::vector<double> simulate(std::span<const double> x, const InputSampler& sampler, int m,
                                       Rng& rng) const = 0;
  std::vector<double> simulate(std::span<const double> x, const Emission& emission, int m,
                               std::uint64_t seed) const;

  /// Whether true_z and true_optimum are closed-form.
  virtual bool analytic() const { return false; }
  /// Throws Unavailable for simulation-only problems.
  virtual double true_z(std::span<const double> x, const Emission& emission) const;
  virtual Optimum true_optimum(const Emission& emission) const;

  std::size_t dim() const { return bounds().dim(); }
};

/// y = (x - ξ)² + 10ξ, ξ ~ Exponential(λ), x ∈ [0, 50].
class QuadExpProblem final : public Problem {
 public:
  std::string name() const override { return "quad_exp"; }
  Box bounds() const override { return {{0.0}, {50.0}}; }
  EmissionKind emission_kind() const override { return EmissionKind::Exponential; }
  std::vector<double> simulate(std::span<const double> x, const InputSampler& sampler, int m,
                               Rng& rng) const override;
  using Problem::simulate;
  bool analytic() const override { return true; }
  double true_z(std::span<const double> x, const Emission& emission) const override;
  Optimum true_optimum(const Emission& emission) const override;
};

/// y = (x₁ - 10)² + (x₂ - 20)² + ξ(4x₁ + 8x₂), ξ ~ N(μ, σ²) with σ known.
class QuadGaussProblem final : public Problem {
 public:
  std::string name() const override { return "quad_gauss"; }
  Box bounds() const override { return {{-20.0, -40.0}, {20.0, 40.0}}; }
  EmissionKind emission_kind() const override { return EmissionKind::GaussianKnownVar; }
  std::vector<double> simulate(std::span<const double> x, const InputSampler& sampler, int m,
                               Rng& rng) const override;
  using Problem::simulate;
  bool analytic() const override { return true; }
  double true_z(std::span<const double> x, const Emission& emission) const override;
  Optimum true_optimum(const Emission& emission) const override;
};

struct InventoryParams {
  double fixed_cost = 100.0;
  double unit_cost = 1.0;
  double holding_cost = 1.0;
  double backorder_cost = 100.0;
  /// Periods simulated before costs are recorded.
  int warmup = 100;
  /// Costed periods per replication.
  int horizon = 100;
  /// Starting inventory; negative means start at S.
  double initial_inventory = -1.0;
  /// Replications per cell of the optimum grid search.
  int optimum_reps = 10000;

  void validate() const;
};

/// Periodic-review (s, S) policy: at the start of each period an inventory
/// below s is raised to S (zero lead time); the period's demand is then
/// subtracted and holding or backorder cost charged on the end-of-period
/// level. Output is the average cost per costed period.
class InventoryProblem final : public Problem {
 public:
  explicit InventoryProblem(InventoryParams params = {});

  std::string name() const override { return "inventory"; }
  Box bounds() const override { return {{1.0, 70.0}, {69.0, 250.0}}; }
  EmissionKind emission_kind() const override { return EmissionKind::Exponential; }
  std::vector<double> simulate(std::span<const double> x, const InputSampler& sampler, int m,
                               Rng& rng) const override;
  using Problem::simulate;
  /// Grid search with common random numbers: a coarse grid (s step 4, S step
  /// 10) then a unit-s, 2-S refinement around the best cell. Memoized per rate.
  Optimum true_optimum(const Emission& emission) const override;

  const InventoryParams& params() const noexcept { return params_; }

  /// Mean cost over `reps` replications driven by the seed (common random
  /// numbers for equal seeds).
  double estimate_cost(double s, double big_s, const Emission& emission, int reps, std::uint64_t seed) const;

 private:
  InventoryParams params_;
  mutable std::map<double, Optimum> optimum_cache_;
};

/// x = x₁ ∈ [0, 1] invested in asset 1, 1 - x₁ in asset 2. Each replication
/// draws one return pair r and yields the pseudo-value
///   -(r* - ½ (r* - r̄*)² m/(m-1)),  r* = x₁ r₁ + (1 - x₁) r₂,
/// whose replication mean is exactly -CEQ of the sample.
class PortfolioProblem final : public Problem {
 public:
  std::string name() const override { return "portfolio"; }
  Box bounds() const override { return {{0.0}, {1.0}}; }
  EmissionKind emission_kind() const override { return EmissionKind::DiagonalBivariateGaussian; }
  std::vector<double> simulate(std::span<const double> x, const InputSampler& sampler, int m,
                               Rng& rng) const override;
  using Problem::simulate;
  bool analytic() const override { return true; }
  /// -(μ_p - ½σ_p²) for the portfolio return's true moments.
  double true_z(std::span<const double> x, const Emission& emission) const override;
  /// x₁ = (μ₁ - μ₂ + σ₂²)/(σ₁² + σ₂²) clamped to [0, 1].
  Optimum true_optimum(const Emission& emission) const override;
};

/// ĈEQ = mean(r*) - ½ var(r*) with the unbiased sample variance. Throws
/// InsufficientSamples for fewer than two samples.
double portfolio_ceq(double x1, std::span<const Observation> returns);

std::unique_ptr<Problem> make_problem(const std::string& name, const InventoryParams& inventory = {});

/// Monthly two-asset returns. CSV columns `date, ret1, ret2` in percent;
/// values are stored as decimals.
struct ReturnTable {
  std::vector<std::string> dates;
  std::vector<Observation> returns;

  ObservationStream to_stream() const;
};

ReturnTable read_return_table(const std::filesystem::path& path);

/// z(x̂, λ) - z(x*(λ), λ). Analytic problems use the closed forms; otherwise
/// both terms are estimated from `m_gap` replications with common random
/// numbers.
double gap(const Problem& problem, std::span<const double> x_hat, const Emission& truth, std::uint64_t seed,
           int m_gap = 10000);

}  // namespace rsopt
