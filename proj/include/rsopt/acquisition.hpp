#pragma once

// Regime-aware expected improvement over (x, λ) and its maximization.

#include <cstdint>
#include <vector>

#include "rsopt/local_search.hpp"
#include "rsopt/surrogate.hpp"

namespace rsopt {

struct EiContext {
  const AggregateModel* agg = nullptr;
  /// T = min of the aggregate mean over evaluated decisions.
  double incumbent = 0.0;
  Box x_box;
  Box lambda_box;
  /// Replications of the hypothetical evaluation (σ_ε²/m in σ̃²).
  int replications = 1;
  /// Distinct decisions already evaluated.
  std::vector<std::vector<double>> evaluated_x;
};

/// Distinct x coordinates of the design, in first-seen order.
std::vector<std::vector<double>> distinct_decisions(const std::vector<DesignPoint>& design);

/// Atom hull padded by `padding` × range on each side. Coordinates flagged in
/// `positive` keep a lower bound of at least half the smallest atom value.
Box lambda_box_from_atoms(const std::vector<Atom>& atoms, double padding, const std::vector<bool>& positive);

/// Flags of strictly positive parameters (rates and standard deviations).
std::vector<bool> positive_parameters(EmissionKind kind);

EiContext make_ei_context(const AggregateModel& agg, Box x_box, Box lambda_box, int replications);

/// σ̃²(x | x₊, λ₊) = [Σ_a w_a k_n((x, λ_a), (x₊, λ₊))]² / (k_n((x₊,λ₊),(x₊,λ₊)) + σ_ε²/m).
/// Throws DegenerateCandidate when the denominator is ≤ 1e-14.
double tilde_sigma2(const AggregateModel& agg, std::span<const double> x, const Point& candidate, int replications);

/// Δ Φ(Δ/σ̃) + σ̃ φ(Δ/σ̃); max(Δ, 0) when σ̃ = 0.
double ei_closed_form(double delta, double sigma);

struct EiValue {
  double ei = 0.0;
  double sigma = 0.0;
};

/// EI at (x, λ) with σ̃ = σ̃(x | x, λ); 0 for degenerate candidates.
EiValue expected_improvement(const EiContext& ctx, const Point& candidate);

struct EiOptions {
  int restarts = 16;
  int seed_points = 48;
  int polish_evals = 24;
  double tie_threshold = 1e-12;
};

struct EiResult {
  Point point;
  double ei = 0.0;
  double sigma = 0.0;
  bool tie_break = false;
};

/// Multi-start maximization. Seeds are LHS decisions paired with weighted
/// atom draws, the evaluated decisions paired with atoms, and uniform points;
/// the best `restarts` seeds are polished by compass search. If no point has
/// EI above the tie threshold the largest-σ̃ point is returned.
EiResult optimize_ei(const EiContext& ctx, const EiOptions& options, std::uint64_t seed);

}  // namespace rsopt
