#pragma once

// Gaussian-process metamodel Z(x, λ) over decision × regime-parameter space
// and the weighted aggregate model Ĝ(x) = Σ_a w_a Z(x, λ_a).

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "rsopt/posterior.hpp"

namespace rsopt {

struct DesignPoint {
  std::vector<double> x;
  std::vector<double> lambda;
  double y_bar = 0.0;
  int m = 1;
  /// Sample variance of the m replications.
  double y_var = 0.0;
};

/// A query location (x, λ).
struct Point {
  std::vector<double> x;
  std::vector<double> lambda;
};

/// k((x,λ),(x',λ')) = σ_g² exp(-Σ Δx_i²/(2θ_x,i²) - Σ Δλ_j²/(2θ_λ,j²)).
/// `mean_offset` is a constant prior mean (0 unless set by the fit).
struct KernelHyperparams {
  double sigma_g2 = 1.0;
  std::vector<double> lengthscales_x;
  std::vector<double> lengthscales_lambda;
  double noise_var = 0.0;
  double mean_offset = 0.0;
  /// Use each point's own y_var/m_j on the diagonal (stochastic kriging)
  /// instead of noise_var/m_j. Points with m_j = 1 fall back to noise_var.
  bool per_point_noise = false;

  void validate() const;
};

/// Box constraints for the marginal-likelihood fit.
struct HyperBounds {
  double sigma_lo = 1e-3;
  double sigma_hi = 1e3;
  std::vector<double> lx_lo, lx_hi;
  std::vector<double> ll_lo, ll_hi;
};

/// Bounds scaled by the design: lengthscales in [0.01, 10] × coordinate
/// range, σ_g² in [1e-3, 1e2] × output variance.
HyperBounds default_bounds(const std::vector<DesignPoint>& design);

/// Σ (m_j - 1) s_j² / Σ (m_j - 1); 0 when no point has m_j > 1.
double pooled_noise_var(const std::vector<DesignPoint>& design);

class SurrogateModel {
 public:
  /// Factors R = R_z + diag(σ_ε²/m_j) + jitter·I. The jitter starts at
  /// 1e-10 σ_g² and grows ×10 up to 1e-4 σ_g²; throws SingularCovariance
  /// if factorization still fails.
  SurrogateModel(std::vector<DesignPoint> design, KernelHyperparams hyper);

  const std::vector<DesignPoint>& design() const noexcept { return design_; }
  const KernelHyperparams& hyper() const noexcept { return hyper_; }
  std::size_t size() const noexcept { return design_.size(); }
  double jitter() const noexcept { return jitter_; }

  /// Scaled squared distances Σ Δ²/(2θ²) in each block.
  double dist_x(std::span<const double> a, std::span<const double> b) const;
  double dist_lambda(std::span<const double> a, std::span<const double> b) const;
  double kernel(const Point& p, const Point& q) const;

  /// c(p)_j = k(p, design_j).
  Eigen::VectorXd cross_cov(const Point& p) const;
  /// L⁻¹ v for the lower Cholesky factor L.
  Eigen::VectorXd forward_solve(const Eigen::VectorXd& v) const;
  /// R⁻¹(Y - m0) for the unjittered R, by iterative refinement on the factor.
  const Eigen::VectorXd& alpha() const noexcept { return alpha_; }

  double mean(const Point& p) const;
  /// (m_n(p), k_n(p, q)); k_n(p, p) is clamped at 0.
  std::pair<double, double> posterior_mean_cov(const Point& p, const Point& q) const;
  double variance(const Point& p) const;

  /// Appends one point by a rank-one extension of the Cholesky factor;
  /// refactors from scratch if the extension is not positive.
  void add_point(DesignPoint point);
  /// Drops the oldest points so at most `keep` remain.
  void truncate_oldest(std::size_t keep);

  double log_marginal_likelihood() const;

  /// Per-replication noise variance at `p`: noise_var, or with per-point
  /// noise the y_var of the nearest design point in scaled distance.
  double noise_at(const Point& p) const;

  /// Reconstructs L Lᵀ (test hook).
  Eigen::MatrixXd factor_product() const;
  Eigen::MatrixXd covariance_matrix() const;

 private:
  void factor();
  void update_alpha();
  double diag_noise(const DesignPoint& p) const;

  std::vector<DesignPoint> design_;
  KernelHyperparams hyper_;
  Eigen::MatrixXd chol_;
  Eigen::VectorXd alpha_;
  double jitter_ = 0.0;
};

struct FitOptions {
  int starts = 4;
  /// Fit on a random subsample when the design is larger.
  std::size_t max_points = 150;
  int max_evals_per_start = 120;
  /// Estimate σ_ε² by pooling when true; otherwise keep `noise_var`.
  bool pool_noise = true;
  double noise_var = 0.0;
  bool center = true;
  bool per_point_noise = false;
};

/// Maximizes the log marginal likelihood over log σ_g² and log lengthscales by
/// multi-start compass search. Deterministic given `seed`.
KernelHyperparams fit_hyperparams(const std::vector<DesignPoint>& design, const HyperBounds& bounds,
                                  std::uint64_t seed, const FitOptions& options = {});

/// One integration atom of Ĝ: a single regime's parameters with its weight
/// w_l^{(i)} / N_MC.
struct Atom {
  std::vector<double> lambda;
  double weight = 0.0;
};

/// Atoms of every (draw, regime) pair.
std::vector<Atom> atoms_from_draws(const PosteriorDraws& draws);
/// Atoms of a plug-in estimate: λ̂_l with weight ŵ_l.
std::vector<Atom> atoms_from_plug_in(const PlugInEstimate& plug_in);

/// Ĝ(x) = Σ_a w_a Z(x, λ_a) over a fixed atom set. Because the kernel factors
/// over x and λ, the λ sums are precomputed per design point:
///   ω_j = Σ_a w_a exp(-d_λ(λ_a, λ_j)),  Ω = Σ_a Σ_b w_a w_b exp(-d_λ(λ_a, λ_b)).
class AggregateModel {
 public:
  AggregateModel(SurrogateModel model, std::vector<Atom> atoms);

  const SurrogateModel& model() const noexcept { return model_; }
  const std::vector<Atom>& atoms() const noexcept { return atoms_; }
  double total_weight() const noexcept { return total_weight_; }
  double omega() const noexcept { return omega_; }

  /// C̄(x)_j = Σ_a w_a k((x, λ_a), design_j).
  Eigen::VectorXd weighted_cross_cov(std::span<const double> x) const;
  /// Σ_a w_a exp(-d_λ(λ_a, λ)).
  double atom_affinity(std::span<const double> lambda) const;

  double mean(std::span<const double> x) const;
  double cov(std::span<const double> x, std::span<const double> x2) const;

  void add_point(DesignPoint point);

 private:
  double omega_of(std::span<const double> lambda) const;

  SurrogateModel model_;
  std::vector<Atom> atoms_;
  std::vector<double> design_omega_;
  double omega_ = 0.0;
  double total_weight_ = 0.0;
};

/// CSV layout: x1..x_dx, lambda1..lambda_dl, y_bar, m, y_var.
void write_design_csv(const std::vector<DesignPoint>& design, const std::filesystem::path& path);
std::vector<DesignPoint> read_design_csv(const std::filesystem::path& path);

}  // namespace rsopt
