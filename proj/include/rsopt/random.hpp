#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace rsopt {

/// All samplers draw from this engine. Distributions come from Boost.Random,
/// whose algorithms are fixed across platforms and standard libraries.
using Rng = std::mt19937_64;

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t z) noexcept;

/// FNV-1a hash of a tag string, for naming seed streams.
std::uint64_t hash_tag(std::string_view tag) noexcept;

/// Seed splitting: derive_seed(master, a, b, ...) folds each tag into the
/// running state with mix64. The rule depends only on integer arithmetic, so
/// derived seeds are identical on every platform.
inline std::uint64_t derive_seed(std::uint64_t master) noexcept { return mix64(master); }

template <class... Rest>
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t tag, Rest... rest) noexcept {
  return derive_seed(mix64(master ^ mix64(tag + 0x9e3779b97f4a7c15ULL)),
                     static_cast<std::uint64_t>(rest)...);
}

double uniform01(Rng& rng);
double uniform(Rng& rng, double lo, double hi);
double standard_normal(Rng& rng);
double exponential_draw(Rng& rng, double rate);

/// Gamma(shape, rate) draw; mean shape / rate.
double gamma_draw(Rng& rng, double shape, double rate);

/// log of a Gamma(shape, 1) draw. Stable for shapes far below 1, where the
/// draw itself underflows.
double log_gamma_draw(Rng& rng, double shape);

/// Dirichlet draw computed through log-gamma variates, so tiny concentrations
/// still produce a valid simplex point.
Eigen::VectorXd dirichlet_draw(Rng& rng, std::span<const double> alpha);

/// Index drawn proportionally to nonnegative weights (need not be normalized).
std::size_t categorical_draw(Rng& rng, std::span<const double> weights);

std::size_t uniform_index(Rng& rng, std::size_t n);

}  // namespace rsopt
