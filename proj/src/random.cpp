#include "rsopt/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <boost/random/exponential_distribution.hpp>
#include <boost/random/gamma_distribution.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_01.hpp>
#include <boost/random/uniform_int_distribution.hpp>

namespace rsopt {

std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t hash_tag(std::string_view tag) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : tag) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

double uniform01(Rng& rng) {
  boost::random::uniform_01<double> dist;
  return dist(rng);
}

double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

double standard_normal(Rng& rng) {
  boost::random::normal_distribution<double> dist(0.0, 1.0);
  return dist(rng);
}

double exponential_draw(Rng& rng, double rate) {
  boost::random::exponential_distribution<double> dist(rate);
  return dist(rng);
}

double gamma_draw(Rng& rng, double shape, double rate) {
  boost::random::gamma_distribution<double> dist(shape, 1.0 / rate);
  return dist(rng);
}

double log_gamma_draw(Rng& rng, double shape) {
  if (shape >= 1.0) {
    return std::log(gamma_draw(rng, shape, 1.0));
  }
  // Gamma(a) = Gamma(a + 1) * U^(1/a)
  double u = uniform01(rng);
  while (u <= 0.0) u = uniform01(rng);
  return std::log(gamma_draw(rng, shape + 1.0, 1.0)) + std::log(u) / shape;
}

Eigen::VectorXd dirichlet_draw(Rng& rng, std::span<const double> alpha) {
  const auto k = static_cast<Eigen::Index>(alpha.size());
  Eigen::VectorXd logs(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    if (!(alpha[i] > 0.0)) throw std::invalid_argument("dirichlet concentration must be > 0");
    logs[i] = log_gamma_draw(rng, alpha[i]);
  }
  const double mx = logs.maxCoeff();
  Eigen::VectorXd out = (logs.array() - mx).exp();
  out /= out.sum();
  return out;
}

std::size_t categorical_draw(Rng& rng, std::span<const double> weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0)) throw std::invalid_argument("categorical weights sum to zero");
  const double u = uniform01(rng) * total;
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    acc += weights[i];
    if (u < acc) return i;
  }
  // Rounding: return the last index with positive weight.
  for (std::size_t i = weights.size(); i-- > 0;) {
    if (weights[i] > 0.0) return i;
  }
  return weights.size() - 1;
}

std::size_t uniform_index(Rng& rng, std::size_t n) {
  boost::random::uniform_int_distribution<std::size_t> dist(0, n - 1);
  return dist(rng);
}

}  // namespace rsopt
