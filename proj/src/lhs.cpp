#include "rsopt/lhs.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "rsopt/random.hpp"

namespace rsopt {

double min_pairwise_distance(const std::vector<std::vector<double>>& points, const Box& box) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t j = i + 1; j < points.size(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < box.dim(); ++k) {
        const double range = box.hi[k] - box.lo[k];
        const double d = range > 0.0 ? (points[i][k] - points[j][k]) / range : 0.0;
        s += d * d;
      }
      best = std::min(best, std::sqrt(s));
    }
  }
  return best;
}

std::vector<std::vector<double>> lhs(std::size_t n, const Box& box, std::uint64_t seed, int candidates) {
  if (n == 0) throw std::invalid_argument("LHS needs at least one point");
  if (candidates < 1) throw std::invalid_argument("LHS needs at least one candidate");
  Rng rng(seed);
  const std::size_t d = box.dim();
  std::vector<std::vector<double>> best;
  double best_score = -1.0;
  std::vector<std::size_t> perm(n);
  for (int c = 0; c < candidates; ++c) {
    std::vector<std::vector<double>> pts(n, std::vector<double>(d));
    for (std::size_t k = 0; k < d; ++k) {
      std::iota(perm.begin(), perm.end(), 0);
      for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[uniform_index(rng, i)]);
      const double width = (box.hi[k] - box.lo[k]) / static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) {
        pts[i][k] = box.lo[k] + width * (static_cast<double>(perm[i]) + uniform01(rng));
      }
    }
    const double score = n > 1 ? min_pairwise_distance(pts, box) : 0.0;
    if (score > best_score) {
      best_score = score;
      best = std::move(pts);
    }
  }
  return best;
}

}  // namespace rsopt
