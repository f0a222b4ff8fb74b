#include "rsopt/local_search.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rsopt {

bool Box::contains(const std::vector<double>& x) const {
  if (x.size() != lo.size()) return false;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] >= lo[i] && x[i] <= hi[i])) return false;
  }
  return true;
}

std::vector<double> Box::clamp(std::vector<double> x) const {
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::clamp(x[i], lo[i], hi[i]);
  return x;
}

SearchResult compass_minimize(const std::function<double(const std::vector<double>&)>& f, const Box& box,
                              std::vector<double> start, const SearchOptions& options) {
  if (start.size() != box.dim()) throw std::invalid_argument("search start has wrong dimension");
  const std::size_t d = box.dim();
  SearchResult best{box.clamp(std::move(start)), 0.0, 0};
  best.value = f(best.x);
  best.evals = 1;
  if (d == 0) return best;

  std::vector<double> step(d);
  std::vector<double> floor(d);
  for (std::size_t i = 0; i < d; ++i) {
    const double range = box.hi[i] - box.lo[i];
    step[i] = options.initial_step * range;
    floor[i] = options.min_step * range;
  }

  auto done = [&] {
    for (std::size_t i = 0; i < d; ++i) {
      if (step[i] > floor[i]) return false;
    }
    return true;
  };

  while (best.evals < options.max_evals && !done()) {
    bool improved = false;
    for (std::size_t i = 0; i < d && best.evals < options.max_evals; ++i) {
      if (step[i] <= floor[i]) continue;
      for (double dir : {1.0, -1.0}) {
        std::vector<double> trial = best.x;
        trial[i] = std::clamp(trial[i] + dir * step[i], box.lo[i], box.hi[i]);
        if (trial[i] == best.x[i]) continue;
        const double v = f(trial);
        ++best.evals;
        if (v < best.value) {
          best.x = std::move(trial);
          best.value = v;
          improved = true;
          break;
        }
        if (best.evals >= options.max_evals) break;
      }
    }
    if (!improved) {
      for (double& s : step) s *= 0.5;
    }
  }
  return best;
}

}  // namespace rsopt
