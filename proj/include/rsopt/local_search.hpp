#pragma once

// Derivative-free bounded minimization used by the acquisition optimizer,
// the stage-decision polish and the hyperparameter fit.

#include <functional>
#include <vector>

namespace rsopt {

struct Box {
  std::vector<double> lo;
  std::vector<double> hi;

  std::size_t dim() const noexcept { return lo.size(); }
  bool contains(const std::vector<double>& x) const;
  std::vector<double> clamp(std::vector<double> x) const;
};

struct SearchOptions {
  /// Initial step as a fraction of each coordinate's range.
  double initial_step = 0.25;
  /// Stop once every step is below this fraction of its range.
  double min_step = 1e-4;
  int max_evals = 200;
};

struct SearchResult {
  std::vector<double> x;
  double value = 0.0;
  int evals = 0;
};

/// Compass (coordinate pattern) search minimizing `f` inside `box`, starting
/// at `start`. Steps halve after a sweep without improvement. The result never
/// leaves the box and its value never exceeds f(start).
SearchResult compass_minimize(const std::function<double(const std::vector<double>&)>& f, const Box& box,
                              std::vector<double> start, const SearchOptions& options = {});

}  // namespace rsopt
