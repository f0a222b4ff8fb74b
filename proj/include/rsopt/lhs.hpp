#pragma once

#include <cstdint>
#include <vector>

#include "rsopt/local_search.hpp"

namespace rsopt {

/// Latin hypercube of `n` points in `box`: every coordinate has exactly one
/// point per stratum of width range/n. The returned design is the candidate
/// with the largest minimum pairwise distance (in range-scaled coordinates)
/// among `candidates` random hypercubes.
std::vector<std::vector<double>> lhs(std::size_t n, const Box& box, std::uint64_t seed, int candidates = 100);

/// Smallest pairwise Euclidean distance after scaling each axis to [0, 1].
double min_pairwise_distance(const std::vector<std::vector<double>>& points, const Box& box);

}  // namespace rsopt
