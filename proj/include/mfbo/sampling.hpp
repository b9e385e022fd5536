#pragma once

#include <algorithm>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

#include "mfbo/core.hpp"

namespace mfbo {

/// Latin hypercube design of n points: per dimension, each of the n
/// equal-width strata contains exactly one point. Points are drawn in the
/// unit cube and mapped affinely into the domain. Deterministic given seed.
inline Design lhs(const Domain& domain, std::size_t n, std::uint64_t seed) {
  if (n == 0) {
    throw std::invalid_argument("lhs: n must be >= 1");
  }
  const int d = domain.dim();
  std::mt19937_64 rng(splitmix64(seed));
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  std::vector<Vector> unit(n, Vector::Zero(d));
  std::vector<std::size_t> perm(n);
  for (int j = 0; j < d; ++j) {
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    for (std::size_t i = 0; i < n; ++i) {
      unit[i][j] = (static_cast<double>(perm[i]) + unif(rng)) / static_cast<double>(n);
    }
  }

  Design design;
  design.points.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    design.points.push_back(domain.from_unit(unit[i]));
  }
  design.high.assign(n, false);
  return design;
}

/// Tags n_high of the design's points as high fidelity, chosen by greedy
/// maximin: the seed picks the first member, each further member maximizes
/// its minimum distance to the already-chosen set (ties broken by index).
/// The high set is therefore an exact subset of the low point locations.
inline Design nested_subset(const Design& design, std::size_t n_high, std::uint64_t seed) {
  const std::size_t n = design.size();
  if (n_high > n) {
    throw std::invalid_argument("nested_subset: n_high exceeds design size");
  }
  Design out = design;
  out.high.assign(n, false);
  if (n_high == 0) return out;

  std::mt19937_64 rng(splitmix64(seed ^ 0x6e657374ULL));
  std::size_t first = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
  out.high[first] = true;

  std::vector<double> min_dist(n, std::numeric_limits<double>::infinity());
  std::size_t last = first;
  for (std::size_t k = 1; k < n_high; ++k) {
    double best = -1.0;
    std::size_t best_i = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (out.high[i]) continue;
      min_dist[i] = std::min(min_dist[i], (design.points[i] - design.points[last]).norm());
      if (min_dist[i] > best) {
        best = min_dist[i];
        best_i = i;
      }
    }
    out.high[best_i] = true;
    last = best_i;
  }
  return out;
}

}  // namespace mfbo
