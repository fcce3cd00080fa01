#pragma once

// Random generators shared by the property tests.

#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "hyperseg/ball.hpp"
#include "hyperseg/gyroplane.hpp"
#include "hyperseg/hierarchy.hpp"

namespace hyperseg::testing {

using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

inline std::size_t uniform_index(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

inline Vector gaussian_vector(Rng& rng, std::size_t n, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Vector v(n);
  for (double& x : v) x = g(rng);
  return v;
}

/// Uniform direction with norm drawn uniformly from [0, max_norm].
inline Vector ball_point(Rng& rng, std::size_t n, double max_norm) {
  Vector v = gaussian_vector(rng, n);
  const double r = norm(v);
  const double target = uniform(rng, 0.0, max_norm);
  for (double& x : v) x *= r > 0.0 ? target / r : 0.0;
  return v;
}

inline GyroplaneBank random_bank(Rng& rng, std::size_t planes, std::size_t n, Curvature c, double offset_norm) {
  GyroplaneBank bank(planes, n, c);
  for (std::size_t y = 0; y < planes; ++y) {
    const Vector p = ball_point(rng, n, offset_norm);
    const Vector w = gaussian_vector(rng, n);
    bank.set(y, Gyroplane(p, w));
  }
  return bank;
}

/// Random tree with at most `max_leaves` leaves (>= 1) and leaf depth at most
/// `max_depth` (>= 1). Internal nodes have 1..max_children children.
inline ClassHierarchy random_tree(Rng& rng, std::size_t max_depth, std::size_t max_leaves,
                                  std::size_t max_children = 4) {
  std::vector<std::pair<std::string, std::optional<std::string>>> entries{{"n0", std::nullopt}};
  std::size_t leaves = 0;
  std::size_t next = 1;
  auto grow = [&](auto& self, const std::string& name, std::size_t depth) -> void {
    const std::size_t k = uniform_index(rng, 1, max_children);
    for (std::size_t i = 0; i < k && (i == 0 || leaves < max_leaves); ++i) {
      const std::string child = "n" + std::to_string(next++);
      entries.emplace_back(child, name);
      if (depth + 1 < max_depth && leaves + 1 < max_leaves && uniform(rng, 0.0, 1.0) < 0.5)
        self(self, child, depth + 1);
      else
        ++leaves;
    }
  };
  grow(grow, "n0", 0);
  return ClassHierarchy::from_parents(entries);
}

}  // namespace hyperseg::testing
