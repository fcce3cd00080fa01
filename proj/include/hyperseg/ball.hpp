#pragma once

// Poincare-ball primitives. Every function here is pure; vectors are passed
// as spans so callers can work directly on rows of a Field.

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

namespace hyperseg {

using Vector = std::vector<double>;

/// Distance from the boundary kept by every ball-producing operation.
inline constexpr double kBallEpsilon = 1e-5;
/// Norms below this take the series-limit branch of the exponential maps.
inline constexpr double kSmallNorm = 1e-12;
/// Smallest denominator accepted in Mobius-type quotients.
inline constexpr double kMinDenominator = 1e-12;

/// Ball curvature. Zero selects the exact Euclidean limit.
class Curvature {
 public:
  constexpr Curvature() = default;
  explicit Curvature(double c) : c_(c) {
    if (!std::isfinite(c) || c < 0.0) throw std::invalid_argument("curvature must be finite and >= 0");
  }
  double value() const { return c_; }
  double sqrt() const { return std::sqrt(c_); }
  bool euclidean() const { return c_ == 0.0; }
  /// Largest admissible norm after projection; infinite for c = 0.
  double max_norm(double eps = kBallEpsilon) const;

 private:
  double c_ = 1.0;
};

double dot(std::span<const double> a, std::span<const double> b);
double squared_norm(std::span<const double> a);
double norm(std::span<const double> a);

/// Conformal factor 2 / (1 - c|x|^2). Throws std::domain_error outside the ball.
double conformal_factor(std::span<const double> x, Curvature c);

/// Mobius addition v (+)_c w, projected back into the ball.
Vector mobius_add(std::span<const double> v, std::span<const double> w, Curvature c);

/// Exponential map at the origin.
Vector exp_map_origin(std::span<const double> x, Curvature c);

/// Exponential map anchored at v.
Vector exp_map_at(std::span<const double> v, std::span<const double> x, Curvature c);

/// Rescales x onto the sphere of radius (1 - eps)/sqrt(c) when it lies beyond it.
Vector project_to_ball(std::span<const double> x, Curvature c, double eps = kBallEpsilon);
/// In-place variant; returns true when x was rescaled.
bool project_in_place(std::span<double> x, Curvature c, double eps = kBallEpsilon);

/// Euclidean norm of an embedding, reported as the pixel confidence.
inline double origin_norm(std::span<const double> z) { return norm(z); }

}  // namespace hyperseg
