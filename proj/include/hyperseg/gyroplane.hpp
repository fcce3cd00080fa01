#pragma once

// Hyperbolic multinomial logistic regression over pixel grids.
//
// A gyroplane is the set {z : <-p (+)_c z, w> = 0}. The logit of class y at
// pixel z is
//
//   zeta_y(z) = lambda_p |w| / sqrt(c) * asinh(2 sqrt(c) <m, w> / ((1 - c|m|^2) |w|))
//
// with m = -p (+)_c z. Writing m = alpha (-p) + beta z turns <m, w> and |m|^2
// into combinations of five scalars, so a whole W x H x C logit grid needs only
// W x H x C scalar scratch instead of a W x H x C x n Mobius field.

#include <cstdint>
#include <memory_resource>
#include <span>

#include "hyperseg/ball.hpp"
#include "hyperseg/field.hpp"

namespace hyperseg {

/// Offset p (inside the ball) and orientation w (tangent, nonzero).
class Gyroplane {
 public:
  Gyroplane(Vector offset, Vector orientation);
  const Vector& offset() const { return offset_; }
  const Vector& orientation() const { return orientation_; }

 private:
  Vector offset_;
  Vector orientation_;
};

/// Read-only view of one plane inside a bank.
struct GyroplaneView {
  std::span<const double> offset;
  std::span<const double> orientation;
};

/// One gyroplane per class node, stored as two planes x dim matrices.
class GyroplaneBank {
 public:
  GyroplaneBank() = default;
  GyroplaneBank(std::size_t planes, std::size_t dim, Curvature c);

  std::size_t size() const { return planes_; }
  std::size_t dim() const { return dim_; }
  Curvature curvature() const { return c_; }

  std::span<double> offset(std::size_t i) { return {offsets_.data() + i * dim_, dim_}; }
  std::span<const double> offset(std::size_t i) const { return {offsets_.data() + i * dim_, dim_}; }
  std::span<double> orientation(std::size_t i) { return {orientations_.data() + i * dim_, dim_}; }
  std::span<const double> orientation(std::size_t i) const {
    return {orientations_.data() + i * dim_, dim_};
  }
  GyroplaneView plane(std::size_t i) const { return {offset(i), orientation(i)}; }

  void set(std::size_t i, const Gyroplane& plane);

  std::vector<double>& offsets() { return offsets_; }
  const std::vector<double>& offsets() const { return offsets_; }
  std::vector<double>& orientations() { return orientations_; }
  const std::vector<double>& orientations() const { return orientations_; }

 private:
  std::size_t planes_ = 0;
  std::size_t dim_ = 0;
  Curvature c_{};
  std::vector<double> offsets_;
  std::vector<double> orientations_;
};

struct AlphaBeta {
  double alpha;
  double beta;
};

struct MobiusProducts {
  double inner;   // <p_hat (+) z, w>
  double sqnorm;  // |p_hat (+) z|^2
};

/// The five scalars the factorized Mobius products are built from.
struct PairScalars {
  double p_dot_z;
  double p_sq;
  double z_sq;
  double p_dot_w;
  double z_dot_w;
};

/// Coefficients with p_hat (+)_c z == alpha * p_hat + beta * z.
AlphaBeta compute_alpha_beta(std::span<const double> p_hat, std::span<const double> z, Curvature c);
AlphaBeta compute_alpha_beta(double p_dot_z, double p_sq, double z_sq, Curvature c);

MobiusProducts mobius_products(std::span<const double> p_hat, std::span<const double> z,
                               std::span<const double> w, Curvature c);
MobiusProducts mobius_products(const PairScalars& s, Curvature c);

/// Logit from the Mobius products and per-plane constants. Throws
/// std::domain_error when 1 - c * sqnorm < 1e-12.
double logit_from_products(const MobiusProducts& m, double lambda_p, double w_norm, Curvature c);

/// Nonnegative hyperbolic distance from z to the plane.
double gyroplane_distance(std::span<const double> z, const GyroplaneView& plane, Curvature c);
double gyroplane_distance(std::span<const double> z, const Gyroplane& plane, Curvature c);

/// Signed logit of z for the plane.
double logit(std::span<const double> z, const GyroplaneView& plane, Curvature c);
double logit(std::span<const double> z, const Gyroplane& plane, Curvature c);

/// Per pixel and plane logits plus a mask of pixels that hit a domain error.
/// Flagged pixels carry all-zero logits.
struct LogitGrid {
  Field<double> values;
  Map2D<std::uint8_t> flagged;

  std::size_t flagged_count() const;
};

/// Factorized kernel, OpenMP-parallel over pixels. Scratch buffers (the alpha
/// and beta fields plus per-pixel and per-plane scalars) come from `scratch`.
LogitGrid logits_tractable(const Field<double>& grid, const GyroplaneBank& bank,
                           std::pmr::memory_resource* scratch = std::pmr::new_delete_resource());

/// Single-threaded reference of logits_tractable with the same pass structure.
LogitGrid logits_tractable_serial(const Field<double>& grid, const GyroplaneBank& bank,
                                  std::pmr::memory_resource* scratch = std::pmr::new_delete_resource());

inline constexpr std::size_t kDefaultNaiveCapBytes = std::size_t{2} << 30;

/// Estimated bytes of the explicit Mobius field for a naive evaluation.
std::size_t naive_buffer_bytes(std::size_t pixels, std::size_t planes, std::size_t dim);

/// Explicit evaluation: materializes -p_y (+) z_ij for every pixel and plane.
/// Throws std::length_error when the Mobius field would exceed cap_bytes.
LogitGrid logits_naive(const Field<double>& grid, const GyroplaneBank& bank,
                       std::size_t cap_bytes = kDefaultNaiveCapBytes,
                       std::pmr::memory_resource* scratch = std::pmr::new_delete_resource());

/// Per-pixel softmax over the channel axis. Flagged pixels get uniform rows.
Field<double> class_probabilities(const LogitGrid& logits);

}  // namespace hyperseg
