#include "hyperseg/gyroplane.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>

namespace hyperseg {

namespace {

using Index = std::ptrdiff_t;

std::optional<double> try_logit(const MobiusProducts& m, double lambda_p, double w_norm, Curvature c) {
  if (c.euclidean()) return 2.0 * lambda_p * m.inner;
  const double k = c.value();
  const double denom = 1.0 - k * m.sqnorm;
  if (!(denom >= kMinDenominator)) return std::nullopt;
  const double sc = c.sqrt();
  const double arg = 2.0 * sc * m.inner / (denom * w_norm);
  return lambda_p * w_norm / sc * std::asinh(arg);
}

std::optional<AlphaBeta> try_alpha_beta(double p_dot_z, double p_sq, double z_sq, Curvature c) {
  const double k = c.value();
  const double denom = 1.0 + 2.0 * k * p_dot_z + k * k * p_sq * z_sq;
  if (!(std::abs(denom) >= kMinDenominator)) return std::nullopt;
  return AlphaBeta{(1.0 + 2.0 * k * p_dot_z + k * z_sq) / denom, (1.0 - k * p_sq) / denom};
}

void check_grid(const Field<double>& grid, const GyroplaneBank& bank) {
  if (grid.channels() != bank.dim())
    throw std::invalid_argument("logits: embedding dimension does not match the gyroplane bank");
}

// Zeroes the logits of every flagged pixel.
void clear_flagged(LogitGrid& out) {
  for (std::size_t i = 0; i < out.flagged.size(); ++i)
    if (out.flagged[i])
      for (double& v : out.values.pixel(i)) v = 0.0;
}

LogitGrid tractable_kernel(const Field<double>& grid, const GyroplaneBank& bank,
                           std::pmr::memory_resource* scratch, bool parallel) {
  check_grid(grid, bank);
  const Curvature c = bank.curvature();
  const std::size_t n = bank.dim();
  const std::size_t planes = bank.size();
  const auto pixels = static_cast<Index>(grid.pixels());

  LogitGrid out{Field<double>(grid.height(), grid.width(), planes),
                Map2D<std::uint8_t>(grid.height(), grid.width(), 0)};

  // Per-plane constants.
  std::pmr::vector<double> p_hat(planes * n, scratch);
  std::pmr::vector<double> p_sq(planes, scratch);
  std::pmr::vector<double> p_dot_w(planes, scratch);
  std::pmr::vector<double> w_norm(planes, scratch);
  std::pmr::vector<double> lambda(planes, scratch);
  for (std::size_t y = 0; y < planes; ++y) {
    const auto p = bank.offset(y);
    const auto w = bank.orientation(y);
    std::span<double> ph(p_hat.data() + y * n, n);
    for (std::size_t i = 0; i < n; ++i) ph[i] = -p[i];
    p_sq[y] = squared_norm(ph);
    p_dot_w[y] = dot(ph, w);
    w_norm[y] = norm(w);
    lambda[y] = conformal_factor(p, c);
  }

  std::pmr::vector<double> z_sq(grid.pixels(), scratch);
  std::pmr::vector<double> alpha(grid.pixels() * planes, scratch);
  std::pmr::vector<double> beta(grid.pixels() * planes, scratch);

  // Pass 1: alpha and beta fields. <p_hat, z> is parked in the output slot.
#pragma omp parallel for schedule(static) if (parallel)
  for (Index i = 0; i < pixels; ++i) {
    const auto z = grid.pixel(static_cast<std::size_t>(i));
    auto row = out.values.pixel(static_cast<std::size_t>(i));
    const double zz = squared_norm(z);
    z_sq[i] = zz;
    for (std::size_t y = 0; y < planes; ++y) {
      const double pz = dot({p_hat.data() + y * n, n}, z);
      const auto ab = try_alpha_beta(pz, p_sq[y], zz, c);
      const std::size_t slot = static_cast<std::size_t>(i) * planes + y;
      if (!ab) {
        out.flagged[i] = 1;
        alpha[slot] = beta[slot] = 0.0;
      } else {
        alpha[slot] = ab->alpha;
        beta[slot] = ab->beta;
      }
      row[y] = pz;
    }
  }

  // Pass 2: inner product and squared norm from the scalar fields, then logits.
#pragma omp parallel for schedule(static) if (parallel)
  for (Index i = 0; i < pixels; ++i) {
    if (out.flagged[i]) continue;
    const auto z = grid.pixel(static_cast<std::size_t>(i));
    auto row = out.values.pixel(static_cast<std::size_t>(i));
    for (std::size_t y = 0; y < planes; ++y) {
      const std::size_t slot = static_cast<std::size_t>(i) * planes + y;
      const double a = alpha[slot];
      const double b = beta[slot];
      const double pz = row[y];
      const double zw = dot(z, bank.orientation(y));
      const MobiusProducts m{a * p_dot_w[y] + b * zw,
                             a * a * p_sq[y] + 2.0 * a * b * pz + b * b * z_sq[i]};
      const auto value = try_logit(m, lambda[y], w_norm[y], c);
      if (!value) {
        out.flagged[i] = 1;
        break;
      }
      row[y] = *value;
    }
  }

  clear_flagged(out);
  return out;
}

}  // namespace

Gyroplane::Gyroplane(Vector offset, Vector orientation)
    : offset_(std::move(offset)), orientation_(std::move(orientation)) {
  if (offset_.size() != orientation_.size())
    throw std::invalid_argument("Gyroplane: offset and orientation dimensions differ");
  if (norm(orientation_) < kSmallNorm) throw std::invalid_argument("Gyroplane: zero orientation");
}

GyroplaneBank::GyroplaneBank(std::size_t planes, std::size_t dim, Curvature c)
    : planes_(planes), dim_(dim), c_(c), offsets_(planes * dim, 0.0), orientations_(planes * dim, 0.0) {}

void GyroplaneBank::set(std::size_t i, const Gyroplane& plane) {
  if (plane.offset().size() != dim_) throw std::invalid_argument("GyroplaneBank::set: dimension mismatch");
  std::copy(plane.offset().begin(), plane.offset().end(), offset(i).begin());
  std::copy(plane.orientation().begin(), plane.orientation().end(), orientation(i).begin());
}

AlphaBeta compute_alpha_beta(double p_dot_z, double p_sq, double z_sq, Curvature c) {
  const auto ab = try_alpha_beta(p_dot_z, p_sq, z_sq, c);
  if (!ab) throw std::domain_error("compute_alpha_beta: degenerate denominator");
  return *ab;
}

AlphaBeta compute_alpha_beta(std::span<const double> p_hat, std::span<const double> z, Curvature c) {
  return compute_alpha_beta(dot(p_hat, z), squared_norm(p_hat), squared_norm(z), c);
}

MobiusProducts mobius_products(const PairScalars& s, Curvature c) {
  const AlphaBeta ab = compute_alpha_beta(s.p_dot_z, s.p_sq, s.z_sq, c);
  return {ab.alpha * s.p_dot_w + ab.beta * s.z_dot_w,
          ab.alpha * ab.alpha * s.p_sq + 2.0 * ab.alpha * ab.beta * s.p_dot_z + ab.beta * ab.beta * s.z_sq};
}

MobiusProducts mobius_products(std::span<const double> p_hat, std::span<const double> z,
                               std::span<const double> w, Curvature c) {
  return mobius_products(
      PairScalars{dot(p_hat, z), squared_norm(p_hat), squared_norm(z), dot(p_hat, w), dot(z, w)}, c);
}

double logit_from_products(const MobiusProducts& m, double lambda_p, double w_norm, Curvature c) {
  const auto value = try_logit(m, lambda_p, w_norm, c);
  if (!value) throw std::domain_error("logit: Mobius sum too close to the ball boundary");
  return *value;
}

namespace {

MobiusProducts products_for(std::span<const double> z, const GyroplaneView& plane, Curvature c) {
  if (z.size() != plane.offset.size()) throw std::invalid_argument("gyroplane: dimension mismatch");
  Vector p_hat(plane.offset.size());
  for (std::size_t i = 0; i < p_hat.size(); ++i) p_hat[i] = -plane.offset[i];
  return mobius_products(p_hat, z, plane.orientation, c);
}

GyroplaneView view_of(const Gyroplane& g) { return {g.offset(), g.orientation()}; }

}  // namespace

double gyroplane_distance(std::span<const double> z, const GyroplaneView& plane, Curvature c) {
  const MobiusProducts m = products_for(z, plane, c);
  if (m.inner == 0.0) return 0.0;
  const double w_norm = norm(plane.orientation);
  if (c.euclidean()) return std::abs(2.0 * m.inner / w_norm);
  const double denom = 1.0 - c.value() * m.sqnorm;
  if (!(denom >= kMinDenominator)) throw std::domain_error("gyroplane_distance: Mobius sum too close to the ball boundary");
  return std::abs(std::asinh(2.0 * c.sqrt() * m.inner / (denom * w_norm)) / c.sqrt());
}

double gyroplane_distance(std::span<const double> z, const Gyroplane& plane, Curvature c) {
  return gyroplane_distance(z, view_of(plane), c);
}

double logit(std::span<const double> z, const GyroplaneView& plane, Curvature c) {
  const MobiusProducts m = products_for(z, plane, c);
  return logit_from_products(m, conformal_factor(plane.offset, c), norm(plane.orientation), c);
}

double logit(std::span<const double> z, const Gyroplane& plane, Curvature c) {
  return logit(z, view_of(plane), c);
}

std::size_t LogitGrid::flagged_count() const {
  return static_cast<std::size_t>(std::count(flagged.data().begin(), flagged.data().end(), 1));
}

LogitGrid logits_tractable(const Field<double>& grid, const GyroplaneBank& bank,
                           std::pmr::memory_resource* scratch) {
  return tractable_kernel(grid, bank, scratch, true);
}

LogitGrid logits_tractable_serial(const Field<double>& grid, const GyroplaneBank& bank,
                                  std::pmr::memory_resource* scratch) {
  return tractable_kernel(grid, bank, scratch, false);
}

std::size_t naive_buffer_bytes(std::size_t pixels, std::size_t planes, std::size_t dim) {
  const auto wide = static_cast<unsigned __int128>(pixels) * planes * dim * sizeof(double);
  if (wide > std::numeric_limits<std::size_t>::max()) return std::numeric_limits<std::size_t>::max();
  return static_cast<std::size_t>(wide);
}

LogitGrid logits_naive(const Field<double>& grid, const GyroplaneBank& bank, std::size_t cap_bytes,
                       std::pmr::memory_resource* scratch) {
  check_grid(grid, bank);
  const std::size_t n = bank.dim();
  const std::size_t planes = bank.size();
  if (naive_buffer_bytes(grid.pixels(), planes, n) > cap_bytes)
    throw std::length_error("logits_naive: Mobius field exceeds the configured buffer cap");
  const Curvature c = bank.curvature();

  LogitGrid out{Field<double>(grid.height(), grid.width(), planes),
                Map2D<std::uint8_t>(grid.height(), grid.width(), 0)};

  // The full W x H x C x n field of -p_y (+) z_ij.
  std::pmr::vector<double> sums(grid.pixels() * planes * n, scratch);
  Vector p_hat(n);
  for (std::size_t i = 0; i < grid.pixels(); ++i) {
    const auto z = grid.pixel(i);
    for (std::size_t y = 0; y < planes; ++y) {
      const auto p = bank.offset(y);
      for (std::size_t k = 0; k < n; ++k) p_hat[k] = -p[k];
      try {
        const Vector m = mobius_add(p_hat, z, c);
        std::copy(m.begin(), m.end(), sums.begin() + static_cast<Index>((i * planes + y) * n));
      } catch (const std::domain_error&) {
        out.flagged[i] = 1;
      }
    }
  }

  for (std::size_t i = 0; i < grid.pixels(); ++i) {
    if (out.flagged[i]) continue;
    auto row = out.values.pixel(i);
    for (std::size_t y = 0; y < planes; ++y) {
      const std::span<const double> m(sums.data() + (i * planes + y) * n, n);
      const auto w = bank.orientation(y);
      const auto value = try_logit({dot(m, w), squared_norm(m)}, conformal_factor(bank.offset(y), c), norm(w), c);
      if (!value) {
        out.flagged[i] = 1;
        break;
      }
      row[y] = *value;
    }
  }

  clear_flagged(out);
  return out;
}

Field<double> class_probabilities(const LogitGrid& logits) {
  const auto& v = logits.values;
  Field<double> out(v.height(), v.width(), v.channels());
  const std::size_t classes = v.channels();
  if (classes == 0) return out;
  const auto pixels = static_cast<Index>(v.pixels());
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < pixels; ++i) {
    const auto in = v.pixel(static_cast<std::size_t>(i));
    auto row = out.pixel(static_cast<std::size_t>(i));
    if (logits.flagged[i]) {
      std::fill(row.begin(), row.end(), 1.0 / static_cast<double>(classes));
      continue;
    }
    const double top = *std::max_element(in.begin(), in.end());
    double total = 0.0;
    for (std::size_t y = 0; y < classes; ++y) total += row[y] = std::exp(in[y] - top);
    for (double& p : row) p /= total;
  }
  return out;
}

}  // namespace hyperseg
