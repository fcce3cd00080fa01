#include "hyperseg/distance_transform.hpp"

#include <cmath>
#include <limits>
#include <set>
#include <vector>

namespace hyperseg {

namespace {

using Index = std::ptrdiff_t;

constexpr double kFar = 1e20;

// 1-D squared distance transform of f into d (Felzenszwalb & Huttenlocher).
void edt_1d(const double* f, double* d, std::size_t n, std::size_t* v, double* z) {
  if (n == 0) return;
  std::size_t k = 0;
  v[0] = 0;
  z[0] = -std::numeric_limits<double>::infinity();
  z[1] = std::numeric_limits<double>::infinity();
  for (std::size_t q = 1; q < n; ++q) {
    const auto qd = static_cast<double>(q);
    double s;
    // z[0] is -inf, so the loop stops at k = 0 at the latest.
    while (true) {
      const auto vk = static_cast<double>(v[k]);
      s = ((f[q] + qd * qd) - (f[v[k]] + vk * vk)) / (2.0 * qd - 2.0 * vk);
      if (s > z[k]) break;
      --k;
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = std::numeric_limits<double>::infinity();
  }
  k = 0;
  for (std::size_t q = 0; q < n; ++q) {
    while (z[k + 1] < static_cast<double>(q)) ++k;
    const double dq = static_cast<double>(q) - static_cast<double>(v[k]);
    d[q] = dq * dq + f[v[k]];
  }
}

Map2D<double> edt_impl(const Map2D<std::uint8_t>& seeds, bool parallel) {
  const std::size_t H = seeds.height(), W = seeds.width();
  Map2D<double> out(H, W);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = seeds[i] ? 0.0 : kFar;
  const std::size_t longest = std::max(H, W);

#pragma omp parallel if (parallel)
  {
    std::vector<double> f(longest), d(longest), z(longest + 1);
    std::vector<std::size_t> v(longest);
#pragma omp for schedule(static)
    for (Index c = 0; c < static_cast<Index>(W); ++c) {
      for (std::size_t r = 0; r < H; ++r) f[r] = out(r, static_cast<std::size_t>(c));
      edt_1d(f.data(), d.data(), H, v.data(), z.data());
      for (std::size_t r = 0; r < H; ++r) out(r, static_cast<std::size_t>(c)) = d[r];
    }
#pragma omp for schedule(static)
    for (Index r = 0; r < static_cast<Index>(H); ++r) {
      for (std::size_t c = 0; c < W; ++c) f[c] = out(static_cast<std::size_t>(r), c);
      edt_1d(f.data(), d.data(), W, v.data(), z.data());
      for (std::size_t c = 0; c < W; ++c) out(static_cast<std::size_t>(r), c) = d[c];
    }
  }
  for (double& x : out.data())
    if (x >= kFar * 0.5) x = std::numeric_limits<double>::infinity();
  return out;
}

Map2D<double> boundary_impl(const LabelMap& labels, bool parallel) {
  std::set<std::uint8_t> classes;
  for (std::uint8_t l : labels.data())
    if (l != kIgnoreLabel) classes.insert(l);
  Map2D<double> out(labels.height(), labels.width(), std::numeric_limits<double>::quiet_NaN());
  Map2D<std::uint8_t> seeds(labels.height(), labels.width());
  for (std::uint8_t cls : classes) {
    for (std::size_t i = 0; i < labels.size(); ++i) seeds[i] = labels[i] != kIgnoreLabel && labels[i] != cls;
    const Map2D<double> sq = edt_impl(seeds, parallel);
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == cls) out[i] = std::sqrt(sq[i]);
  }
  return out;
}

}  // namespace

Map2D<double> squared_edt(const Map2D<std::uint8_t>& seeds) { return edt_impl(seeds, true); }
Map2D<double> squared_edt_serial(const Map2D<std::uint8_t>& seeds) { return edt_impl(seeds, false); }

Map2D<double> boundary_distance(const LabelMap& labels) { return boundary_impl(labels, true); }
Map2D<double> boundary_distance_serial(const LabelMap& labels) { return boundary_impl(labels, false); }

}  // namespace hyperseg
