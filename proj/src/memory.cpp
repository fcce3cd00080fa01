#include "hyperseg/memory.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "hyperseg/gyroplane.hpp"

namespace hyperseg {

namespace {

// Euclidean head: 4 <z - p, w>, the c = 0 limit of the hyperbolic logit. Needs
// no scratch beyond its output.
LogitGrid euclidean_logits(const Field<double>& grid, const GyroplaneBank& bank) {
  LogitGrid out{Field<double>(grid.height(), grid.width(), bank.size()),
                Map2D<std::uint8_t>(grid.height(), grid.width(), 0)};
  const std::size_t n = bank.dim();
  for (std::size_t i = 0; i < grid.pixels(); ++i) {
    const auto z = grid.pixel(i);
    auto row = out.values.pixel(i);
    for (std::size_t y = 0; y < bank.size(); ++y) {
      const auto p = bank.offset(y);
      const auto w = bank.orientation(y);
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k) s += (z[k] - p[k]) * w[k];
      row[y] = 4.0 * s;
    }
  }
  return out;
}

}  // namespace

std::string FootprintConfig::label() const {
  std::ostringstream s;
  s << width << 'x' << height << "_C" << classes << "_n" << dims << "_B" << batch;
  return s.str();
}

const char* mode_name(FootprintMode m) {
  switch (m) {
    case FootprintMode::kNaive: return "naive";
    case FootprintMode::kTractable: return "tractable";
    case FootprintMode::kEuclidean: return "euclidean";
  }
  return "?";
}

std::uint64_t footprint_model(const FootprintConfig& cfg, FootprintMode mode) {
  if (cfg.width == 0 || cfg.height == 0 || cfg.classes == 0 || cfg.dims == 0 || cfg.batch == 0 ||
      cfg.bytes_per_scalar == 0)
    throw std::invalid_argument("footprint_model: every dimension must be positive");
  using Wide = unsigned __int128;
  Wide scalars = Wide{cfg.width} * cfg.height * cfg.classes * cfg.batch;
  switch (mode) {
    case FootprintMode::kNaive: scalars *= cfg.dims; break;
    case FootprintMode::kTractable: scalars *= 2; break;
    case FootprintMode::kEuclidean: break;
  }
  const Wide bytes = scalars * cfg.bytes_per_scalar;
  if (bytes > std::numeric_limits<std::uint64_t>::max()) throw std::overflow_error("footprint_model: overflow");
  return static_cast<std::uint64_t>(bytes);
}

void* CountingResource::do_allocate(std::size_t bytes, std::size_t align) {
  void* p = upstream_->allocate(bytes, align);
  current_ += bytes;
  peak_ = std::max(peak_, current_);
  ++allocations_;
  return p;
}

void CountingResource::do_deallocate(void* p, std::size_t bytes, std::size_t align) {
  upstream_->deallocate(p, bytes, align);
  current_ -= bytes;
}

Measurement measure(const FootprintConfig& cfg, FootprintMode mode, std::uint64_t seed, std::size_t naive_cap) {
  footprint_model(cfg, mode);  // validates the config
  const Curvature c(1.0);
  const std::size_t rows = cfg.height * cfg.batch;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);

  Field<double> grid(rows, cfg.width, cfg.dims);
  for (std::size_t i = 0; i < grid.pixels(); ++i) {
    auto z = grid.pixel(i);
    for (double& v : z) v = unit(rng);
    const double r = norm(z);
    const double target = 0.9 * std::abs(unit(rng));
    for (double& v : z) v *= target / r;
  }
  GyroplaneBank bank(cfg.classes, cfg.dims, c);
  for (std::size_t y = 0; y < cfg.classes; ++y) {
    auto p = bank.offset(y);
    for (double& v : p) v = unit(rng) * 0.5 / std::sqrt(static_cast<double>(cfg.dims));
    for (double& v : bank.orientation(y)) v = unit(rng);
  }

  CountingResource counter;
  const auto start = std::chrono::steady_clock::now();
  LogitGrid out;
  switch (mode) {
    case FootprintMode::kNaive: out = logits_naive(grid, bank, naive_cap, &counter); break;
    case FootprintMode::kTractable: out = logits_tractable_serial(grid, bank, &counter); break;
    case FootprintMode::kEuclidean: out = euclidean_logits(grid, bank); break;
  }
  const auto stop = std::chrono::steady_clock::now();
  return {counter.peak(), out.values.size() * sizeof(double),
          std::chrono::duration<double, std::milli>(stop - start).count()};
}

void write_report_header(std::ostream& out) { out << "config,mode,model_bytes,measured_bytes,wall_ms\n"; }

void write_report_row(std::ostream& out, const FootprintConfig& cfg, FootprintMode mode, std::uint64_t model_bytes,
                      const Measurement* measured) {
  out << cfg.label() << ',' << mode_name(mode) << ',' << model_bytes << ',';
  if (measured)
    out << measured->peak_aux_bytes << ',' << measured->wall_ms;
  else
    out << "NA,NA";
  out << '\n';
}

}  // namespace hyperseg
