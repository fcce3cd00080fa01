#pragma once

// Analytic activation footprint of the three logit formulations, and a
// measured counterpart that runs the kernels under a counting allocator.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <memory_resource>
#include <string>

namespace hyperseg {

struct FootprintConfig {
  std::uint64_t width = 513;
  std::uint64_t height = 513;
  std::uint64_t classes = 100;
  std::uint64_t dims = 256;
  std::uint64_t batch = 5;
  std::uint64_t bytes_per_scalar = 4;

  std::string label() const;
};

enum class FootprintMode { kNaive, kTractable, kEuclidean };

const char* mode_name(FootprintMode m);

/// naive: W*H*C*n*B scalars (the explicit Mobius field); tractable: 2*W*H*C*B
/// (alpha and beta); euclidean: W*H*C*B (the logit field). Throws
/// std::overflow_error if the byte count does not fit in 64 bits.
std::uint64_t footprint_model(const FootprintConfig& cfg, FootprintMode mode);

/// Wraps another resource and records live and peak bytes.
class CountingResource : public std::pmr::memory_resource {
 public:
  explicit CountingResource(std::pmr::memory_resource* upstream = std::pmr::new_delete_resource())
      : upstream_(upstream) {}

  std::size_t current() const { return current_; }
  std::size_t peak() const { return peak_; }
  std::size_t allocations() const { return allocations_; }
  void reset_peak() { peak_ = current_; }

 private:
  void* do_allocate(std::size_t bytes, std::size_t align) override;
  void do_deallocate(void* p, std::size_t bytes, std::size_t align) override;
  bool do_is_equal(const std::pmr::memory_resource& other) const noexcept override { return this == &other; }

  std::pmr::memory_resource* upstream_;
  std::size_t current_ = 0;
  std::size_t peak_ = 0;
  std::size_t allocations_ = 0;
};

struct Measurement {
  std::size_t peak_aux_bytes = 0;  // scratch attributable to the kernel
  std::size_t output_bytes = 0;    // the logit field, reported separately
  double wall_ms = 0.0;
};

/// Runs one kernel single-threaded on a random batch (stacked along the rows)
/// with 64-bit scalars. Naive mode throws std::length_error above `naive_cap`.
Measurement measure(const FootprintConfig& cfg, FootprintMode mode, std::uint64_t seed = 0,
                    std::size_t naive_cap = std::size_t{2} << 30);

/// "config,mode,model_bytes,measured_bytes,wall_ms" header and rows.
void write_report_header(std::ostream& out);
void write_report_row(std::ostream& out, const FootprintConfig& cfg, FootprintMode mode, std::uint64_t model_bytes,
                      const Measurement* measured);

}  // namespace hyperseg
