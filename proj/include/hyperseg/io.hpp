#pragma once

// On-disk formats.
//
// Tensor file:  "HTNS" | u32 rank | rank x u64 dims | prod(dims) x f32, all little-endian.
// Label map:    binary 8-bit graymap (P5, maxval 255); 255 marks ignored pixels.
// Manifest:     one "<features path> <labels path>" pair per line, relative to
//               the dataset directory. The directory also holds hierarchy.json.

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "hyperseg/hierarchy.hpp"
#include "hyperseg/synth.hpp"

namespace hyperseg {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Tensor {
  std::vector<std::uint64_t> shape;
  std::vector<float> values;

  bool operator==(const Tensor&) const = default;
};

inline constexpr std::size_t kMaxTensorRank = 4;

void write_tensor(const std::filesystem::path& path, const Tensor& tensor);
Tensor read_tensor(const std::filesystem::path& path);

Tensor to_tensor(const Field<double>& field);
Field<double> field_from_tensor(const Tensor& tensor);

void write_labels(const std::filesystem::path& path, const LabelMap& labels);
LabelMap read_labels(const std::filesystem::path& path);
/// Checks every value fits the 8-bit format.
LabelMap make_label_map(std::size_t height, std::size_t width, const std::vector<int>& values);

void save_dataset(const std::filesystem::path& dir, const Dataset& data, const ClassHierarchy& tree);
Dataset load_dataset(const std::filesystem::path& dir);

/// FNV-1a over every file named in the manifest, in manifest order.
std::uint64_t dataset_checksum(const std::filesystem::path& dir);

}  // namespace hyperseg
