#pragma once

#include <cstdint>
#include <vector>

#include "hyperseg/field.hpp"
#include "hyperseg/hierarchy.hpp"

namespace hyperseg {

inline constexpr std::uint8_t kIgnoreLabel = 255;

using LabelMap = Map2D<std::uint8_t>;

/// One image: per-pixel feature vectors and class ids (kIgnoreLabel = unlabeled).
struct SegSample {
  Field<double> features;
  LabelMap labels;
};

using Dataset = std::vector<SegSample>;

struct GeneratorConfig {
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t samples = 20;
  std::size_t feature_dim = 8;
  std::size_t min_shapes = 1;
  std::size_t max_shapes = 3;
  std::size_t min_rect_side = 16;
  std::size_t max_rect_side = 32;
  std::size_t min_disc_radius = 8;
  std::size_t max_disc_radius = 16;
  double noise = 0.3;
  /// Weight of the 5x5 box-blurred class-mean image mixed into each pixel.
  /// Pixels next to a class boundary pick up part of the neighbouring class.
  double edge_mix = 0.5;
  std::size_t edge_radius = 2;
};

/// Class-conditional feature means, one row per leaf. Leaves sharing a parent
/// sit at distance 1 from each other; leaves under different parents are at
/// least 3 apart.
std::vector<std::vector<double>> class_means(const ClassHierarchy& tree, std::size_t feature_dim);

/// Deterministic synthetic dataset. The tree must contain a leaf named
/// "background". Features are stored at float precision.
Dataset generate(const GeneratorConfig& cfg, const ClassHierarchy& tree, std::uint64_t seed);

/// Leaf id of the "background" class, if the tree has one.
std::optional<std::size_t> background_leaf(const ClassHierarchy& tree);

/// Hierarchy used by the default toy experiments: two parents with three
/// leaves each, one of them "background".
ClassHierarchy toy_hierarchy();

}  // namespace hyperseg
