#pragma once

// Exact Euclidean distance transform (lower envelope of parabolas, one pass
// over columns and one over rows).

#include <cstdint>

#include "hyperseg/field.hpp"
#include "hyperseg/synth.hpp"

namespace hyperseg {

/// Squared distance from every pixel to the nearest nonzero seed. Pixels with
/// no seed anywhere get +infinity. Rows and columns run in parallel.
Map2D<double> squared_edt(const Map2D<std::uint8_t>& seeds);
Map2D<double> squared_edt_serial(const Map2D<std::uint8_t>& seeds);

/// Distance in pixels from each labelled pixel to the nearest labelled pixel
/// of a different class. Ignored pixels get NaN; single-class images give
/// +infinity everywhere.
Map2D<double> boundary_distance(const LabelMap& labels);
Map2D<double> boundary_distance_serial(const LabelMap& labels);

}  // namespace hyperseg
