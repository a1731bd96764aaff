#pragma once

#include <cstdint>
#include <vector>

#include "muasv/types.hpp"

namespace muasv {

// Partition of the image grid into contiguous superpixels. labels follows the
// row-major pixel order of HsiCube; every label in [0, superpixel_count) is
// nonempty and 4-connected.
struct SuperpixelMap {
  std::vector<Index> labels;
  Index superpixel_count = 0;
  std::vector<Index> sizes;
  Index rows = 0;
  Index cols = 0;

  Index pixel_count() const { return rows * cols; }

  void validate() const;
};

// SLIC segmentation adapted to full reflectance vectors. target_size is the
// average sampling interval sqrt(N/S); compactness weighs the spatial
// distance against the spectral one. Deterministic for fixed inputs (the
// seed is accepted for interface stability; the clustering itself has no
// random component). Orphan fragments smaller than target_size^2/4 are
// merged into the spatially adjacent cluster with the nearest mean spectrum.
SuperpixelMap slic_segment(const HsiCube& cube, double target_size,
                           double compactness, std::uint64_t seed = 0);

}  // namespace muasv
