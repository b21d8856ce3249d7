#pragma once

#include <cstdint>

#include "mcnet/tensor.hpp"

namespace mcnet {

/// Parameters of the dead-leaves image model: occluding disks with power-law
/// radii, each filled with a shaded gray level and, with some probability, an
/// oriented sinusoidal texture.
struct DeadLeavesConfig {
  int disks = 0;  // 0 picks a count proportional to the image area
  double min_radius = 1.5;
  double max_radius_fraction = 0.35;  // of min(height, width)
  double radius_exponent = 3.0;       // density ~ r^-exponent
  double texture_probability = 0.35;
  int supersample = 4;
  bool quantize = true;  // round to 8-bit levels like a stored image
};

/// Single-channel synthetic image in [0,1], deterministic in `seed`.
ImageTensor dead_leaves(int height, int width, std::uint64_t seed,
                        const DeadLeavesConfig& cfg = {});

}  // namespace mcnet
