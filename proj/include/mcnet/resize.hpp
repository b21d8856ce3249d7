#pragma once

#include <vector>

#include "mcnet/tensor.hpp"

namespace mcnet {

/// Keys cubic convolution kernel with a = -0.5.
double cubic_kernel(double x);

/// Separable bicubic resampling using the pixel-centre mapping
/// u = (o + 0.5) / scale - 0.5 and half-sample symmetric borders. When
/// shrinking with `antialias`, the kernel is stretched by 1/scale.
ImageTensor bicubic_resize(const ImageTensor& image, int out_h, int out_w,
                           bool antialias = true);

/// Bicubic upsampling by an integer factor; this is the built-in backbone.
ImageTensor bicubic_upsample(const ImageTensor& image, int scale);

/// One-dimensional anti-aliased bicubic decimation filter for an integer
/// factor: output o reads input o * scale + k - anchor with weight taps[k].
struct DecimationTaps {
  std::vector<double> taps;
  int anchor = 0;
};
DecimationTaps bicubic_decimation_taps(int scale);

}  // namespace mcnet
