#pragma once

#include "mcnet/tensor.hpp"

namespace mcnet {

constexpr double kPsnrCap = 100.0;

/// Peak-1 PSNR in dB over the image with `shave` border pixels removed on
/// every side. Identical images return `cap`.
double psnr(const ImageTensor& reference, const ImageTensor& candidate, int shave = 0,
            double cap = kPsnrCap);

/// Mean SSIM (11x11 Gaussian window, sigma 1.5, K1 = 0.01, K2 = 0.03,
/// dynamic range 1) over the valid region of the shaved single-channel images.
double ssim(const ImageTensor& reference, const ImageTensor& candidate, int shave = 0);

double mean_squared_error(const ImageTensor& a, const ImageTensor& b);

}  // namespace mcnet
