#pragma once

#include "mcnet/tensor.hpp"

namespace mcnet {

/// BT.601 studio-swing luma of an RGB image in [0,1]:
/// Y = (65.481 R + 128.553 G + 24.966 B + 16) / 255, clamped to [0,1].
ImageTensor rgb_to_y(const ImageTensor& rgb);

/// Luma of a 3-channel image, or a copy of a 1-channel image.
ImageTensor to_luma(const ImageTensor& image);

}  // namespace mcnet
