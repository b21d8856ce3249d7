#include "mcnet/color.hpp"

#include <algorithm>

namespace mcnet {

ImageTensor rgb_to_y(const ImageTensor& rgb) {
  if (rgb.channels() != 3) {
    throw DimensionError("rgb_to_y: expected 3 channels, got " +
                         std::to_string(rgb.channels()));
  }
  ImageTensor y(rgb.height(), rgb.width(), 1);
  auto r = rgb.plane(0);
  auto g = rgb.plane(1);
  auto b = rgb.plane(2);
  auto out = y.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = (65.481 * r[i] + 128.553 * g[i] + 24.966 * b[i] + 16.0) / 255.0;
    out[i] = std::clamp(v, 0.0, 1.0);
  }
  return y;
}

ImageTensor to_luma(const ImageTensor& image) {
  if (image.channels() == 1) return image;
  return rgb_to_y(image);
}

}  // namespace mcnet
