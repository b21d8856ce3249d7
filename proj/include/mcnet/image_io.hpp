#pragma once

#include <filesystem>

#include "mcnet/tensor.hpp"

namespace mcnet {

class ImageIoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Reads an 8-bit PNG (gray, RGB, with or without alpha, palette) or a binary
/// or ASCII PGM. Pixels are mapped to [0,1] by division by 255 (by the PGM
/// maxval for 16-bit PGM). Gray images yield 1 channel, colour images 3.
ImageTensor read_image(const std::filesystem::path& path);

/// Writes an 8-bit PNG of a 1- or 3-channel tensor; values are clamped to
/// [0,1] and rounded to the nearest level.
void write_png(const std::filesystem::path& path, const ImageTensor& image);

/// Binary 8-bit PGM (P5) of a single-channel tensor.
void write_pgm(const std::filesystem::path& path, const ImageTensor& image);

/// Lossless tensor file: magic "MCNT", three little-endian int32 (height,
/// width, channels), then little-endian float64 samples in planar order.
void save_tensor(const std::filesystem::path& path, const ImageTensor& image);
ImageTensor load_tensor(const std::filesystem::path& path);

}  // namespace mcnet
