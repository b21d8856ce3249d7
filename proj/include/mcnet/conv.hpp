#pragma once

#include <vector>

#include "mcnet/tensor.hpp"

namespace mcnet {

enum class Padding { zero, replicate, circular };

/// Multi-channel 2-D cross-correlation kernel.
///
/// Output pixel (y, x) of channel o reads input pixels
/// (y * stride + a - anchor_y, x * stride + b - anchor_x) for every tap (a, b);
/// reads outside the image are resolved by `padding`. The default anchor is
/// the kernel centre, which gives "same" output size for odd kernels at
/// stride 1. Output extent is ceil(input / stride) along each axis.
struct ConvKernel2D {
  int kernel_h = 0;
  int kernel_w = 0;
  int in_channels = 0;
  int out_channels = 0;
  int stride = 1;
  Padding padding = Padding::zero;
  int anchor_y = 0;
  int anchor_x = 0;
  std::vector<double> taps;  // [out][in][kernel_h][kernel_w]

  ConvKernel2D() = default;
  ConvKernel2D(int kh, int kw, int cin, int cout, int stride = 1,
               Padding padding = Padding::zero);

  double& operator()(int o, int i, int a, int b) {
    return taps[((static_cast<std::size_t>(o) * in_channels + i) * kernel_h + a) *
                    kernel_w + b];
  }
  double operator()(int o, int i, int a, int b) const {
    return taps[((static_cast<std::size_t>(o) * in_channels + i) * kernel_h + a) *
                    kernel_w + b];
  }
  std::size_t size() const noexcept { return taps.size(); }
  bool same_layout(const ConvKernel2D& other) const noexcept;
};

int conv_output_extent(int input_extent, int stride);

ImageTensor conv2d(const ImageTensor& input, const ConvKernel2D& kernel);

/// Adjoint of conv2d with respect to its input. `in_h`/`in_w` give the input
/// extent (needed when stride > 1 makes it ambiguous).
ImageTensor conv2d_adjoint(const ImageTensor& cotangent, const ConvKernel2D& kernel,
                           int in_h, int in_w);
ImageTensor conv2d_adjoint(const ImageTensor& cotangent, const ConvKernel2D& kernel);

/// Gradient of <conv2d(input, K), cotangent> with respect to the taps of K.
/// The result has the layout of `kernel`.
ConvKernel2D conv2d_weight_grad(const ImageTensor& input, const ImageTensor& cotangent,
                                const ConvKernel2D& kernel);

}  // namespace mcnet
