#include "mcnet/conv.hpp"

#include <Eigen/Core>
#include <algorithm>

namespace mcnet {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMap = Eigen::Map<RowMatrix>;
using ConstRowMap = Eigen::Map<const RowMatrix>;

// Largest number of output pixels gathered into one im2col block.
constexpr int kTilePixels = 8192;

int resolve(int i, int extent, Padding padding) {
  if (i >= 0 && i < extent) return i;
  switch (padding) {
    case Padding::zero:
      return -1;
    case Padding::replicate:
      return std::clamp(i, 0, extent - 1);
    case Padding::circular:
      return ((i % extent) + extent) % extent;
  }
  return -1;
}

// index[o * taps + a] = source coordinate (or -1) for output o and tap a.
std::vector<int> index_table(int in_extent, int out_extent, int taps, int stride,
                             int anchor, Padding padding) {
  std::vector<int> table(static_cast<std::size_t>(out_extent) * taps);
  for (int o = 0; o < out_extent; ++o)
    for (int a = 0; a < taps; ++a)
      table[o * taps + a] = resolve(o * stride + a - anchor, in_extent, padding);
  return table;
}

struct Geometry {
  int in_h, in_w, out_h, out_w;
  std::vector<int> rows, cols;
};

Geometry make_geometry(int in_h, int in_w, const ConvKernel2D& k) {
  if (k.stride < 1) throw DimensionError("conv2d: stride must be >= 1");
  Geometry g;
  g.in_h = in_h;
  g.in_w = in_w;
  g.out_h = conv_output_extent(in_h, k.stride);
  g.out_w = conv_output_extent(in_w, k.stride);
  g.rows = index_table(in_h, g.out_h, k.kernel_h, k.stride, k.anchor_y, k.padding);
  g.cols = index_table(in_w, g.out_w, k.kernel_w, k.stride, k.anchor_x, k.padding);
  return g;
}

int tile_rows(const Geometry& g) { return std::max(1, kTilePixels / std::max(1, g.out_w)); }

// Gather output rows [y0, y1) into an im2col block (K x n), row-major.
void gather(const ImageTensor& input, const ConvKernel2D& k, const Geometry& g, int y0,
            int y1, RowMatrix& cols) {
  const int n = (y1 - y0) * g.out_w;
  cols.resize(static_cast<Eigen::Index>(k.in_channels) * k.kernel_h * k.kernel_w, n);
  for (int ci = 0; ci < k.in_channels; ++ci) {
    auto plane = input.plane(ci);
    for (int a = 0; a < k.kernel_h; ++a) {
      for (int b = 0; b < k.kernel_w; ++b) {
        double* dst = cols.row((ci * k.kernel_h + a) * k.kernel_w + b).data();
        for (int y = y0; y < y1; ++y) {
          const int sy = g.rows[y * k.kernel_h + a];
          double* row = dst + (y - y0) * g.out_w;
          if (sy < 0) {
            std::fill(row, row + g.out_w, 0.0);
            continue;
          }
          const double* src = plane.data() + static_cast<std::size_t>(sy) * g.in_w;
          for (int x = 0; x < g.out_w; ++x) {
            const int sx = g.cols[x * k.kernel_w + b];
            row[x] = sx < 0 ? 0.0 : src[sx];
          }
        }
      }
    }
  }
}

// Adjoint of gather: scatter-add an im2col block back into `out`.
void scatter(const RowMatrix& cols, const ConvKernel2D& k, const Geometry& g, int y0,
             int y1, ImageTensor& out) {
  for (int ci = 0; ci < k.in_channels; ++ci) {
    auto plane = out.plane(ci);
    for (int a = 0; a < k.kernel_h; ++a) {
      for (int b = 0; b < k.kernel_w; ++b) {
        const double* src = cols.row((ci * k.kernel_h + a) * k.kernel_w + b).data();
        for (int y = y0; y < y1; ++y) {
          const int sy = g.rows[y * k.kernel_h + a];
          if (sy < 0) continue;
          const double* row = src + (y - y0) * g.out_w;
          double* dst = plane.data() + static_cast<std::size_t>(sy) * g.in_w;
          for (int x = 0; x < g.out_w; ++x) {
            const int sx = g.cols[x * k.kernel_w + b];
            if (sx >= 0) dst[sx] += row[x];
          }
        }
      }
    }
  }
}

void check_kernel(const ConvKernel2D& k) {
  if (k.kernel_h <= 0 || k.kernel_w <= 0 || k.in_channels <= 0 || k.out_channels <= 0 ||
      k.taps.size() != static_cast<std::size_t>(k.kernel_h) * k.kernel_w *
                           k.in_channels * k.out_channels) {
    throw DimensionError("conv2d: malformed kernel");
  }
}

}  // namespace

ConvKernel2D::ConvKernel2D(int kh, int kw, int cin, int cout, int stride_,
                           Padding padding_)
    : kernel_h(kh),
      kernel_w(kw),
      in_channels(cin),
      out_channels(cout),
      stride(stride_),
      padding(padding_),
      anchor_y((kh - 1) / 2),
      anchor_x((kw - 1) / 2),
      taps(static_cast<std::size_t>(kh) * kw * cin * cout, 0.0) {
  if (kh <= 0 || kw <= 0 || cin <= 0 || cout <= 0) {
    throw DimensionError("ConvKernel2D: dimensions must be positive");
  }
  if (stride_ < 1) throw DimensionError("ConvKernel2D: stride must be >= 1");
}

bool ConvKernel2D::same_layout(const ConvKernel2D& o) const noexcept {
  return kernel_h == o.kernel_h && kernel_w == o.kernel_w &&
         in_channels == o.in_channels && out_channels == o.out_channels;
}

int conv_output_extent(int input_extent, int stride) {
  return input_extent <= 0 ? 0 : (input_extent - 1) / stride + 1;
}

ImageTensor conv2d(const ImageTensor& input, const ConvKernel2D& kernel) {
  check_kernel(kernel);
  if (input.channels() != kernel.in_channels) {
    throw DimensionError("conv2d: input has " + std::to_string(input.channels()) +
                         " channels, kernel expects " +
                         std::to_string(kernel.in_channels));
  }
  const Geometry g = make_geometry(input.height(), input.width(), kernel);
  ImageTensor out(g.out_h, g.out_w, kernel.out_channels);
  ConstRowMap weights(kernel.taps.data(), kernel.out_channels,
                      static_cast<Eigen::Index>(kernel.taps.size()) / kernel.out_channels);
  RowMap result(out.data().data(), kernel.out_channels,
                static_cast<Eigen::Index>(out.plane_size()));
  RowMatrix cols;
  const int step = tile_rows(g);
  for (int y0 = 0; y0 < g.out_h; y0 += step) {
    const int y1 = std::min(g.out_h, y0 + step);
    gather(input, kernel, g, y0, y1, cols);
    result.middleCols(static_cast<Eigen::Index>(y0) * g.out_w, cols.cols()).noalias() =
        weights * cols;
  }
  return out;
}

ImageTensor conv2d_adjoint(const ImageTensor& cotangent, const ConvKernel2D& kernel,
                           int in_h, int in_w) {
  check_kernel(kernel);
  const Geometry g = make_geometry(in_h, in_w, kernel);
  if (cotangent.channels() != kernel.out_channels || cotangent.height() != g.out_h ||
      cotangent.width() != g.out_w) {
    throw DimensionError("conv2d_adjoint: cotangent " + cotangent.shape_string() +
                         " does not match conv output shape");
  }
  ImageTensor out(in_h, in_w, kernel.in_channels);
  ConstRowMap weights(kernel.taps.data(), kernel.out_channels,
                      static_cast<Eigen::Index>(kernel.taps.size()) / kernel.out_channels);
  ConstRowMap grad(cotangent.data().data(), kernel.out_channels,
                   static_cast<Eigen::Index>(cotangent.plane_size()));
  RowMatrix cols;
  const int step = tile_rows(g);
  for (int y0 = 0; y0 < g.out_h; y0 += step) {
    const int y1 = std::min(g.out_h, y0 + step);
    cols.noalias() = weights.transpose() *
                     grad.middleCols(static_cast<Eigen::Index>(y0) * g.out_w,
                                     static_cast<Eigen::Index>(y1 - y0) * g.out_w);
    scatter(cols, kernel, g, y0, y1, out);
  }
  return out;
}

ImageTensor conv2d_adjoint(const ImageTensor& cotangent, const ConvKernel2D& kernel) {
  return conv2d_adjoint(cotangent, kernel, cotangent.height() * kernel.stride,
                        cotangent.width() * kernel.stride);
}

ConvKernel2D conv2d_weight_grad(const ImageTensor& input, const ImageTensor& cotangent,
                                const ConvKernel2D& kernel) {
  check_kernel(kernel);
  if (input.channels() != kernel.in_channels) {
    throw DimensionError("conv2d_weight_grad: input channel mismatch");
  }
  const Geometry g = make_geometry(input.height(), input.width(), kernel);
  if (cotangent.channels() != kernel.out_channels || cotangent.height() != g.out_h ||
      cotangent.width() != g.out_w) {
    throw DimensionError("conv2d_weight_grad: cotangent shape mismatch");
  }
  ConvKernel2D grad = kernel;
  std::fill(grad.taps.begin(), grad.taps.end(), 0.0);
  RowMap dw(grad.taps.data(), kernel.out_channels,
            static_cast<Eigen::Index>(kernel.taps.size()) / kernel.out_channels);
  ConstRowMap cot(cotangent.data().data(), kernel.out_channels,
                  static_cast<Eigen::Index>(cotangent.plane_size()));
  RowMatrix cols;
  const int step = tile_rows(g);
  for (int y0 = 0; y0 < g.out_h; y0 += step) {
    const int y1 = std::min(g.out_h, y0 + step);
    gather(input, kernel, g, y0, y1, cols);
    dw.noalias() += cot.middleCols(static_cast<Eigen::Index>(y0) * g.out_w, cols.cols()) *
                    cols.transpose();
  }
  return grad;
}

}  // namespace mcnet
