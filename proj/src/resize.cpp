#include "mcnet/resize.hpp"

#include <cmath>

namespace mcnet {
namespace {

struct Contribution {
  std::vector<int> index;
  std::vector<double> weight;
};

// Resampling weights for each output sample, with unwrapped input indices.
std::vector<Contribution> contributions(int in_len, int out_len, double scale,
                                        bool antialias) {
  const bool stretch = antialias && scale < 1.0;
  const double support = stretch ? 4.0 / scale : 4.0;
  const int taps = static_cast<int>(std::ceil(support)) + 2;
  std::vector<Contribution> out(out_len);
  for (int o = 0; o < out_len; ++o) {
    const double u = (o + 0.5) / scale - 0.5;
    const int left = static_cast<int>(std::floor(u - support / 2.0));
    Contribution& c = out[o];
    double total = 0.0;
    for (int t = 0; t < taps; ++t) {
      const int j = left + t;
      const double d = u - j;
      const double w = stretch ? scale * cubic_kernel(scale * d) : cubic_kernel(d);
      if (w == 0.0) continue;
      c.index.push_back(j);
      c.weight.push_back(w);
      total += w;
    }
    for (double& w : c.weight) w /= total;
  }
  (void)in_len;
  return out;
}

int mirror(int i, int n) {
  const int period = 2 * n;
  int m = ((i % period) + period) % period;
  return m < n ? m : period - 1 - m;
}

}  // namespace

double cubic_kernel(double x) {
  const double a = std::abs(x);
  const double a2 = a * a, a3 = a2 * a;
  if (a <= 1.0) return 1.5 * a3 - 2.5 * a2 + 1.0;
  if (a < 2.0) return -0.5 * a3 + 2.5 * a2 - 4.0 * a + 2.0;
  return 0.0;
}

ImageTensor bicubic_resize(const ImageTensor& image, int out_h, int out_w, bool antialias) {
  if (out_h <= 0 || out_w <= 0) throw DimensionError("bicubic_resize: empty output");
  const int h = image.height(), w = image.width(), ch = image.channels();
  const auto rows = contributions(h, out_h, static_cast<double>(out_h) / h, antialias);
  const auto cols = contributions(w, out_w, static_cast<double>(out_w) / w, antialias);
  ImageTensor tmp(h, out_w, ch);
  for (int c = 0; c < ch; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < out_w; ++x) {
        double s = 0.0;
        for (std::size_t k = 0; k < cols[x].index.size(); ++k)
          s += cols[x].weight[k] * image(c, y, mirror(cols[x].index[k], w));
        tmp(c, y, x) = s;
      }
  ImageTensor out(out_h, out_w, ch);
  for (int c = 0; c < ch; ++c)
    for (int y = 0; y < out_h; ++y)
      for (int x = 0; x < out_w; ++x) {
        double s = 0.0;
        for (std::size_t k = 0; k < rows[y].index.size(); ++k)
          s += rows[y].weight[k] * tmp(c, mirror(rows[y].index[k], h), x);
        out(c, y, x) = s;
      }
  return out;
}

ImageTensor bicubic_upsample(const ImageTensor& image, int scale) {
  if (scale < 1) throw DimensionError("bicubic_upsample: scale must be >= 1");
  return bicubic_resize(image, image.height() * scale, image.width() * scale, false);
}

DecimationTaps bicubic_decimation_taps(int scale) {
  if (scale < 1) throw DimensionError("bicubic_decimation_taps: scale must be >= 1");
  // The filter is shift invariant with period `scale`, so output 0 suffices.
  const auto c = contributions(4 * scale, 1, 1.0 / scale, true).front();
  // contributions() omits exact zeros, which occur inside the support for odd
  // scales; the tap array must be contiguous.
  DecimationTaps out;
  out.anchor = -c.index.front();
  out.taps.assign(c.index.back() - c.index.front() + 1, 0.0);
  for (std::size_t k = 0; k < c.index.size(); ++k)
    out.taps[c.index[k] - c.index.front()] = c.weight[k];
  return out;
}

}  // namespace mcnet
