#include "mcnet/metrics.hpp"

#include <array>
#include <cmath>

namespace mcnet {
namespace {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;

ImageTensor shave_border(const ImageTensor& img, int shave) {
  if (shave < 0 || 2 * shave >= std::min(img.height(), img.width())) {
    throw DimensionError("metric: shave " + std::to_string(shave) +
                         " too large for " + img.shape_string());
  }
  if (shave == 0) return img;
  return img.crop(shave, shave, img.height() - 2 * shave, img.width() - 2 * shave);
}

std::array<double, kWindow> gaussian_window() {
  std::array<double, kWindow> w{};
  double total = 0.0;
  for (int i = 0; i < kWindow; ++i) {
    const double d = i - kWindow / 2;
    w[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
    total += w[i];
  }
  for (double& v : w) v /= total;
  return w;
}

// Separable 'valid' filtering with the SSIM window.
ImageTensor filter_valid(const ImageTensor& img, const std::array<double, kWindow>& w) {
  const int h = img.height(), wd = img.width();
  const int oh = h - kWindow + 1, ow = wd - kWindow + 1;
  ImageTensor tmp(h, ow);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int k = 0; k < kWindow; ++k) s += w[k] * img.at(y, x + k);
      tmp.at(y, x) = s;
    }
  ImageTensor out(oh, ow);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int k = 0; k < kWindow; ++k) s += w[k] * tmp.at(y + k, x);
      out.at(y, x) = s;
    }
  return out;
}

ImageTensor product(const ImageTensor& a, const ImageTensor& b) {
  ImageTensor out = a;
  auto o = out.data();
  auto d = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= d[i];
  return out;
}

}  // namespace

double mean_squared_error(const ImageTensor& a, const ImageTensor& b) {
  require_same_shape(a, b, "mean_squared_error");
  auto da = a.data();
  auto db = b.data();
  double s = 0.0;
  for (std::size_t i = 0; i < da.size(); ++i) {
    const double d = da[i] - db[i];
    s += d * d;
  }
  return da.empty() ? 0.0 : s / static_cast<double>(da.size());
}

double psnr(const ImageTensor& reference, const ImageTensor& candidate, int shave,
            double cap) {
  require_same_shape(reference, candidate, "psnr");
  const double mse =
      mean_squared_error(shave_border(reference, shave), shave_border(candidate, shave));
  if (mse <= 0.0) return cap;
  return std::min(cap, 10.0 * std::log10(1.0 / mse));
}

double ssim(const ImageTensor& reference, const ImageTensor& candidate, int shave) {
  require_same_shape(reference, candidate, "ssim");
  if (reference.channels() != 1) throw DimensionError("ssim: single channel only");
  const ImageTensor x = shave_border(reference, shave);
  const ImageTensor y = shave_border(candidate, shave);
  if (x.height() < kWindow || x.width() < kWindow) {
    throw DimensionError("ssim: image smaller than the 11x11 window after shaving");
  }
  constexpr double c1 = 0.01 * 0.01;
  constexpr double c2 = 0.03 * 0.03;
  const auto w = gaussian_window();
  const ImageTensor mx = filter_valid(x, w);
  const ImageTensor my = filter_valid(y, w);
  const ImageTensor sxx = filter_valid(product(x, x), w);
  const ImageTensor syy = filter_valid(product(y, y), w);
  const ImageTensor sxy = filter_valid(product(x, y), w);
  double total = 0.0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double ux = mx.data()[i], uy = my.data()[i];
    const double vx = sxx.data()[i] - ux * ux;
    const double vy = syy.data()[i] - uy * uy;
    const double cxy = sxy.data()[i] - ux * uy;
    total += ((2.0 * ux * uy + c1) * (2.0 * cxy + c2)) /
             ((ux * ux + uy * uy + c1) * (vx + vy + c2));
  }
  return total / static_cast<double>(mx.size());
}

}  // namespace mcnet
