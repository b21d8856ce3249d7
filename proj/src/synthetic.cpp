#include "mcnet/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace mcnet {

ImageTensor dead_leaves(int height, int width, std::uint64_t seed,
                        const DeadLeavesConfig& cfg) {
  if (height <= 0 || width <= 0) throw DimensionError("dead_leaves: empty image");
  const int ss = std::max(1, cfg.supersample);
  const int H = height * ss, W = width * ss;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  // Smooth background shading.
  std::vector<double> canvas(static_cast<std::size_t>(H) * W);
  {
    const double base = 0.2 + 0.6 * unit(rng);
    const double gy = 0.3 * (unit(rng) - 0.5), gx = 0.3 * (unit(rng) - 0.5);
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x)
        canvas[static_cast<std::size_t>(y) * W + x] =
            base + gy * y / H + gx * x / W;
  }

  const double rmin = cfg.min_radius * ss;
  const double rmax = std::max(rmin, cfg.max_radius_fraction * std::min(H, W));
  const int count = cfg.disks > 0 ? cfg.disks : std::max(16, height * width / 20);
  const double a = cfg.radius_exponent - 1.0;
  for (int d = 0; d < count; ++d) {
    // Inverse-CDF sample of a truncated power law.
    const double u = unit(rng);
    const double lo = std::pow(rmin, -a), hi = std::pow(rmax, -a);
    const double r = std::pow(lo - u * (lo - hi), -1.0 / a);
    const double cy = unit(rng) * H, cx = unit(rng) * W;
    const double level = 0.05 + 0.9 * unit(rng);
    const double shade_y = 0.15 * (unit(rng) - 0.5) / r, shade_x = 0.15 * (unit(rng) - 0.5) / r;
    const bool textured = unit(rng) < cfg.texture_probability;
    const double theta = unit(rng) * std::numbers::pi;
    const double period = (2.5 + 6.0 * unit(rng)) * ss;
    const double amp = textured ? 0.04 + 0.12 * unit(rng) : 0.0;
    const double phase = unit(rng) * 2 * std::numbers::pi;
    const double ky = std::sin(theta) * 2 * std::numbers::pi / period;
    const double kx = std::cos(theta) * 2 * std::numbers::pi / period;
    const int y0 = std::max(0, static_cast<int>(std::floor(cy - r)));
    const int y1 = std::min(H - 1, static_cast<int>(std::ceil(cy + r)));
    const int x0 = std::max(0, static_cast<int>(std::floor(cx - r)));
    const int x1 = std::min(W - 1, static_cast<int>(std::ceil(cx + r)));
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        const double dy = y + 0.5 - cy, dx = x + 0.5 - cx;
        if (dy * dy + dx * dx > r * r) continue;
        double v = level + shade_y * dy + shade_x * dx;
        if (textured) v += amp * std::sin(ky * dy + kx * dx + phase);
        canvas[static_cast<std::size_t>(y) * W + x] = v;
      }
  }

  ImageTensor out(height, width);
  const double inv = 1.0 / (ss * ss);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      double acc = 0.0;
      for (int a2 = 0; a2 < ss; ++a2)
        for (int b2 = 0; b2 < ss; ++b2)
          acc += canvas[static_cast<std::size_t>(y * ss + a2) * W + x * ss + b2];
      double v = std::clamp(acc * inv, 0.0, 1.0);
      if (cfg.quantize) v = std::round(v * 255.0) / 255.0;
      out.at(y, x) = v;
    }
  return out;
}

}  // namespace mcnet
