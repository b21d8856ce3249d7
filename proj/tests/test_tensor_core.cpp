#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "mcnet/color.hpp"
#include "mcnet/conv.hpp"
#include "mcnet/image_io.hpp"
#include "mcnet/metrics.hpp"
#include "mcnet/resize.hpp"
#include "oracles.hpp"

using namespace mcnet;

namespace {

ConvKernel2D random_kernel(std::mt19937_64& rng, int kh, int kw, int cin, int cout,
                           int stride, Padding padding) {
  ConvKernel2D k(kh, kw, cin, cout, stride, padding);
  std::normal_distribution<double> n(0.0, 1.0);
  for (double& t : k.taps) t = n(rng);
  return k;
}

}  // namespace

TEST(ImageTensor, ShapeAndStorage) {
  ImageTensor t(3, 4, 2, 0.5);
  EXPECT_EQ(t.size(), 24u);
  EXPECT_EQ(t.plane_size(), 12u);
  t(1, 2, 3) = 7.0;
  EXPECT_EQ(t.data()[12 + 2 * 4 + 3], 7.0);
  EXPECT_THROW(ImageTensor(2, 2, 1, std::vector<double>(3)), DimensionError);
  EXPECT_THROW(ImageTensor(-1, 2), DimensionError);
}

TEST(ImageTensor, ArithmeticRejectsShapeMismatch) {
  ImageTensor a(2, 2), b(2, 3);
  EXPECT_THROW(a += b, DimensionError);
  EXPECT_THROW(dot(a, b), DimensionError);
}

TEST(ImageTensor, CropAndChannel) {
  ImageTensor t(4, 4, 2);
  for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = static_cast<double>(i);
  const ImageTensor c = t.crop(1, 2, 2, 2);
  EXPECT_EQ(c(1, 0, 0), t(1, 1, 2));
  EXPECT_EQ(c(0, 1, 1), t(0, 2, 3));
  EXPECT_THROW(t.crop(3, 3, 2, 2), DimensionError);
  EXPECT_EQ(t.channel(1).at(0, 0), 16.0);
}

TEST(Conv2d, ScalarLinearity) {
  ConvKernel2D k(1, 1, 1, 1);
  k.taps = {2.0};
  ImageTensor x(1, 1, 1, 5.0);
  EXPECT_DOUBLE_EQ(conv2d(x, k).at(0, 0), 10.0);
}

TEST(Conv2d, ZeroKernelGivesZero) {
  std::mt19937_64 rng(1);
  const ImageTensor x = oracle::random_image(rng, 7, 5, 3);
  ConvKernel2D k(3, 3, 3, 2);
  const ImageTensor y = conv2d(x, k);
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(Conv2d, AveragingKernelCentre) {
  ImageTensor x(3, 3);
  double total = 0.0;
  for (int i = 0; i < 9; ++i) {
    x.data()[i] = i * 1.5 - 2.0;
    total += x.data()[i];
  }
  ConvKernel2D k(3, 3, 1, 1);
  std::fill(k.taps.begin(), k.taps.end(), 1.0 / 9.0);
  EXPECT_NEAR(conv2d(x, k).at(1, 1), total / 9.0, 1e-14);
  // A corner only sees 4 in-bounds values under zero padding.
  EXPECT_NEAR(conv2d(x, k).at(0, 0),
              (x.at(0, 0) + x.at(0, 1) + x.at(1, 0) + x.at(1, 1)) / 9.0, 1e-14);
}

TEST(Conv2d, OutputExtentFollowsStride) {
  std::mt19937_64 rng(2);
  const ImageTensor x = oracle::random_image(rng, 9, 8);
  const ConvKernel2D k = random_kernel(rng, 3, 3, 1, 4, 2, Padding::zero);
  const ImageTensor y = conv2d(x, k);
  EXPECT_EQ(y.height(), 5);
  EXPECT_EQ(y.width(), 4);
  EXPECT_EQ(y.channels(), 4);
}

TEST(Conv2d, ChannelMismatchThrows) {
  ImageTensor x(4, 4, 2);
  ConvKernel2D k(3, 3, 1, 1);
  EXPECT_THROW(conv2d(x, k), DimensionError);
}

TEST(Conv2d, MatchesDirectSummation) {
  std::mt19937_64 rng(3);
  for (Padding pad : {Padding::zero, Padding::replicate, Padding::circular}) {
    const ImageTensor x = oracle::random_image(rng, 6, 7, 2);
    ConvKernel2D k = random_kernel(rng, 3, 5, 2, 3, 2, pad);
    k.anchor_y = 2;
    k.anchor_x = 1;
    const ImageTensor y = conv2d(x, k);
    auto src = [&](int c, int yy, int xx) {
      auto fix = [&](int i, int n) {
        if (i >= 0 && i < n) return i;
        if (pad == Padding::zero) return -1;
        if (pad == Padding::replicate) return std::clamp(i, 0, n - 1);
        return ((i % n) + n) % n;
      };
      const int sy = fix(yy, 6), sx = fix(xx, 7);
      return (sy < 0 || sx < 0) ? 0.0 : x(c, sy, sx);
    };
    for (int o = 0; o < 3; ++o)
      for (int oy = 0; oy < y.height(); ++oy)
        for (int ox = 0; ox < y.width(); ++ox) {
          double acc = 0.0;
          for (int i = 0; i < 2; ++i)
            for (int a = 0; a < 3; ++a)
              for (int b = 0; b < 5; ++b)
                acc += k(o, i, a, b) * src(i, oy * 2 + a - 2, ox * 2 + b - 1);
          EXPECT_NEAR(y(o, oy, ox), acc, 1e-12);
        }
  }
}

TEST(Conv2d, Linearity) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const ImageTensor x = oracle::gaussian_image(rng, 9, 9, 2);
    const ImageTensor z = oracle::gaussian_image(rng, 9, 9, 2);
    const ConvKernel2D k = random_kernel(rng, 3, 3, 2, 3, 1 + trial % 3, Padding::circular);
    const double a = 1.7, b = -0.4;
    const ImageTensor lhs = conv2d(a * x + b * z, k);
    const ImageTensor rhs = a * conv2d(x, k) + b * conv2d(z, k);
    EXPECT_LT(norm(lhs - rhs) / norm(rhs), 1e-10);
  }
}

TEST(Conv2dAdjoint, ScalarSelfAdjoint) {
  ConvKernel2D k(1, 1, 1, 1);
  k.taps = {2.0};
  EXPECT_DOUBLE_EQ(conv2d_adjoint(ImageTensor(1, 1, 1, 3.0), k).at(0, 0), 6.0);
}

TEST(Conv2dAdjoint, ZeroCotangent) {
  std::mt19937_64 rng(5);
  const ConvKernel2D k = random_kernel(rng, 3, 3, 2, 2, 1, Padding::zero);
  const ImageTensor g = conv2d_adjoint(ImageTensor(5, 5, 2), k);
  for (double v : g.data()) EXPECT_EQ(v, 0.0);
}

TEST(Conv2dAdjoint, DotProductIdentity8x8) {
  std::mt19937_64 rng(6);
  const ImageTensor x = oracle::gaussian_image(rng, 8, 8);
  const ConvKernel2D k = random_kernel(rng, 3, 3, 1, 1, 1, Padding::zero);
  const ImageTensor y = oracle::gaussian_image(rng, 8, 8);
  const double lhs = dot(conv2d(x, k), y);
  const double rhs = dot(x, conv2d_adjoint(y, k));
  EXPECT_LT(std::abs(lhs - rhs) / std::abs(rhs), 1e-10);
}

TEST(Conv2dAdjoint, DotProductIdentityRandomTriples) {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> dim(3, 11), ch(1, 3), str(1, 3), ks(0, 2), pad(0, 2);
  for (int trial = 0; trial < 100; ++trial) {
    const int h = dim(rng), w = dim(rng), cin = ch(rng), cout = ch(rng), s = str(rng);
    const int kh = 2 * ks(rng) + 1, kw = 2 * ks(rng) + 1;
    const ConvKernel2D k = random_kernel(rng, kh, kw, cin, cout, s, static_cast<Padding>(pad(rng)));
    const ImageTensor x = oracle::gaussian_image(rng, h, w, cin);
    const ImageTensor y = oracle::gaussian_image(rng, conv_output_extent(h, s),
                                                 conv_output_extent(w, s), cout);
    const double lhs = dot(conv2d(x, k), y);
    const double rhs = dot(x, conv2d_adjoint(y, k, h, w));
    EXPECT_LT(std::abs(lhs - rhs), 1e-8 * std::max(1.0, std::abs(rhs))) << "trial " << trial;
  }
}

TEST(Conv2dAdjoint, ShapeMismatchThrows) {
  ConvKernel2D k(3, 3, 1, 2);
  EXPECT_THROW(conv2d_adjoint(ImageTensor(4, 4, 1), k, 4, 4), DimensionError);
}

TEST(Conv2dWeightGrad, MatchesDenseDerivative) {
  std::mt19937_64 rng(8);
  const ImageTensor x = oracle::gaussian_image(rng, 6, 5, 2);
  const ConvKernel2D k = random_kernel(rng, 3, 3, 2, 2, 2, Padding::replicate);
  const ImageTensor cot = oracle::gaussian_image(rng, 3, 3, 2);
  const ConvKernel2D g = conv2d_weight_grad(x, cot, k);
  // <conv2d(x, K), cot> is linear in K, so each coordinate is exact.
  for (std::size_t i = 0; i < k.taps.size(); ++i) {
    ConvKernel2D e = k;
    std::fill(e.taps.begin(), e.taps.end(), 0.0);
    e.taps[i] = 1.0;
    EXPECT_NEAR(g.taps[i], dot(conv2d(x, e), cot), 1e-12);
  }
}

TEST(Color, Bt601Endpoints) {
  ImageTensor white(1, 1, 3, 1.0), black(1, 1, 3, 0.0);
  EXPECT_NEAR(rgb_to_y(white).at(0, 0), 235.0 / 255.0, 1e-12);
  EXPECT_NEAR(rgb_to_y(black).at(0, 0), 16.0 / 255.0, 1e-12);
}

TEST(Color, GrayIsAffineInLevel) {
  for (double g : {0.0, 0.25, 0.5, 0.9}) {
    ImageTensor gray(1, 1, 3, g);
    EXPECT_NEAR(rgb_to_y(gray).at(0, 0), (219.0 * g + 16.0) / 255.0, 1e-12);
  }
}

TEST(Color, WrongChannelCountThrows) {
  EXPECT_THROW(rgb_to_y(ImageTensor(2, 2, 1)), DimensionError);
  EXPECT_EQ(to_luma(ImageTensor(2, 2, 1, 0.3)).at(1, 1), 0.3);
}

TEST(Psnr, IdenticalImagesHitCap) {
  std::mt19937_64 rng(9);
  const ImageTensor x = oracle::random_image(rng, 8, 8);
  EXPECT_EQ(psnr(x, x), 100.0);
  EXPECT_EQ(psnr(x, x, 0, 60.0), 60.0);
}

TEST(Psnr, UniformOffset) {
  ImageTensor a(6, 6, 1, 0.3), b(6, 6, 1, 0.4);
  EXPECT_NEAR(psnr(a, b), 20.0, 1e-9);
}

TEST(Psnr, Symmetric) {
  std::mt19937_64 rng(10);
  const ImageTensor a = oracle::random_image(rng, 9, 9);
  const ImageTensor b = oracle::random_image(rng, 9, 9);
  EXPECT_EQ(psnr(a, b, 2), psnr(b, a, 2));
}

TEST(Psnr, ShaveUsesInteriorOnly) {
  ImageTensor a(6, 6), b(6, 6);
  b.at(0, 0) = 1.0;  // border error disappears after shaving
  b.at(3, 3) = 0.1;
  EXPECT_NEAR(psnr(a, b, 1), 10.0 * std::log10(16.0 / 0.01), 1e-9);
}

TEST(Psnr, Preconditions) {
  EXPECT_THROW(psnr(ImageTensor(4, 4), ImageTensor(4, 5)), DimensionError);
  EXPECT_THROW(psnr(ImageTensor(4, 4), ImageTensor(4, 4), 2), DimensionError);
  EXPECT_THROW(psnr(ImageTensor(4, 4), ImageTensor(4, 4), -1), DimensionError);
}

TEST(Ssim, IdentityIsExactlyOne) {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 5; ++t) {
    const ImageTensor x = oracle::random_image(rng, 20, 17);
    EXPECT_EQ(ssim(x, x), 1.0);
    EXPECT_EQ(ssim(x, x, 3), 1.0);
  }
}

TEST(Ssim, NegativeContrastOnSingleWindow) {
  // 11x11 patch: the valid region is a single window, so SSIM is one
  // evaluation of the closed-form index with Gaussian weights.
  std::mt19937_64 rng(12);
  ImageTensor x(11, 11);
  for (int y = 0; y < 11; ++y)
    for (int c = 0; c < 11; ++c) x.at(y, c) = 0.5 + 0.3 * std::sin(0.9 * y + 1.7 * c);
  ImageTensor neg = x;
  for (double& v : neg.data()) v = 1.0 - v;

  double wsum = 0.0;
  std::vector<double> w(121);
  for (int y = 0; y < 11; ++y)
    for (int c = 0; c < 11; ++c) {
      w[y * 11 + c] = std::exp(-((y - 5) * (y - 5) + (c - 5) * (c - 5)) / (2 * 1.5 * 1.5));
      wsum += w[y * 11 + c];
    }
  double mx = 0, my = 0;
  for (int i = 0; i < 121; ++i) {
    mx += w[i] / wsum * x.data()[i];
    my += w[i] / wsum * neg.data()[i];
  }
  double sxx = 0, syy = 0, sxy = 0;
  for (int i = 0; i < 121; ++i) {
    const double dx = x.data()[i] - mx, dy = neg.data()[i] - my;
    sxx += w[i] / wsum * dx * dx;
    syy += w[i] / wsum * dy * dy;
    sxy += w[i] / wsum * dx * dy;
  }
  const double c1 = 1e-4, c2 = 9e-4;
  const double expected = ((2 * mx * my + c1) * (2 * sxy + c2)) /
                          ((mx * mx + my * my + c1) * (sxx + syy + c2));
  const double got = ssim(x, neg);
  EXPECT_LT(got, 0.0);
  EXPECT_NEAR(got, expected, 1e-10);
}

TEST(Ssim, ShapeMismatchThrows) {
  EXPECT_THROW(ssim(ImageTensor(12, 12), ImageTensor(12, 13)), DimensionError);
  EXPECT_THROW(ssim(ImageTensor(12, 12, 3), ImageTensor(12, 12, 3)), DimensionError);
}

TEST(Resize, CubicKernelValues) {
  EXPECT_EQ(cubic_kernel(0.0), 1.0);
  EXPECT_EQ(cubic_kernel(1.0), 0.0);
  EXPECT_EQ(cubic_kernel(2.0), 0.0);
  EXPECT_NEAR(cubic_kernel(0.5), 0.5625, 1e-15);
  EXPECT_NEAR(cubic_kernel(1.5), -0.0625, 1e-15);
}

TEST(Resize, UpsampleReproducesLinearRampInInterior) {
  ImageTensor lr(10, 10);
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 10; ++x) lr.at(y, x) = 0.02 * y + 0.05 * x;
  const ImageTensor hr = bicubic_upsample(lr, 3);
  ASSERT_EQ(hr.height(), 30);
  for (int y = 6; y < 24; ++y)
    for (int x = 6; x < 24; ++x) {
      const double u = (y + 0.5) / 3.0 - 0.5, v = (x + 0.5) / 3.0 - 0.5;
      EXPECT_NEAR(hr.at(y, x), 0.02 * u + 0.05 * v, 1e-12);
    }
}

TEST(Resize, ConstantsArePreserved) {
  ImageTensor c(12, 12, 1, 0.37);
  const ImageTensor up = bicubic_upsample(c, 2);
  const ImageTensor down = bicubic_resize(c, 4, 4, true);
  for (double v : up.data()) EXPECT_NEAR(v, 0.37, 1e-12);
  for (double v : down.data()) EXPECT_NEAR(v, 0.37, 1e-12);
}

TEST(Resize, DecimationTapsSumToOne) {
  for (int s : {2, 3, 4}) {
    const DecimationTaps t = bicubic_decimation_taps(s);
    double total = 0.0;
    for (double v : t.taps) total += v;
    EXPECT_NEAR(total, 1.0, 1e-12);
    EXPECT_EQ(static_cast<int>(t.taps.size()), s % 2 == 0 ? 4 * s : 4 * s - 1);
  }
}

TEST(Resize, DecimationTapsMatchAntialiasedResize) {
  // Away from the border, resize-by-1/s equals conv with the decimation taps.
  std::mt19937_64 rng(13);
  for (int s : {2, 3, 4}) {
    const int n = 12 * s;
    const ImageTensor x = oracle::random_image(rng, 1, n);
    const ImageTensor r = bicubic_resize(x, 1, n / s, true);
    const DecimationTaps t = bicubic_decimation_taps(s);
    for (int o = 3; o < n / s - 3; ++o) {
      double acc = 0.0;
      for (std::size_t k = 0; k < t.taps.size(); ++k)
        acc += t.taps[k] * x.at(0, o * s + static_cast<int>(k) - t.anchor);
      EXPECT_NEAR(r.at(0, o), acc, 1e-12) << "scale " << s << " output " << o;
    }
  }
}

TEST(ImageIo, TensorRoundTripIsExact) {
  std::mt19937_64 rng(14);
  const ImageTensor x = oracle::gaussian_image(rng, 5, 7, 2);
  const auto path = std::filesystem::temp_directory_path() / "mcnet_tensor_rt.mcnt";
  save_tensor(path, x);
  const ImageTensor y = load_tensor(path);
  ASSERT_TRUE(x.same_shape(y));
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(x.data()[i], y.data()[i]);
  std::filesystem::remove(path);
}

TEST(ImageIo, PngAndPgmRoundTripAtEightBits) {
  ImageTensor x(4, 6, 3);
  for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] = static_cast<double>(i % 256) / 255.0;
  const auto dir = std::filesystem::temp_directory_path();
  write_png(dir / "mcnet_rt.png", x);
  const ImageTensor p = read_image(dir / "mcnet_rt.png");
  ASSERT_TRUE(p.same_shape(x));
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(p.data()[i], x.data()[i]);
  const ImageTensor g = x.channel(1);
  write_pgm(dir / "mcnet_rt.pgm", g);
  const ImageTensor q = read_image(dir / "mcnet_rt.pgm");
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_EQ(q.data()[i], g.data()[i]);
  std::filesystem::remove(dir / "mcnet_rt.png");
  std::filesystem::remove(dir / "mcnet_rt.pgm");
}

TEST(ImageIo, MissingFileThrows) {
  EXPECT_THROW(read_image("/nonexistent/mcnet.png"), ImageIoError);
}
