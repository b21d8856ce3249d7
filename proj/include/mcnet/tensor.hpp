#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mcnet {

/// Thrown when tensor shapes or channel counts do not line up.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown by iterative inner solvers (CG, root finding) that run out of budget.
class SolverError : public std::runtime_error {
 public:
  SolverError(const std::string& what, double residual)
      : std::runtime_error(what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

/// Dense real image. Storage is planar: channel c occupies a contiguous
/// row-major height x width block.
class ImageTensor {
 public:
  ImageTensor() = default;
  ImageTensor(int height, int width, int channels = 1, double fill = 0.0);
  ImageTensor(int height, int width, int channels, std::vector<double> data);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  int channels() const noexcept { return channels_; }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t plane_size() const noexcept {
    return static_cast<std::size_t>(height_) * width_;
  }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(int c, int y, int x) {
    return data_[(static_cast<std::size_t>(c) * height_ + y) * width_ + x];
  }
  double operator()(int c, int y, int x) const {
    return data_[(static_cast<std::size_t>(c) * height_ + y) * width_ + x];
  }
  // Single-channel shorthand.
  double& at(int y, int x) { return (*this)(0, y, x); }
  double at(int y, int x) const { return (*this)(0, y, x); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::span<double> plane(int c);
  std::span<const double> plane(int c) const;

  bool same_shape(const ImageTensor& other) const noexcept {
    return height_ == other.height_ && width_ == other.width_ &&
           channels_ == other.channels_;
  }
  std::string shape_string() const;

  ImageTensor& operator+=(const ImageTensor& other);
  ImageTensor& operator-=(const ImageTensor& other);
  ImageTensor& operator*=(double s);
  /// this += alpha * other
  ImageTensor& axpy(double alpha, const ImageTensor& other);
  void fill(double value);

  /// Copy with values clamped to [lo, hi].
  ImageTensor clamped(double lo = 0.0, double hi = 1.0) const;
  /// Sub-image [y0, y0+h) x [x0, x0+w) of every channel.
  ImageTensor crop(int y0, int x0, int h, int w) const;
  ImageTensor channel(int c) const;

 private:
  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<double> data_;
};

ImageTensor operator+(ImageTensor a, const ImageTensor& b);
ImageTensor operator-(ImageTensor a, const ImageTensor& b);
ImageTensor operator*(double s, ImageTensor a);

double dot(const ImageTensor& a, const ImageTensor& b);
double norm(const ImageTensor& a);
double sum(const ImageTensor& a);
bool all_finite(const ImageTensor& a);

void require_same_shape(const ImageTensor& a, const ImageTensor& b,
                        const char* context);

}  // namespace mcnet
