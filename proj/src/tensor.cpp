#include "mcnet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace mcnet {

ImageTensor::ImageTensor(int height, int width, int channels, double fill)
    : height_(height), width_(width), channels_(channels) {
  if (height < 0 || width < 0 || channels < 0) {
    throw DimensionError("ImageTensor: negative dimension");
  }
  data_.assign(static_cast<std::size_t>(height) * width * channels, fill);
}

ImageTensor::ImageTensor(int height, int width, int channels,
                         std::vector<double> data)
    : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
  if (height < 0 || width < 0 || channels < 0) {
    throw DimensionError("ImageTensor: negative dimension");
  }
  if (data_.size() != static_cast<std::size_t>(height) * width * channels) {
    throw DimensionError("ImageTensor: data length does not match " +
                         shape_string());
  }
}

std::span<double> ImageTensor::plane(int c) {
  return std::span<double>(data_).subspan(c * plane_size(), plane_size());
}

std::span<const double> ImageTensor::plane(int c) const {
  return std::span<const double>(data_).subspan(c * plane_size(), plane_size());
}

std::string ImageTensor::shape_string() const {
  std::ostringstream os;
  os << height_ << "x" << width_ << "x" << channels_;
  return os.str();
}

ImageTensor& ImageTensor::operator+=(const ImageTensor& other) {
  require_same_shape(*this, other, "operator+=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

ImageTensor& ImageTensor::operator-=(const ImageTensor& other) {
  require_same_shape(*this, other, "operator-=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

ImageTensor& ImageTensor::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

ImageTensor& ImageTensor::axpy(double alpha, const ImageTensor& other) {
  require_same_shape(*this, other, "axpy");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += alpha * other.data_[i];
  return *this;
}

void ImageTensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

ImageTensor ImageTensor::clamped(double lo, double hi) const {
  ImageTensor out = *this;
  for (double& v : out.data_) v = std::clamp(v, lo, hi);
  return out;
}

ImageTensor ImageTensor::crop(int y0, int x0, int h, int w) const {
  if (y0 < 0 || x0 < 0 || h < 0 || w < 0 || y0 + h > height_ || x0 + w > width_) {
    throw DimensionError("crop: window outside " + shape_string());
  }
  ImageTensor out(h, w, channels_);
  for (int c = 0; c < channels_; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) out(c, y, x) = (*this)(c, y0 + y, x0 + x);
  return out;
}

ImageTensor ImageTensor::channel(int c) const {
  if (c < 0 || c >= channels_) throw DimensionError("channel index out of range");
  auto p = plane(c);
  return ImageTensor(height_, width_, 1, std::vector<double>(p.begin(), p.end()));
}

ImageTensor operator+(ImageTensor a, const ImageTensor& b) { return a += b; }
ImageTensor operator-(ImageTensor a, const ImageTensor& b) { return a -= b; }
ImageTensor operator*(double s, ImageTensor a) { return a *= s; }

double dot(const ImageTensor& a, const ImageTensor& b) {
  require_same_shape(a, b, "dot");
  auto da = a.data();
  auto db = b.data();
  return std::inner_product(da.begin(), da.end(), db.begin(), 0.0);
}

double norm(const ImageTensor& a) { return std::sqrt(dot(a, a)); }

double sum(const ImageTensor& a) {
  auto d = a.data();
  return std::accumulate(d.begin(), d.end(), 0.0);
}

bool all_finite(const ImageTensor& a) {
  auto d = a.data();
  return std::all_of(d.begin(), d.end(), [](double v) { return std::isfinite(v); });
}

void require_same_shape(const ImageTensor& a, const ImageTensor& b,
                        const char* context) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(context) + ": shape mismatch " +
                         a.shape_string() + " vs " + b.shape_string());
  }
}

}  // namespace mcnet
