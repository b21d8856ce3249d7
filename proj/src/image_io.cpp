#include "mcnet/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>

namespace mcnet {
namespace {

static_assert(std::endian::native == std::endian::little,
              "tensor and checkpoint files assume a little-endian host");

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw ImageIoError("cannot open " + path.string());
  return f;
}

std::uint8_t quantize(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

ImageTensor read_png(const std::filesystem::path& path) {
  FilePtr file = open_file(path, "rb");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw ImageIoError("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw ImageIoError("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ImageIoError("corrupt PNG: " + path.string());
  }
  png_init_io(png, file.get());
  png_read_info(png, info);

  const png_byte color = png_get_color_type(png, info);
  const png_byte depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);

  const int width = static_cast<int>(png_get_image_width(png, info));
  const int height = static_cast<int>(png_get_image_height(png, info));
  const int channels = png_get_channels(png, info);
  const std::size_t stride = png_get_rowbytes(png, info);
  std::vector<png_byte> buffer(stride * height);
  std::vector<png_bytep> rows(height);
  for (int y = 0; y < height; ++y) rows[y] = buffer.data() + y * stride;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);

  if (channels != 1 && channels != 3) {
    throw ImageIoError("unsupported PNG channel layout in " + path.string());
  }
  ImageTensor out(height, width, channels);
  for (int c = 0; c < channels; ++c)
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x)
        out(c, y, x) = rows[y][x * channels + c] / 255.0;
  return out;
}

std::string next_pnm_token(std::istream& in) {
  std::string token;
  char ch;
  while (in.get(ch)) {
    if (ch == '#') {
      std::string skip;
      std::getline(in, skip);
    } else if (!std::isspace(static_cast<unsigned char>(ch))) {
      token.push_back(ch);
      break;
    }
  }
  while (in.get(ch) && !std::isspace(static_cast<unsigned char>(ch))) token.push_back(ch);
  return token;
}

ImageTensor read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageIoError("cannot open " + path.string());
  const std::string magic = next_pnm_token(in);
  if (magic != "P5" && magic != "P2") throw ImageIoError("not a PGM: " + path.string());
  int width = 0, height = 0, maxval = 0;
  try {
    width = std::stoi(next_pnm_token(in));
    height = std::stoi(next_pnm_token(in));
    maxval = std::stoi(next_pnm_token(in));
  } catch (const std::exception&) {
    throw ImageIoError("malformed PGM header: " + path.string());
  }
  if (width <= 0 || height <= 0 || maxval <= 0 || maxval > 65535) {
    throw ImageIoError("malformed PGM header: " + path.string());
  }
  const double scale = maxval <= 255 ? 255.0 : static_cast<double>(maxval);
  ImageTensor out(height, width, 1);
  auto data = out.data();
  if (magic == "P2") {
    for (double& v : data) v = std::stoi(next_pnm_token(in)) / scale;
  } else if (maxval <= 255) {
    std::vector<unsigned char> raw(data.size());
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!in) throw ImageIoError("truncated PGM: " + path.string());
    for (std::size_t i = 0; i < raw.size(); ++i) data[i] = raw[i] / scale;
  } else {
    std::vector<unsigned char> raw(2 * data.size());
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!in) throw ImageIoError("truncated PGM: " + path.string());
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = (raw[2 * i] * 256 + raw[2 * i + 1]) / scale;
  }
  return out;
}

}  // namespace

ImageTensor read_image(const std::filesystem::path& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw ImageIoError("cannot open " + path.string());
  unsigned char sig[8] = {};
  probe.read(reinterpret_cast<char*>(sig), 8);
  if (probe.gcount() == 8 && png_sig_cmp(sig, 0, 8) == 0) return read_png(path);
  if (sig[0] == 'P' && (sig[1] == '5' || sig[1] == '2')) return read_pgm(path);
  throw ImageIoError("unrecognised image format: " + path.string());
}

void write_png(const std::filesystem::path& path, const ImageTensor& image) {
  if (image.channels() != 1 && image.channels() != 3) {
    throw DimensionError("write_png: need 1 or 3 channels");
  }
  FilePtr file = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw ImageIoError("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw ImageIoError("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw ImageIoError("PNG write failed: " + path.string());
  }
  const int channels = image.channels();
  png_init_io(png, file.get());
  png_set_IHDR(png, info, image.width(), image.height(), 8,
               channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_byte> row(static_cast<std::size_t>(image.width()) * channels);
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x)
      for (int c = 0; c < channels; ++c) row[x * channels + c] = quantize(image(c, y, x));
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

void write_pgm(const std::filesystem::path& path, const ImageTensor& image) {
  if (image.channels() != 1) throw DimensionError("write_pgm: need 1 channel");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ImageIoError("cannot open " + path.string());
  out << "P5\n" << image.width() << " " << image.height() << "\n255\n";
  for (double v : image.data()) out.put(static_cast<char>(quantize(v)));
  if (!out) throw ImageIoError("PGM write failed: " + path.string());
}

void save_tensor(const std::filesystem::path& path, const ImageTensor& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ImageIoError("cannot open " + path.string());
  const std::int32_t dims[3] = {image.height(), image.width(), image.channels()};
  out.write("MCNT", 4);
  out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
  out.write(reinterpret_cast<const char*>(image.data().data()),
            static_cast<std::streamsize>(image.size() * sizeof(double)));
  if (!out) throw ImageIoError("tensor write failed: " + path.string());
}

ImageTensor load_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageIoError("cannot open " + path.string());
  char magic[4];
  std::int32_t dims[3];
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(dims), sizeof(dims));
  if (!in || std::memcmp(magic, "MCNT", 4) != 0 || dims[0] < 0 || dims[1] < 0 ||
      dims[2] < 0) {
    throw ImageIoError("not a tensor file: " + path.string());
  }
  std::vector<double> data(static_cast<std::size_t>(dims[0]) * dims[1] * dims[2]);
  in.read(reinterpret_cast<char*>(data.data()),
          static_cast<std::streamsize>(data.size() * sizeof(double)));
  if (!in) throw ImageIoError("truncated tensor file: " + path.string());
  return ImageTensor(dims[0], dims[1], dims[2], std::move(data));
}

}  // namespace mcnet
