#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>

#include "mcnet/image_io.hpp"
#include "mcnet/synthetic.hpp"

// Writes a set of dead-leaves PNG images, a stand-in for natural-image
// training and validation sets when none is available.
int main(int argc, char** argv) {
  CLI::App app{"Generate synthetic dead-leaves images"};
  std::string out;
  int count = 5, height = 96, width = 0;
  std::uint64_t seed = 0;
  std::string prefix = "img";
  app.add_option("--out", out, "Output directory")->required();
  app.add_option("--count", count, "Number of images")->check(CLI::PositiveNumber);
  app.add_option("--height", height, "Image height")->check(CLI::PositiveNumber);
  app.add_option("--width", width, "Image width (default: height)");
  app.add_option("--seed", seed, "Base seed; image i uses seed + i");
  app.add_option("--prefix", prefix, "File name prefix");
  CLI11_PARSE(app, argc, argv);
  if (width <= 0) width = height;

  try {
    std::filesystem::create_directories(out);
    for (int i = 0; i < count; ++i) {
      char name[64];
      std::snprintf(name, sizeof name, "%s%03d.png", prefix.c_str(), i);
      mcnet::write_png(std::filesystem::path(out) / name,
                       mcnet::dead_leaves(height, width, seed + static_cast<std::uint64_t>(i)));
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
