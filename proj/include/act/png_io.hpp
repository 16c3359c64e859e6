#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace act {

// Interleaved 8-bit RGB raster.
struct RgbImage {
  std::int64_t width = 0;
  std::int64_t height = 0;
  std::vector<std::uint8_t> pixels;  // height * width * 3
};

// Reads an 8-bit RGB PNG; any other color type or bit depth is rejected.
RgbImage read_png_rgb(const std::string& path);
void write_png_rgb(const std::string& path, const RgbImage& image);

}  // namespace act
