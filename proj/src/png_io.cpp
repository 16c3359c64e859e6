#include "act/png_io.hpp"

#include <png.h>

#include <cstring>

#include "act/errors.hpp"

namespace act {

RgbImage read_png_rgb(const std::string& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw IngestionError(path + ": " + image.message);
  }
  const auto fmt = image.format;
  const bool rgb8 = (fmt & PNG_FORMAT_FLAG_COLOR) && !(fmt & PNG_FORMAT_FLAG_ALPHA) &&
                    !(fmt & PNG_FORMAT_FLAG_LINEAR) && !(fmt & PNG_FORMAT_FLAG_COLORMAP);
  if (!rgb8) {
    png_image_free(&image);
    throw IngestionError(path + ": not an 8-bit RGB PNG");
  }
  image.format = PNG_FORMAT_RGB;
  RgbImage out;
  out.width = image.width;
  out.height = image.height;
  out.pixels.resize(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, out.pixels.data(), 0, nullptr)) {
    throw IngestionError(path + ": " + image.message);
  }
  return out;
}

void write_png_rgb(const std::string& path, const RgbImage& img) {
  if (img.pixels.size() != static_cast<std::size_t>(img.width * img.height * 3)) {
    throw ShapeError("write_png_rgb: pixel buffer size mismatch");
  }
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.c_str(), 0, img.pixels.data(), 0, nullptr)) {
    throw std::runtime_error(path + ": " + image.message);
  }
}

}  // namespace act
