#include "fpgen/png_io.hpp"

#include <png.h>

#include <cstring>

#include "fpgen/error.hpp"

namespace fpgen {

ImageU8 read_gray_png(const std::filesystem::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw Error(ErrorCode::Io, "cannot read PNG " + path.string() + ": " + image.message);
  }
  if (image.format & PNG_FORMAT_FLAG_COLOR) {
    png_image_free(&image);
    throw Error(ErrorCode::NonGrayscaleInput, path.string() + " is not a grayscale image");
  }
  image.format = PNG_FORMAT_GRAY;
  ImageU8 out(image.height, image.width);
  if (!png_image_finish_read(&image, nullptr, out.data(), static_cast<png_int_32>(image.width), nullptr)) {
    throw Error(ErrorCode::Io, "cannot decode PNG " + path.string() + ": " + image.message);
  }
  return out;
}

void write_gray_png(const std::filesystem::path& path, const ImageU8& img) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.cols());
  image.height = static_cast<png_uint_32>(img.rows());
  image.format = PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&image, path.c_str(), 0, img.data(), static_cast<png_int_32>(img.cols()), nullptr)) {
    throw Error(ErrorCode::Io, "cannot write PNG " + path.string() + ": " + image.message);
  }
}

void write_unit_png(const std::filesystem::path& path, const ImageF& img) { write_gray_png(path, quantize_u8(img)); }

}  // namespace fpgen
