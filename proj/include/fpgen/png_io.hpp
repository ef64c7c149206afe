#pragma once

#include <filesystem>

#include "fpgen/image.hpp"

namespace fpgen {

// Reads an 8-bit grayscale PNG (16-bit gray is reduced to 8 bits). Colour
// images raise NonGrayscaleInput.
ImageU8 read_gray_png(const std::filesystem::path& path);

void write_gray_png(const std::filesystem::path& path, const ImageU8& img);

// Quantises [0,1] floats to 8 bits before writing.
void write_unit_png(const std::filesystem::path& path, const ImageF& img);

}  // namespace fpgen
