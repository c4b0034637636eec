#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace coastal::data {

/// 8-bit grayscale PNG, row-major.
void write_png_gray(const std::string& path, const std::vector<uint8_t>& pixels, int h, int w);

/// 8-bit interleaved RGB PNG.
void write_png_rgb(const std::string& path, const std::vector<uint8_t>& pixels, int h, int w);

}  // namespace coastal::data
