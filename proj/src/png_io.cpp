#include "coastal/data/png_io.hpp"

#include <png.h>

#include <cstdio>
#include <memory>

#include "coastal/errors.hpp"

namespace coastal::data {

namespace {

void write_png(const std::string& path, const std::vector<uint8_t>& pixels, int h, int w, int color_type,
               int channels) {
    if ((int64_t)pixels.size() != (int64_t)h * w * channels) throw ConfigError("png: pixel buffer size mismatch");
    std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
    if (!fp) throw ConfigError("cannot write " + path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (!png || !info || setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw ConfigError("png encoding failed for " + path);
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, (png_uint_32)w, (png_uint_32)h, 8, color_type, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < h; ++y)
        png_write_row(png, const_cast<png_bytep>(pixels.data() + (size_t)y * w * channels));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

}  // namespace

void write_png_gray(const std::string& path, const std::vector<uint8_t>& pixels, int h, int w) {
    write_png(path, pixels, h, w, PNG_COLOR_TYPE_GRAY, 1);
}

void write_png_rgb(const std::string& path, const std::vector<uint8_t>& pixels, int h, int w) {
    write_png(path, pixels, h, w, PNG_COLOR_TYPE_RGB, 3);
}

}  // namespace coastal::data
