#pragma once

#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include <png.h>

#include "hcp/errors.hpp"
#include "hcp/tensor.hpp"

namespace hcp {

// Interleaved float image, values in [0,1], channels 1 (gray) or 3 (rgb).
struct Image {
    int64_t height = 0;
    int64_t width = 0;
    int64_t channels = 0;
    std::vector<float> pixels;  // [height][width][channels]

    float& at(int64_t y, int64_t x, int64_t c) {
        return pixels[static_cast<size_t>((y * width + x) * channels + c)];
    }
    float at(int64_t y, int64_t x, int64_t c) const {
        return pixels[static_cast<size_t>((y * width + x) * channels + c)];
    }

    // [C,H,W] tensor view of the pixel data.
    Tensor to_chw() const {
        Tensor t({channels, height, width});
        for (int64_t c = 0; c < channels; ++c)
            for (int64_t y = 0; y < height; ++y)
                for (int64_t x = 0; x < width; ++x) t(c, y, x) = at(y, x, c);
        return t;
    }

    static Image from_chw(const Tensor& t) {
        if (t.rank() != 3) throw ShapeError("image: [C,H,W] tensor required, got " + shape_str(t.shape()));
        Image img;
        img.channels = t.size(0);
        img.height = t.size(1);
        img.width = t.size(2);
        img.pixels.resize(static_cast<size_t>(t.numel()));
        for (int64_t c = 0; c < img.channels; ++c)
            for (int64_t y = 0; y < img.height; ++y)
                for (int64_t x = 0; x < img.width; ++x)
                    img.at(y, x, c) = static_cast<float>(t(c, y, x));
        return img;
    }
};

namespace detail {

struct PngFileGuard {
    std::FILE* fp = nullptr;
    ~PngFileGuard() {
        if (fp) std::fclose(fp);
    }
};

}  // namespace detail

// Reads 8- or 16-bit PNG; gray, gray+alpha, rgb and rgba inputs are accepted,
// palettes are expanded and alpha is dropped. Output values are in [0,1].
inline Image read_png(const std::string& path) {
    detail::PngFileGuard file;
    file.fp = std::fopen(path.c_str(), "rb");
    if (!file.fp) throw ValidationError("png: cannot open " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw Error("png: read struct allocation failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw Error("png: info struct allocation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw ValidationError("png: failed to decode " + path);
    }
    png_init_io(png, file.fp);
    png_read_info(png, info);

    png_uint_32 width = png_get_image_width(png, info);
    png_uint_32 height = png_get_image_height(png, info);
    int bit_depth = png_get_bit_depth(png, info);
    int color_type = png_get_color_type(png, info);

    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_set_strip_alpha(png);
#if defined(PNG_READ_SWAP_SUPPORTED)
    if (bit_depth == 16) png_set_swap(png);  // network order -> host little endian
#endif
    png_read_update_info(png, info);

    int out_channels = static_cast<int>(png_get_channels(png, info));
    int out_depth = png_get_bit_depth(png, info);
    size_t rowbytes = png_get_rowbytes(png, info);
    std::vector<std::vector<png_byte>> rows(height, std::vector<png_byte>(rowbytes));
    std::vector<png_bytep> row_ptrs(height);
    for (png_uint_32 y = 0; y < height; ++y) row_ptrs[y] = rows[y].data();
    png_read_image(png, row_ptrs.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    Image img;
    img.height = height;
    img.width = width;
    img.channels = (out_channels >= 3) ? 3 : 1;
    img.pixels.resize(static_cast<size_t>(img.height * img.width * img.channels));
    for (png_uint_32 y = 0; y < height; ++y) {
        for (png_uint_32 x = 0; x < width; ++x) {
            for (int64_t c = 0; c < img.channels; ++c) {
                double v;
                if (out_depth == 16) {
                    const uint16_t* row16 = reinterpret_cast<const uint16_t*>(rows[y].data());
                    v = row16[x * out_channels + c] / 65535.0;
                } else {
                    v = rows[y][x * out_channels + c] / 255.0;
                }
                img.at(y, x, c) = static_cast<float>(v);
            }
        }
    }
    return img;
}

// Writes an 8-bit gray or rgb PNG; values are clamped to [0,1].
inline void write_png(const std::string& path, const Image& img) {
    if (img.channels != 1 && img.channels != 3)
        throw ValidationError("png: only 1- or 3-channel images can be written");
    if (img.height <= 0 || img.width <= 0) throw ValidationError("png: empty image");

    detail::PngFileGuard file;
    file.fp = std::fopen(path.c_str(), "wb");
    if (!file.fp) throw ValidationError("png: cannot open " + path + " for writing");

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw Error("png: write struct allocation failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw Error("png: info struct allocation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw ValidationError("png: failed to encode " + path);
    }
    png_init_io(png, file.fp);
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height),
                 8, img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    std::vector<png_byte> row(static_cast<size_t>(img.width * img.channels));
    for (int64_t y = 0; y < img.height; ++y) {
        for (int64_t x = 0; x < img.width; ++x) {
            for (int64_t c = 0; c < img.channels; ++c) {
                float v = img.at(y, x, c);
                v = std::min(1.0f, std::max(0.0f, v));
                row[static_cast<size_t>(x * img.channels + c)] =
                    static_cast<png_byte>(std::lround(v * 255.0f));
            }
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

}  // namespace hcp
