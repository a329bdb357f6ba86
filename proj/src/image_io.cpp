#include "gsnet/image_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>

namespace gsnet {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void png_fail(png_structp, png_const_charp msg) { throw IoError(std::string("png: ") + msg); }
void png_warn(png_structp, png_const_charp) {}

struct Raw {
    std::int64_t h = 0, w = 0;
    int channels = 0;
    std::vector<std::uint8_t> data;
};

Raw read_png(const std::filesystem::path& path, bool want_gray) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) {
        throw IoError("cannot open image: " + path.string());
    }
    unsigned char sig[8];
    if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
        throw IoError("not a PNG file: " + path.string());
    }
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
    png_infop info = png_create_info_struct(png);
    Raw raw;
    try {
        png_init_io(png, fp.get());
        png_set_sig_bytes(png, 8);
        png_read_info(png, info);
        const int depth = png_get_bit_depth(png, info);
        const int color = png_get_color_type(png, info);
        if (want_gray) {
            if (color != PNG_COLOR_TYPE_GRAY || depth != 8) {
                throw IoError("mask must be a single-channel 8-bit PNG: " + path.string());
            }
        } else {
            if (depth == 16) {
                png_set_strip_16(png);
            }
            if (color == PNG_COLOR_TYPE_PALETTE) {
                png_set_palette_to_rgb(png);
            }
            if (color == PNG_COLOR_TYPE_GRAY && depth < 8) {
                png_set_expand_gray_1_2_4_to_8(png);
            }
            if (color & PNG_COLOR_MASK_ALPHA) {
                png_set_strip_alpha(png);
            }
            if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) {
                png_set_gray_to_rgb(png);
            }
        }
        png_read_update_info(png, info);
        raw.w = png_get_image_width(png, info);
        raw.h = png_get_image_height(png, info);
        raw.channels = png_get_channels(png, info);
        const std::size_t stride = png_get_rowbytes(png, info);
        raw.data.resize(stride * static_cast<std::size_t>(raw.h));
        std::vector<png_bytep> rows(static_cast<std::size_t>(raw.h));
        for (std::size_t r = 0; r < rows.size(); ++r) {
            rows[r] = raw.data.data() + r * stride;
        }
        png_read_image(png, rows.data());
        png_read_end(png, nullptr);
    } catch (const IoError& e) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError(std::string(e.what()) + " (" + path.string() + ")");
    }
    png_destroy_read_struct(&png, &info, nullptr);
    return raw;
}

void write_png(const std::filesystem::path& path, std::int64_t h, std::int64_t w, int channels,
               const std::vector<std::uint8_t>& data) {
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) {
        throw IoError("cannot write image: " + path.string());
    }
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
    png_infop info = png_create_info_struct(png);
    try {
        png_init_io(png, fp.get());
        png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
                     channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                     PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
        png_write_info(png, info);
        const std::size_t stride = static_cast<std::size_t>(w * channels);
        for (std::int64_t r = 0; r < h; ++r) {
            png_write_row(png, data.data() + static_cast<std::size_t>(r) * stride);
        }
        png_write_end(png, nullptr);
    } catch (const IoError& e) {
        png_destroy_write_struct(&png, &info);
        throw IoError(std::string(e.what()) + " (" + path.string() + ")");
    }
    png_destroy_write_struct(&png, &info);
}

}  // namespace

Tensor<float> read_rgb_png(const std::filesystem::path& path) {
    const Raw raw = read_png(path, false);
    Tensor<float> out({3, raw.h, raw.w});
    const std::size_t plane = static_cast<std::size_t>(raw.h * raw.w);
    for (std::size_t i = 0; i < plane; ++i) {
        for (std::size_t c = 0; c < 3; ++c) {
            out[c * plane + i] = static_cast<float>(raw.data[i * 3 + c]) / 255.0f;
        }
    }
    return out;
}

void write_rgb_png(const std::filesystem::path& path, const Tensor<float>& image) {
    if (image.rank() != 3 || image.dim(0) != 3) {
        throw ContractError("write_rgb_png expects 3 x H x W, got " + shape_str(image.shape()));
    }
    const std::size_t plane = static_cast<std::size_t>(image.dim(1) * image.dim(2));
    std::vector<std::uint8_t> data(plane * 3);
    for (std::size_t i = 0; i < plane; ++i) {
        for (std::size_t c = 0; c < 3; ++c) {
            const float v = std::clamp(image[c * plane + i], 0.0f, 1.0f);
            data[i * 3 + c] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
        }
    }
    write_png(path, image.dim(1), image.dim(2), 3, data);
}

SegmentationMask read_mask_png(const std::filesystem::path& path) {
    Raw raw = read_png(path, true);
    SegmentationMask m;
    m.height = raw.h;
    m.width = raw.w;
    m.indices = std::move(raw.data);
    return m;
}

void write_mask_png(const std::filesystem::path& path, const SegmentationMask& mask) {
    write_png(path, mask.height, mask.width, 1, mask.indices);
}

const std::array<std::array<std::uint8_t, 3>, 12>& overlay_palette() {
    static const std::array<std::array<std::uint8_t, 3>, 12> palette{{{230, 25, 75},
                                                                       {60, 180, 75},
                                                                       {255, 225, 25},
                                                                       {0, 130, 200},
                                                                       {245, 130, 48},
                                                                       {145, 30, 180},
                                                                       {70, 240, 240},
                                                                       {240, 50, 230},
                                                                       {210, 245, 60},
                                                                       {250, 190, 212},
                                                                       {0, 128, 128},
                                                                       {170, 110, 40}}};
    return palette;
}

Tensor<float> make_overlay(const Tensor<float>& image, const SegmentationMask& mask) {
    if (image.rank() != 3 || image.dim(0) != 3 || image.dim(1) != mask.height || image.dim(2) != mask.width) {
        throw ContractError("overlay: image " + shape_str(image.shape()) + " does not match mask " +
                            std::to_string(mask.height) + "x" + std::to_string(mask.width));
    }
    const std::size_t plane = mask.size();
    Tensor<float> out(image.shape());
    const auto& pal = overlay_palette();
    for (std::size_t i = 0; i < plane; ++i) {
        const float gray = 0.299f * image[i] + 0.587f * image[plane + i] + 0.114f * image[2 * plane + i];
        const auto k = mask.indices[i];
        for (std::size_t c = 0; c < 3; ++c) {
            out[c * plane + i] = k == kUnlabeled ? gray : 0.5f * gray + 0.5f * pal[k % pal.size()][c] / 255.0f;
        }
    }
    return out;
}

}  // namespace gsnet
