#pragma once

#include <array>
#include <filesystem>

#include "gsnet/mask.hpp"

namespace gsnet {

class IoError : public Error {
public:
    using Error::Error;
};

/// 8-bit PNG (gray, gray+alpha, RGB or RGBA; alpha dropped) as a 3 x H x W
/// image with values in [0, 1].
Tensor<float> read_rgb_png(const std::filesystem::path& path);
void write_rgb_png(const std::filesystem::path& path, const Tensor<float>& image);

/// Single-channel 8-bit PNG; pixel value = class index.
SegmentationMask read_mask_png(const std::filesystem::path& path);
void write_mask_png(const std::filesystem::path& path, const SegmentationMask& mask);

/// Fixed overlay palette, indexed by class modulo its size.
const std::array<std::array<std::uint8_t, 3>, 12>& overlay_palette();

/// Grayscale copy of `image` with each labeled pixel blended half-way towards
/// its class colour. Unlabeled pixels stay gray.
Tensor<float> make_overlay(const Tensor<float>& image, const SegmentationMask& mask);

}  // namespace gsnet
