#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gsnet/tensor.hpp"

namespace gsnet {

inline constexpr std::uint8_t kUnlabeled = 255;

/// Per-pixel class indices, row-major. kUnlabeled marks pixels that carry no
/// class.
struct SegmentationMask {
    std::int64_t height = 0;
    std::int64_t width = 0;
    std::vector<std::uint8_t> indices;

    SegmentationMask() = default;
    SegmentationMask(std::int64_t h, std::int64_t w, std::uint8_t fill = 0)
        : height(h), width(w), indices(static_cast<std::size_t>(h * w), fill) {}

    std::size_t size() const { return indices.size(); }
    std::uint8_t& at(std::int64_t r, std::int64_t c) { return indices[static_cast<std::size_t>(r * width + c)]; }
    std::uint8_t at(std::int64_t r, std::int64_t c) const { return indices[static_cast<std::size_t>(r * width + c)]; }
    bool operator==(const SegmentationMask&) const = default;
};

inline void check_same_extent(const SegmentationMask& a, const SegmentationMask& b, const std::string& what) {
    if (a.height != b.height || a.width != b.width) {
        throw ContractError(what + ": mask extents differ (" + std::to_string(a.height) + "x" + std::to_string(a.width) +
                            " vs " + std::to_string(b.height) + "x" + std::to_string(b.width) + ")");
    }
}

}  // namespace gsnet
