#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "docsegtr/evalkit.hpp"

namespace docsegtr {

/// 8-bit RGB image, row-major, interleaved channels.
struct Image8 {
    std::int64_t h = 0;
    std::int64_t w = 0;
    std::vector<std::uint8_t> rgb;  // size h*w*3

    Image8() = default;
    Image8(std::int64_t h_, std::int64_t w_, std::uint8_t fill = 255)
        : h(h_), w(w_), rgb(static_cast<std::size_t>(h_ * w_ * 3), fill) {}

    std::uint8_t* px(std::int64_t y, std::int64_t x) { return rgb.data() + (y * w + x) * 3; }
    const std::uint8_t* px(std::int64_t y, std::int64_t x) const { return rgb.data() + (y * w + x) * 3; }
};

void write_ppm(const std::string& path, const Image8& img);  // binary P6
Image8 read_ppm(const std::string& path);

}  // namespace docsegtr
