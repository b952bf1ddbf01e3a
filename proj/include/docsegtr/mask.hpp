#pragma once

#include <cstdint>
#include <vector>

namespace docsegtr {

/// Row-major binary mask.
struct BinaryMask {
    std::int64_t h = 0;
    std::int64_t w = 0;
    std::vector<std::uint8_t> data;  // 0/1, size h*w

    BinaryMask() = default;
    BinaryMask(std::int64_t h_, std::int64_t w_) : h(h_), w(w_), data(static_cast<std::size_t>(h_ * w_), 0) {}

    std::uint8_t& at(std::int64_t y, std::int64_t x) { return data[static_cast<std::size_t>(y * w + x)]; }
    std::uint8_t at(std::int64_t y, std::int64_t x) const { return data[static_cast<std::size_t>(y * w + x)]; }

    std::int64_t area() const {
        std::int64_t a = 0;
        for (auto v : data) a += v ? 1 : 0;
        return a;
    }

    bool operator==(const BinaryMask& o) const { return h == o.h && w == o.w && data == o.data; }
};

}  // namespace docsegtr
