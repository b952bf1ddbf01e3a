#pragma once

#include <cstdint>
#include <map>

#include "docsegtr/rng.hpp"
#include "docsegtr/tensor.hpp"

namespace docsegtr {

/// FPN outputs keyed by level; level l sits at 1/2^l of the input.
struct PyramidFeatures {
    std::map<int, Tensor> levels;  // {2,3,4,5,6} -> [c_fpn, H/2^l, W/2^l]
};

struct BackboneConfig {
    std::int64_t c_stem = 16;
    std::int64_t c_fpn = 32;

    /// Backbone channel width at pyramid level l (C2..C5): c_stem * 2^(l-2).
    std::int64_t stage_channels(int level) const { return c_stem << (level - 2); }
};

struct ConvParams {
    Tensor w;     // [cout, cin, kh, kw]
    Tensor bias;  // [cout]

    static ConvParams init(std::int64_t cout, std::int64_t cin, std::int64_t k, Rng& rng);
    std::int64_t param_count() const { return w.numel() + bias.numel(); }
};

/// Stand-in for the paper-scale backbone: two stride-2 3x3 convs to C2,
/// one stride-2 3x3 conv per later stage, gelu between, then FPN
/// laterals + top-down + 3x3 smoothing, P6 = 2x2 average pool of P5.
struct BackboneParams {
    BackboneConfig cfg;
    ConvParams stem;                 // 3 -> c_stem, stride 2
    ConvParams stage2, stage3, stage4, stage5;  // stride-2 stages to C2..C5
    ConvParams lat2, lat3, lat4, lat5;          // 1x1 laterals to c_fpn
    ConvParams smooth2, smooth3, smooth4, smooth5;  // 3x3 smoothing

    static BackboneParams init(const BackboneConfig& cfg, Rng& rng);
    std::int64_t param_count() const;
};

PyramidFeatures backbone_fpn_forward(const Tensor& image, const BackboneParams& params);

/// Adaptive-average-pool P5 (CHW) to an n x n grid, output [n, n, c].
Tensor pool_to_grid(const Tensor& p5, std::int64_t n);

}  // namespace docsegtr
