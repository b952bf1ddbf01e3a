#pragma once

#include "docsegtr/backbone.hpp"
#include "docsegtr/heads.hpp"

namespace docsegtr {

/// Unified mask feature map at 1/4 input resolution, [H_m, W_m, c_mask].
struct MaskFeatureMap {
    Tensor f;

    std::int64_t height() const { return f.dim(0); }
    std::int64_t width() const { return f.dim(1); }
    std::int64_t channels() const { return f.dim(2); }
};

/// Layerwise feature aggregation: per-level 3x3 conv + gelu, upsample to
/// P2 resolution, concat (4*c_fpn channels), point-wise conv to c_mask,
/// final upsample to mask resolution.
struct LfamParams {
    ConvParams pre2, pre3, pre4, pre5;  // 3x3, c_fpn -> c_fpn
    ConvParams fuse;                    // 1x1, 4*c_fpn -> c_mask

    static LfamParams init(std::int64_t c_fpn, std::int64_t c_mask, Rng& rng);
};

/// p5t is the transformer-processed grid mapped back to P5 resolution (CHW).
MaskFeatureMap lfam_fuse(const Tensor& p2, const Tensor& p3, const Tensor& p4,
                         const Tensor& p5t, const LfamParams& params);

/// Reshape the [n,n,c] encoder grid to CHW and nearest-upsample to P5 size.
Tensor grid_to_p5(const GridFeatures& grid, std::int64_t h5, std::int64_t w5);

}  // namespace docsegtr
