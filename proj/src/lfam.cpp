#include "docsegtr/lfam.hpp"

namespace docsegtr {

LfamParams LfamParams::init(std::int64_t c_fpn, std::int64_t c_mask, Rng& rng) {
    LfamParams p;
    p.pre2 = ConvParams::init(c_fpn, c_fpn, 3, rng);
    p.pre3 = ConvParams::init(c_fpn, c_fpn, 3, rng);
    p.pre4 = ConvParams::init(c_fpn, c_fpn, 3, rng);
    p.pre5 = ConvParams::init(c_fpn, c_fpn, 3, rng);
    p.fuse = ConvParams::init(c_mask, 4 * c_fpn, 1, rng);
    return p;
}

Tensor grid_to_p5(const GridFeatures& grid, std::int64_t h5, std::int64_t w5) {
    Tensor chw = permute(grid.grid, {2, 0, 1});  // [c, n, n]
    return upsample_nearest2d(chw, h5, w5);
}

MaskFeatureMap lfam_fuse(const Tensor& p2, const Tensor& p3, const Tensor& p4,
                         const Tensor& p5t, const LfamParams& params) {
    const std::int64_t c_fpn = params.pre2.w.dim(1);
    for (const Tensor* t : {&p2, &p3, &p4, &p5t}) {
        if (t->rank() != 3 || t->dim(0) != c_fpn) {
            throw ShapeError("lfam_fuse: expected [c_fpn,H,W] with c_fpn=" + std::to_string(c_fpn) +
                             ", got " + shape_str(t->shape()));
        }
    }
    const std::int64_t oh = p2.dim(1), ow = p2.dim(2);
    auto level = [&](const Tensor& x, const ConvParams& pre) {
        Tensor y = gelu(conv2d(x, pre.w, pre.bias, 1, 1));
        if (y.dim(1) != oh || y.dim(2) != ow) y = upsample_nearest2d(y, oh, ow);
        return y;
    };
    Tensor cat = concat({level(p2, params.pre2), level(p3, params.pre3),
                         level(p4, params.pre4), level(p5t, params.pre5)}, 0);
    Tensor fused = conv2d(cat, params.fuse.w, params.fuse.bias, 1, 0);
    // mask resolution equals P2 resolution; the final upsample is kept for
    // interface fidelity and is a no-op at that size
    fused = upsample_nearest2d(fused, oh, ow);
    return MaskFeatureMap{permute(fused, {1, 2, 0})};
}

}  // namespace docsegtr
