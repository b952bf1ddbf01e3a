#include "docsegtr/backbone.hpp"

#include <cmath>

namespace docsegtr {

ConvParams ConvParams::init(std::int64_t cout, std::int64_t cin, std::int64_t k, Rng& rng) {
    ConvParams p;
    std::vector<double> w(static_cast<std::size_t>(cout * cin * k * k));
    const double s = std::sqrt(2.0 / static_cast<double>(cin * k * k));
    for (auto& v : w) v = s * rng.next_normal();
    p.w = Tensor(Shape{cout, cin, k, k}, std::move(w), true);
    p.bias = Tensor(Shape{cout}, 0.0, true);
    return p;
}

BackboneParams BackboneParams::init(const BackboneConfig& cfg, Rng& rng) {
    if (cfg.c_stem < 1 || cfg.c_fpn < 1) throw ConfigError("backbone channels must be >= 1");
    BackboneParams p;
    p.cfg = cfg;
    p.stem = ConvParams::init(cfg.c_stem, 3, 3, rng);
    p.stage2 = ConvParams::init(cfg.stage_channels(2), cfg.c_stem, 3, rng);
    p.stage3 = ConvParams::init(cfg.stage_channels(3), cfg.stage_channels(2), 3, rng);
    p.stage4 = ConvParams::init(cfg.stage_channels(4), cfg.stage_channels(3), 3, rng);
    p.stage5 = ConvParams::init(cfg.stage_channels(5), cfg.stage_channels(4), 3, rng);
    p.lat2 = ConvParams::init(cfg.c_fpn, cfg.stage_channels(2), 1, rng);
    p.lat3 = ConvParams::init(cfg.c_fpn, cfg.stage_channels(3), 1, rng);
    p.lat4 = ConvParams::init(cfg.c_fpn, cfg.stage_channels(4), 1, rng);
    p.lat5 = ConvParams::init(cfg.c_fpn, cfg.stage_channels(5), 1, rng);
    p.smooth2 = ConvParams::init(cfg.c_fpn, cfg.c_fpn, 3, rng);
    p.smooth3 = ConvParams::init(cfg.c_fpn, cfg.c_fpn, 3, rng);
    p.smooth4 = ConvParams::init(cfg.c_fpn, cfg.c_fpn, 3, rng);
    p.smooth5 = ConvParams::init(cfg.c_fpn, cfg.c_fpn, 3, rng);
    return p;
}

std::int64_t BackboneParams::param_count() const {
    return stem.param_count() + stage2.param_count() + stage3.param_count() +
           stage4.param_count() + stage5.param_count() + lat2.param_count() +
           lat3.param_count() + lat4.param_count() + lat5.param_count() +
           smooth2.param_count() + smooth3.param_count() + smooth4.param_count() +
           smooth5.param_count();
}

PyramidFeatures backbone_fpn_forward(const Tensor& image, const BackboneParams& params) {
    if (image.rank() != 3 || image.dim(0) != 3) {
        throw ShapeError("backbone expects [3,H,W] image, got " + shape_str(image.shape()));
    }
    const std::int64_t h = image.dim(1), w = image.dim(2);
    if (h % 64 != 0 || w % 64 != 0) {
        throw ShapeError("backbone input dims must be divisible by 64, got " + shape_str(image.shape()));
    }
    Tensor s = gelu(conv2d(image, params.stem.w, params.stem.bias, 2, 1));            // 1/2
    Tensor c2 = gelu(conv2d(s, params.stage2.w, params.stage2.bias, 2, 1));           // 1/4
    Tensor c3 = gelu(conv2d(c2, params.stage3.w, params.stage3.bias, 2, 1));          // 1/8
    Tensor c4 = gelu(conv2d(c3, params.stage4.w, params.stage4.bias, 2, 1));          // 1/16
    Tensor c5 = gelu(conv2d(c4, params.stage5.w, params.stage5.bias, 2, 1));          // 1/32

    Tensor l5 = conv2d(c5, params.lat5.w, params.lat5.bias, 1, 0);
    Tensor l4 = conv2d(c4, params.lat4.w, params.lat4.bias, 1, 0);
    Tensor l3 = conv2d(c3, params.lat3.w, params.lat3.bias, 1, 0);
    Tensor l2 = conv2d(c2, params.lat2.w, params.lat2.bias, 1, 0);

    Tensor t5 = l5;
    Tensor t4 = add(l4, upsample_nearest2d(t5, l4.dim(1), l4.dim(2)));
    Tensor t3 = add(l3, upsample_nearest2d(t4, l3.dim(1), l3.dim(2)));
    Tensor t2 = add(l2, upsample_nearest2d(t3, l2.dim(1), l2.dim(2)));

    PyramidFeatures out;
    out.levels[2] = conv2d(t2, params.smooth2.w, params.smooth2.bias, 1, 1);
    out.levels[3] = conv2d(t3, params.smooth3.w, params.smooth3.bias, 1, 1);
    out.levels[4] = conv2d(t4, params.smooth4.w, params.smooth4.bias, 1, 1);
    out.levels[5] = conv2d(t5, params.smooth5.w, params.smooth5.bias, 1, 1);
    const Tensor& p5 = out.levels[5];
    out.levels[6] = adaptive_avg_pool2d(p5, p5.dim(1) / 2, p5.dim(2) / 2);
    return out;
}

Tensor pool_to_grid(const Tensor& p5, std::int64_t n) {
    if (p5.rank() != 3) throw ShapeError("pool_to_grid expects CHW, got " + shape_str(p5.shape()));
    if (n < 1) throw ConfigError("pool_to_grid: n must be >= 1");
    Tensor pooled = adaptive_avg_pool2d(p5, n, n);  // [c, n, n]
    return permute(pooled, {1, 2, 0});              // [n, n, c]
}

}  // namespace docsegtr
