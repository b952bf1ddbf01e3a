#include "docsegtr/heads.hpp"

#include <cmath>

namespace docsegtr {

ClassCatalog ClassCatalog::document_layout() {
    return ClassCatalog{{"text", "title", "list", "table", "figure"}};
}

void KernelSpec::validate() const {
    if (theta < 1 || theta % 2 == 0) throw ConfigError("kernel theta must be odd and >= 1");
    if (c_mask < 1) throw ConfigError("c_mask must be >= 1");
}

static Tensor init_weight(std::int64_t in, std::int64_t out, Rng& rng) {
    std::vector<double> v(static_cast<std::size_t>(in * out));
    const double s = std::sqrt(2.0 / static_cast<double>(in + out));
    for (auto& x : v) x = s * rng.next_normal();
    return Tensor(Shape{in, out}, std::move(v), true);
}

HeadParams HeadParams::init(std::int64_t c, std::int64_t q_c, const KernelSpec& spec, Rng& rng) {
    spec.validate();
    if (q_c < 1) throw ConfigError("q_c must be >= 1");
    HeadParams p;
    p.cate_w1 = init_weight(c, c, rng);
    p.cate_b1 = Tensor(Shape{c}, 0.0, true);
    p.cate_w2 = init_weight(c, q_c, rng);
    // bias the class logits low so the untrained model predicts background
    p.cate_b2 = Tensor(Shape{q_c}, -4.0, true);
    p.kernel_w = init_weight(c, spec.kernel_params(), rng);
    p.kernel_b = Tensor(Shape{spec.kernel_params()}, 0.0, true);
    return p;
}

Tensor category_head_forward(const GridFeatures& x, const HeadParams& p, std::int64_t q_c) {
    if (p.cate_w2.dim(1) != q_c) {
        throw ShapeError("category head sized for q_c=" + std::to_string(p.cate_w2.dim(1)) +
                         ", requested " + std::to_string(q_c));
    }
    Tensor hidden = gelu(linear(x.grid, p.cate_w1, p.cate_b1));
    return sigmoid(linear(hidden, p.cate_w2, p.cate_b2));
}

Tensor kernel_head_forward(const GridFeatures& x, const HeadParams& p, const KernelSpec& spec) {
    spec.validate();
    if (p.kernel_w.dim(1) != spec.kernel_params()) {
        throw ShapeError("kernel head sized for b=" + std::to_string(p.kernel_w.dim(1)) +
                         ", spec requires " + std::to_string(spec.kernel_params()));
    }
    return linear(x.grid, p.kernel_w, p.kernel_b);
}

}  // namespace docsegtr
