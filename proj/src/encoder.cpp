#include "docsegtr/encoder.hpp"

#include <cmath>

namespace docsegtr {

void EncoderConfig::validate() const {
    if (num_layers < 0) throw ConfigError("encoder: K must be >= 0");
    if (channels < 1) throw ConfigError("encoder: channels must be >= 1");
    if (mlp_ratio < 1) throw ConfigError("encoder: mlp_ratio must be >= 1");
    if (num_heads < 1 || channels % num_heads != 0) {
        throw ConfigError("encoder: channels " + std::to_string(channels) +
                          " not divisible by num_heads " + std::to_string(num_heads));
    }
}

static Tensor init_weight(std::int64_t in, std::int64_t out, Rng& rng) {
    std::vector<double> v(static_cast<std::size_t>(in * out));
    const double s = std::sqrt(2.0 / static_cast<double>(in + out));
    for (auto& x : v) x = s * rng.next_normal();
    return Tensor(Shape{in, out}, std::move(v), true);
}

EncoderLayerParams EncoderLayerParams::init(const EncoderConfig& cfg, Rng& rng) {
    cfg.validate();
    const std::int64_t c = cfg.channels;
    const std::int64_t hidden = cfg.mlp_ratio * c;
    EncoderLayerParams p;
    p.attn = AttentionParams::init(c, cfg.num_heads, rng);
    p.ln1_gamma = Tensor(Shape{c}, 1.0, true);
    p.ln1_beta = Tensor(Shape{c}, 0.0, true);
    p.ln2_gamma = Tensor(Shape{c}, 1.0, true);
    p.ln2_beta = Tensor(Shape{c}, 0.0, true);
    p.mlp_w1 = init_weight(c, hidden, rng);
    p.mlp_b1 = Tensor(Shape{hidden}, 0.0, true);
    p.mlp_w2 = init_weight(hidden, c, rng);
    p.mlp_b2 = Tensor(Shape{c}, 0.0, true);
    return p;
}

EncoderParams EncoderParams::init(const EncoderConfig& cfg, Rng& rng) {
    cfg.validate();
    EncoderParams p;
    p.cfg = cfg;
    for (std::int64_t i = 0; i < cfg.num_layers; ++i) {
        p.layers.push_back(EncoderLayerParams::init(cfg, rng));
    }
    return p;
}

constexpr double kLnEps = 1e-6;

GridFeatures encoder_layer_forward(const GridFeatures& x, const EncoderLayerParams& p,
                                   const EncoderConfig& cfg, std::int64_t* score_count) {
    if (x.channels() != cfg.channels) {
        throw ShapeError("encoder layer: grid channels " + std::to_string(x.channels()) +
                         " != config channels " + std::to_string(cfg.channels));
    }
    Tensor x1 = x.grid;
    if (cfg.use_attention) {
        GridFeatures normed{layer_norm(x.grid, p.ln1_gamma, p.ln1_beta, kLnEps)};
        GridFeatures attn_out = twin_attention(normed, p.attn, score_count);
        x1 = add(x.grid, attn_out.grid);
    }
    Tensor normed2 = layer_norm(x1, p.ln2_gamma, p.ln2_beta, kLnEps);
    Tensor hidden = gelu(linear(normed2, p.mlp_w1, p.mlp_b1));
    Tensor mlp_out = linear(hidden, p.mlp_w2, p.mlp_b2);
    return GridFeatures{add(x1, mlp_out)};
}

GridFeatures encoder_stack_forward(const GridFeatures& x, const EncoderParams& p,
                                   std::int64_t* score_count) {
    GridFeatures cur = x;
    for (const auto& layer : p.layers) {
        cur = encoder_layer_forward(cur, layer, p.cfg, score_count);
    }
    return cur;
}

}  // namespace docsegtr
