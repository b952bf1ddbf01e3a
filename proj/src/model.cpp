#include "docsegtr/model.hpp"

namespace docsegtr {

Model Model::init(const RunConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed * 0x9E3779B97F4A7C15ULL + 0xA5A5A5A5ULL);
    Model m;
    m.cfg = cfg;
    BackboneConfig bc;
    bc.c_stem = cfg.c_stem;
    bc.c_fpn = cfg.c_fpn;
    m.backbone = BackboneParams::init(bc, rng);
    m.pe = PositionalEmbeddings::init(cfg.grid_size, cfg.c_fpn, rng);
    EncoderConfig ec;
    ec.num_layers = cfg.num_layers;
    ec.channels = cfg.c_fpn;
    ec.mlp_ratio = cfg.mlp_ratio;
    ec.num_heads = cfg.num_heads;
    ec.use_attention = cfg.use_attention;
    m.encoder = EncoderParams::init(ec, rng);
    m.heads = HeadParams::init(cfg.c_fpn, cfg.num_classes, m.kernel_spec(), rng);
    m.lfam = LfamParams::init(cfg.c_fpn, cfg.c_mask, rng);
    return m;
}

NamedParams Model::named_params() {
    NamedParams out;
    auto conv = [&](const std::string& name, ConvParams& c) {
        out.emplace_back(name + ".w", c.w);
        out.emplace_back(name + ".b", c.bias);
    };
    conv("backbone.stem", backbone.stem);
    conv("backbone.stage2", backbone.stage2);
    conv("backbone.stage3", backbone.stage3);
    conv("backbone.stage4", backbone.stage4);
    conv("backbone.stage5", backbone.stage5);
    conv("backbone.lat2", backbone.lat2);
    conv("backbone.lat3", backbone.lat3);
    conv("backbone.lat4", backbone.lat4);
    conv("backbone.lat5", backbone.lat5);
    conv("backbone.smooth2", backbone.smooth2);
    conv("backbone.smooth3", backbone.smooth3);
    conv("backbone.smooth4", backbone.smooth4);
    conv("backbone.smooth5", backbone.smooth5);
    out.emplace_back("pe.row", pe.row);
    out.emplace_back("pe.col", pe.col);
    auto mha = [&](const std::string& name, MhaParams& p) {
        out.emplace_back(name + ".wq", p.w_q);
        out.emplace_back(name + ".bq", p.b_q);
        out.emplace_back(name + ".wk", p.w_k);
        out.emplace_back(name + ".bk", p.b_k);
        out.emplace_back(name + ".wv", p.w_v);
        out.emplace_back(name + ".bv", p.b_v);
        out.emplace_back(name + ".wo", p.w_o);
        out.emplace_back(name + ".bo", p.b_o);
    };
    for (std::size_t i = 0; i < encoder.layers.size(); ++i) {
        auto& l = encoder.layers[i];
        const std::string base = "encoder." + std::to_string(i);
        mha(base + ".attn.col", l.attn.column);
        mha(base + ".attn.row", l.attn.row);
        out.emplace_back(base + ".ln1.g", l.ln1_gamma);
        out.emplace_back(base + ".ln1.b", l.ln1_beta);
        out.emplace_back(base + ".ln2.g", l.ln2_gamma);
        out.emplace_back(base + ".ln2.b", l.ln2_beta);
        out.emplace_back(base + ".mlp.w1", l.mlp_w1);
        out.emplace_back(base + ".mlp.b1", l.mlp_b1);
        out.emplace_back(base + ".mlp.w2", l.mlp_w2);
        out.emplace_back(base + ".mlp.b2", l.mlp_b2);
    }
    out.emplace_back("heads.cate.w1", heads.cate_w1);
    out.emplace_back("heads.cate.b1", heads.cate_b1);
    out.emplace_back("heads.cate.w2", heads.cate_w2);
    out.emplace_back("heads.cate.b2", heads.cate_b2);
    out.emplace_back("heads.kernel.w", heads.kernel_w);
    out.emplace_back("heads.kernel.b", heads.kernel_b);
    auto conv2 = [&](const std::string& name, ConvParams& c) {
        out.emplace_back(name + ".w", c.w);
        out.emplace_back(name + ".b", c.bias);
    };
    conv2("lfam.pre2", lfam.pre2);
    conv2("lfam.pre3", lfam.pre3);
    conv2("lfam.pre4", lfam.pre4);
    conv2("lfam.pre5", lfam.pre5);
    conv2("lfam.fuse", lfam.fuse);
    return out;
}

Model::ForwardResult Model::forward(const Tensor& image, std::int64_t* score_count) {
    PyramidFeatures pyr = backbone_fpn_forward(image, backbone);
    const Tensor& p5 = pyr.levels.at(5);
    GridFeatures grid{pool_to_grid(p5, cfg.grid_size)};
    if (cfg.use_transformer) {
        grid = add_positional(grid, pe);
        grid = encoder_stack_forward(grid, encoder, score_count);
    }
    ForwardResult r;
    r.cate = category_head_forward(grid, heads, cfg.num_classes);
    r.kernels = kernel_head_forward(grid, heads, kernel_spec());
    Tensor p5t = grid_to_p5(grid, p5.dim(1), p5.dim(2));
    r.mask_features = lfam_fuse(pyr.levels.at(2), pyr.levels.at(3), pyr.levels.at(4), p5t, lfam);
    r.mask_logits = dynamic_conv(r.mask_features, r.kernels, kernel_spec());
    return r;
}

InstanceSet Model::predict(const Tensor& image) {
    detail::NoGradGuard no_grad;
    ForwardResult r = forward(image);
    return predict_instances(r.cate, r.kernels, r.mask_features, kernel_spec(), cfg.inference());
}

}  // namespace docsegtr
