#pragma once

#include <cstdint>
#include <vector>

#include "docsegtr/attention.hpp"

namespace docsegtr {

struct EncoderConfig {
    std::int64_t num_layers = 2;  // K
    std::int64_t channels = 32;
    std::int64_t mlp_ratio = 4;
    std::int64_t num_heads = 4;
    bool use_attention = true;  // ablation: drop the twin-attention branch

    void validate() const;
};

/// Pre-norm transformer layer: x1 = x + TwinAttn(LN(x)); out = x1 + MLP(LN(x1)).
struct EncoderLayerParams {
    AttentionParams attn;
    Tensor ln1_gamma, ln1_beta;  // [c]
    Tensor ln2_gamma, ln2_beta;
    Tensor mlp_w1, mlp_b1;  // [c, hidden], [hidden]
    Tensor mlp_w2, mlp_b2;  // [hidden, c], [c]

    static EncoderLayerParams init(const EncoderConfig& cfg, Rng& rng);
};

struct EncoderParams {
    EncoderConfig cfg;
    std::vector<EncoderLayerParams> layers;

    static EncoderParams init(const EncoderConfig& cfg, Rng& rng);
};

GridFeatures encoder_layer_forward(const GridFeatures& x, const EncoderLayerParams& p,
                                   const EncoderConfig& cfg, std::int64_t* score_count = nullptr);

GridFeatures encoder_stack_forward(const GridFeatures& x, const EncoderParams& p,
                                   std::int64_t* score_count = nullptr);

}  // namespace docsegtr
