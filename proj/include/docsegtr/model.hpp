#pragma once

#include <string>
#include <utility>
#include <vector>

#include "docsegtr/backbone.hpp"
#include "docsegtr/encoder.hpp"
#include "docsegtr/heads.hpp"
#include "docsegtr/lfam.hpp"
#include "docsegtr/maskgen.hpp"
#include "docsegtr/runconfig.hpp"

namespace docsegtr {

using NamedParams = std::vector<std::pair<std::string, Tensor>>;

/// Full pipeline: backbone+FPN -> P5 grid (+ positional embeddings and
/// transformer encoder unless ablated) -> category/kernel heads, with
/// LFAM mask features and dynamic-convolution mask logits.
struct Model {
    RunConfig cfg;
    BackboneParams backbone;
    PositionalEmbeddings pe;
    EncoderParams encoder;
    HeadParams heads;
    LfamParams lfam;

    static Model init(const RunConfig& cfg);

    /// Stable-ordered parameter list; order defines checkpoint layout and
    /// optimizer velocity alignment. Tensors share storage with the model.
    NamedParams named_params();

    struct ForwardResult {
        Tensor cate;          // [n, n, q_c]
        Tensor kernels;       // [n, n, b]
        MaskFeatureMap mask_features;
        Tensor mask_logits;   // [H_m, W_m, n, n]
    };

    ForwardResult forward(const Tensor& image, std::int64_t* score_count = nullptr);

    /// Grad-free inference for one image.
    InstanceSet predict(const Tensor& image);

    KernelSpec kernel_spec() const { return KernelSpec{cfg.theta, cfg.c_mask}; }
};

}  // namespace docsegtr
