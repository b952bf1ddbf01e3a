#pragma once

#include <cstdint>
#include <vector>

#include "docsegtr/heads.hpp"
#include "docsegtr/lfam.hpp"
#include "docsegtr/mask.hpp"

namespace docsegtr {

struct Instance {
    int class_id = 0;
    double score = 0.0;
    Tensor soft_mask;  // [H_m, W_m] in (0,1)
    std::int64_t cell_row = 0;
    std::int64_t cell_col = 0;
};

struct InstanceSet {
    std::vector<Instance> items;
};

enum class NmsMethod { kGaussian, kLinear };

struct InferenceConfig {
    double score_thr = 0.1;
    double mask_thr = 0.5;
    double nms_sigma = 2.0;
    NmsMethod nms_method = NmsMethod::kGaussian;
    std::int64_t top_k = 100;
};

/// Convolve the mask feature map with every cell's predicted kernel:
/// out[y,x,i,j] is the mask logit at pixel (y,x) for grid cell (i,j).
/// Differentiable in both `f.f` and `kernels`.
Tensor dynamic_conv(const MaskFeatureMap& f, const Tensor& kernels, const KernelSpec& spec);

/// Extract the [H,W] logit map of one grid cell from the dynamic_conv
/// output [H,W,n,n]; differentiable.
Tensor select_cell(const Tensor& mask_logits, std::int64_t i, std::int64_t j);

BinaryMask binarize(const Tensor& soft_mask, double thr);

/// Score decay on overlapping masks: for each item the decay is
/// min over higher-scored items i of f(iou)/f(iou_max_i), gaussian
/// f(x)=exp(-x^2/sigma), linear f(x)=1-x. Masks are binarized at 0.5 for
/// IoU. Returns items with decayed scores, re-sorted descending.
InstanceSet matrix_nms(const InstanceSet& items, double sigma, NmsMethod method);

/// Full inference pipeline for one image: threshold category scores,
/// generate masks via dynamic convolution, decay with Matrix NMS,
/// re-threshold and truncate to top_k.
InstanceSet predict_instances(const Tensor& cate, const Tensor& kernels,
                              const MaskFeatureMap& f, const KernelSpec& spec,
                              const InferenceConfig& cfg);

}  // namespace docsegtr
