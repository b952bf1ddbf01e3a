#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "docsegtr/attention.hpp"

namespace docsegtr {

struct ClassCatalog {
    std::vector<std::string> names;

    std::int64_t num_classes() const { return static_cast<std::int64_t>(names.size()); }
    static ClassCatalog document_layout();  // {text, title, list, table, figure}
};

/// Dynamic kernel geometry: each grid cell predicts b = theta^2 * c_mask
/// kernel parameters.
struct KernelSpec {
    std::int64_t theta = 1;
    std::int64_t c_mask = 16;

    std::int64_t kernel_params() const { return theta * theta * c_mask; }  // b
    void validate() const;
};

struct HeadParams {
    // category head: per-cell 2-layer MLP, sigmoid outputs
    Tensor cate_w1, cate_b1;  // [c, c], [c]
    Tensor cate_w2, cate_b2;  // [c, q_c], [q_c]
    // kernel head: single linear layer
    Tensor kernel_w, kernel_b;  // [c, b], [b]

    static HeadParams init(std::int64_t c, std::int64_t q_c, const KernelSpec& spec, Rng& rng);
};

struct GridPredictions {
    Tensor cate;     // [n, n, q_c] in (0,1)
    Tensor kernels;  // [n, n, b]
};

Tensor category_head_forward(const GridFeatures& x, const HeadParams& p, std::int64_t q_c);
Tensor kernel_head_forward(const GridFeatures& x, const HeadParams& p, const KernelSpec& spec);

}  // namespace docsegtr
