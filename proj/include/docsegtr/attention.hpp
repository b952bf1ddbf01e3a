#pragma once

#include <cstdint>

#include "docsegtr/rng.hpp"
#include "docsegtr/tensor.hpp"

namespace docsegtr {

/// h x w x c grid of patch features (row, col, channel). The model uses
/// square n x n grids; rectangular grids are accepted so the complexity
/// benchmark can sweep (h, w) independently.
struct GridFeatures {
    Tensor grid;  // [h, w, c]

    std::int64_t rows() const { return grid.dim(0); }
    std::int64_t cols() const { return grid.dim(1); }
    std::int64_t channels() const { return grid.dim(2); }
};

GridFeatures make_grid(Tensor t);  // validates rank-3 [h, w, c]

/// Learnable per-row / per-column positional embeddings.
struct PositionalEmbeddings {
    Tensor row;  // [n, c]
    Tensor col;  // [n, c]

    static PositionalEmbeddings init(std::int64_t n, std::int64_t c, Rng& rng);
};

/// Projection weights for one scaled dot-product multi-head attention.
struct MhaParams {
    Tensor w_q, w_k, w_v, w_o;  // [c, c]
    Tensor b_q, b_k, b_v, b_o;  // [c]
    std::int64_t num_heads = 4;

    static MhaParams init(std::int64_t c, std::int64_t num_heads, Rng& rng);
};

/// Twin attention: one mechanism attending within columns, one within rows.
struct AttentionParams {
    MhaParams column;
    MhaParams row;

    static AttentionParams init(std::int64_t c, std::int64_t num_heads, Rng& rng);
};

/// out[i,j] = x[i,j] + pe.row[i] + pe.col[j]
GridFeatures add_positional(const GridFeatures& x, const PositionalEmbeddings& pe);

/// Multi-head self-attention over sequences x[B,L,c]. When `score_count`
/// is given it is incremented by the number of per-head query-key score
/// entries (B*L*L; head count does not multiply the tally).
Tensor multi_head_attention(const Tensor& x, const MhaParams& p, std::int64_t* score_count = nullptr);

GridFeatures column_attention(const GridFeatures& x, const MhaParams& p, std::int64_t* score_count = nullptr);
GridFeatures row_attention(const GridFeatures& x, const MhaParams& p, std::int64_t* score_count = nullptr);
GridFeatures twin_attention(const GridFeatures& x, const AttentionParams& p, std::int64_t* score_count = nullptr);

/// Full attention over the flattened h*w token sequence (benchmark baseline).
Tensor full_attention(const Tensor& grid_hwc, const MhaParams& p, std::int64_t* score_count = nullptr);

enum class AttentionMode { kFull, kTwin };

/// Closed-form per-head score-entry count: full = (h*w)^2,
/// twin = h*w^2 + w*h^2.
std::int64_t attention_score_count(std::int64_t h, std::int64_t w, AttentionMode mode);

}  // namespace docsegtr
