#include "docsegtr/attention.hpp"

#include <cmath>

namespace docsegtr {

GridFeatures make_grid(Tensor t) {
    if (t.rank() != 3) throw ShapeError("grid features must be [h,w,c], got " + shape_str(t.shape()));
    return GridFeatures{std::move(t)};
}

PositionalEmbeddings PositionalEmbeddings::init(std::int64_t n, std::int64_t c, Rng& rng) {
    PositionalEmbeddings pe;
    std::vector<double> r(static_cast<std::size_t>(n * c)), cl(static_cast<std::size_t>(n * c));
    for (auto& v : r) v = 0.02 * rng.next_normal();
    for (auto& v : cl) v = 0.02 * rng.next_normal();
    pe.row = Tensor(Shape{n, c}, std::move(r), true);
    pe.col = Tensor(Shape{n, c}, std::move(cl), true);
    return pe;
}

static Tensor init_weight(std::int64_t in, std::int64_t out, Rng& rng) {
    std::vector<double> v(static_cast<std::size_t>(in * out));
    const double s = std::sqrt(2.0 / static_cast<double>(in + out));
    for (auto& x : v) x = s * rng.next_normal();
    return Tensor(Shape{in, out}, std::move(v), true);
}

MhaParams MhaParams::init(std::int64_t c, std::int64_t num_heads, Rng& rng) {
    if (num_heads < 1 || c % num_heads != 0) {
        throw ConfigError("attention channels " + std::to_string(c) +
                          " not divisible by num_heads " + std::to_string(num_heads));
    }
    MhaParams p;
    p.w_q = init_weight(c, c, rng);
    p.w_k = init_weight(c, c, rng);
    p.w_v = init_weight(c, c, rng);
    p.w_o = init_weight(c, c, rng);
    p.b_q = Tensor(Shape{c}, 0.0, true);
    p.b_k = Tensor(Shape{c}, 0.0, true);
    p.b_v = Tensor(Shape{c}, 0.0, true);
    p.b_o = Tensor(Shape{c}, 0.0, true);
    p.num_heads = num_heads;
    return p;
}

AttentionParams AttentionParams::init(std::int64_t c, std::int64_t num_heads, Rng& rng) {
    AttentionParams p;
    p.column = MhaParams::init(c, num_heads, rng);
    p.row = MhaParams::init(c, num_heads, rng);
    return p;
}

GridFeatures add_positional(const GridFeatures& x, const PositionalEmbeddings& pe) {
    const std::int64_t h = x.rows(), w = x.cols(), c = x.channels();
    if (pe.row.dim(0) != h || pe.col.dim(0) != w || pe.row.dim(1) != c || pe.col.dim(1) != c) {
        throw ShapeError("positional embeddings " + shape_str(pe.row.shape()) + "/" +
                         shape_str(pe.col.shape()) + " do not match grid " + shape_str(x.grid.shape()));
    }
    // x[i,j] + row[i]: broadcast row over columns via reshape trick
    // [h,w,c] + [h,1,c] is not a trailing broadcast, so expand explicitly.
    Tensor row_exp = reshape(pe.row, Shape{h, 1, c});
    Tensor row_full = upsample_nearest2d(permute(row_exp, {2, 0, 1}), h, w);  // [c,h,w]
    Tensor col_full = upsample_nearest2d(permute(reshape(pe.col, Shape{1, w, c}), {2, 0, 1}), h, w);
    Tensor both = add(row_full, col_full);
    Tensor out = add(x.grid, permute(both, {1, 2, 0}));
    return GridFeatures{out};
}

Tensor multi_head_attention(const Tensor& x, const MhaParams& p, std::int64_t* score_count) {
    if (x.rank() != 3) throw ShapeError("multi_head_attention expects [B,L,c], got " + shape_str(x.shape()));
    const std::int64_t bs = x.dim(0), len = x.dim(1), c = x.dim(2);
    const std::int64_t heads = p.num_heads;
    if (heads < 1 || c % heads != 0) {
        throw ConfigError("attention channels " + std::to_string(c) +
                          " not divisible by num_heads " + std::to_string(heads));
    }
    const std::int64_t dh = c / heads;

    auto split_heads = [&](const Tensor& t) {
        // [B,L,c] -> [B*heads, L, dh]
        Tensor r = reshape(t, Shape{bs, len, heads, dh});
        r = permute(r, {0, 2, 1, 3});
        return reshape(r, Shape{bs * heads, len, dh});
    };

    Tensor q = split_heads(linear(x, p.w_q, p.b_q));
    Tensor k = split_heads(linear(x, p.w_k, p.b_k));
    Tensor v = split_heads(linear(x, p.w_v, p.b_v));

    Tensor scores = bmm(q, permute(k, {0, 2, 1}));
    if (score_count) *score_count += bs * len * len;  // per-head tally
    scores = scale(scores, 1.0 / std::sqrt(static_cast<double>(dh)));
    Tensor attn = softmax_lastdim(scores);
    Tensor out = bmm(attn, v);  // [B*heads, L, dh]
    out = reshape(out, Shape{bs, heads, len, dh});
    out = permute(out, {0, 2, 1, 3});
    out = reshape(out, Shape{bs, len, c});
    return linear(out, p.w_o, p.b_o);
}

GridFeatures column_attention(const GridFeatures& x, const MhaParams& p, std::int64_t* score_count) {
    // sequences are columns: batch = w columns, length = h rows
    Tensor seq = permute(x.grid, {1, 0, 2});  // [w, h, c]
    Tensor out = multi_head_attention(seq, p, score_count);
    return GridFeatures{permute(out, {1, 0, 2})};
}

GridFeatures row_attention(const GridFeatures& x, const MhaParams& p, std::int64_t* score_count) {
    // sequences are rows: batch = h rows, length = w cols; grid layout already [h, w, c]
    Tensor out = multi_head_attention(x.grid, p, score_count);
    return GridFeatures{out};
}

GridFeatures twin_attention(const GridFeatures& x, const AttentionParams& p, std::int64_t* score_count) {
    return row_attention(column_attention(x, p.column, score_count), p.row, score_count);
}

Tensor full_attention(const Tensor& grid_hwc, const MhaParams& p, std::int64_t* score_count) {
    if (grid_hwc.rank() != 3) throw ShapeError("full_attention expects [h,w,c]");
    const std::int64_t h = grid_hwc.dim(0), w = grid_hwc.dim(1), c = grid_hwc.dim(2);
    Tensor seq = reshape(grid_hwc, Shape{1, h * w, c});
    Tensor out = multi_head_attention(seq, p, score_count);
    return reshape(out, Shape{h, w, c});
}

std::int64_t attention_score_count(std::int64_t h, std::int64_t w, AttentionMode mode) {
    if (h < 1 || w < 1) throw ConfigError("attention_score_count: h,w must be >= 1");
    if (mode == AttentionMode::kFull) return (h * w) * (h * w);
    return h * w * w + w * h * h;
}

}  // namespace docsegtr
