#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "docsegtr/gradcheck.hpp"
#include "docsegtr/maskgen.hpp"

using namespace docsegtr;

namespace {

Tensor rand_t(Shape shape, Rng rng, double scale = 1.0) {
    std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
    for (auto& x : v) x = scale * rng.next_normal();
    return Tensor(std::move(shape), std::move(v));
}

// Independent brute-force oracle for dynamic_conv: explicit per-cell
// convolution loops with zero padding.
Tensor dynamic_conv_oracle(const Tensor& f, const Tensor& kernels, std::int64_t theta,
                           std::int64_t c_mask) {
    const std::int64_t hm = f.dim(0), wm = f.dim(1);
    const std::int64_t n = kernels.dim(0);
    const std::int64_t pad = (theta - 1) / 2;
    Tensor out(Shape{hm, wm, n, n}, 0.0);
    for (std::int64_t y = 0; y < hm; ++y)
        for (std::int64_t x = 0; x < wm; ++x)
            for (std::int64_t i = 0; i < n; ++i)
                for (std::int64_t j = 0; j < n; ++j) {
                    double acc = 0.0;
                    for (std::int64_t ky = 0; ky < theta; ++ky)
                        for (std::int64_t kx = 0; kx < theta; ++kx)
                            for (std::int64_t c = 0; c < c_mask; ++c) {
                                const std::int64_t sy = y + ky - pad, sx = x + kx - pad;
                                if (sy < 0 || sy >= hm || sx < 0 || sx >= wm) continue;
                                const double fv = f.at((sy * wm + sx) * c_mask + c);
                                const double kv = kernels.at(
                                    ((i * n + j) * theta * theta + ky * theta + kx) * c_mask + c);
                                acc += fv * kv;
                            }
                    out.at(((y * wm + x) * n + i) * n + j) = acc;
                }
    return out;
}

// Sequential (non-vectorized) recomputation of Matrix NMS from its
// definition, used as an exact oracle.
std::vector<double> matrix_nms_oracle(const std::vector<BinaryMask>& masks,
                                      const std::vector<double>& scores, double sigma,
                                      NmsMethod method) {
    const std::size_t m = masks.size();
    auto iou = [&](std::size_t a, std::size_t b) {
        std::int64_t inter = 0, uni = 0;
        for (std::size_t k = 0; k < masks[a].data.size(); ++k) {
            const bool va = masks[a].data[k], vb = masks[b].data[k];
            inter += (va && vb) ? 1 : 0;
            uni += (va || vb) ? 1 : 0;
        }
        return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
    };
    auto decay_f = [&](double x) {
        return method == NmsMethod::kGaussian ? std::exp(-x * x / sigma) : 1.0 - x;
    };
    std::vector<double> out(m);
    for (std::size_t j = 0; j < m; ++j) {
        double decay = 1.0;
        for (std::size_t i = 0; i < j; ++i) {
            double iou_max_i = 0.0;
            for (std::size_t k = 0; k < i; ++k) iou_max_i = std::max(iou_max_i, iou(k, i));
            decay = std::min(decay, decay_f(iou(i, j)) / decay_f(iou_max_i));
        }
        out[j] = scores[j] * decay;
    }
    return out;
}

BinaryMask random_mask(std::int64_t h, std::int64_t w, Rng& rng) {
    BinaryMask m(h, w);
    for (auto& v : m.data) v = rng.next_below(2) ? 1 : 0;
    return m;
}

Instance make_instance(const BinaryMask& m, double score, int cls, std::int64_t row,
                       std::int64_t col) {
    Instance inst;
    inst.class_id = cls;
    inst.score = score;
    inst.cell_row = row;
    inst.cell_col = col;
    std::vector<double> soft(m.data.size());
    for (std::size_t k = 0; k < soft.size(); ++k) soft[k] = m.data[k] ? 0.9 : 0.1;
    inst.soft_mask = Tensor(Shape{m.h, m.w}, std::move(soft));
    return inst;
}

}  // namespace

TEST_CASE("dynamic_conv fixtures") {
    SUBCASE("all-ones features with (1,-1) kernels cancel to zero logits") {
        KernelSpec spec{1, 2};
        MaskFeatureMap f{Tensor(Shape{4, 4, 2}, 1.0)};
        std::vector<double> kv;
        for (int cell = 0; cell < 4; ++cell) { kv.push_back(1.0); kv.push_back(-1.0); }
        Tensor kernels(Shape{2, 2, 2}, std::move(kv));
        Tensor out = dynamic_conv(f, kernels, spec);
        CHECK(out.shape() == Shape{4, 4, 2, 2});
        for (auto v : out.values()) CHECK(v == 0.0);
    }
    SUBCASE("b/theta/c_mask inconsistency raises") {
        KernelSpec spec{1, 2};
        MaskFeatureMap f{Tensor(Shape{4, 4, 2}, 1.0)};
        CHECK_THROWS_AS(dynamic_conv(f, Tensor(Shape{2, 2, 3}, 0.0), spec), ConfigError);
    }
}

TEST_CASE("dynamic_conv equals the brute-force oracle for theta in {1,3}") {
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        const std::int64_t theta = (trial % 2 == 0) ? 1 : 3;
        const std::int64_t c_mask = 1 + static_cast<std::int64_t>(rng.next_below(3));
        const std::int64_t n = 1 + static_cast<std::int64_t>(rng.next_below(3));
        const std::int64_t hm = 2 + static_cast<std::int64_t>(rng.next_below(4));
        const std::int64_t wm = 2 + static_cast<std::int64_t>(rng.next_below(4));
        KernelSpec spec{theta, c_mask};
        MaskFeatureMap f{rand_t({hm, wm, c_mask}, rng)};
        Tensor kernels = rand_t({n, n, spec.kernel_params()}, rng);
        Tensor got = dynamic_conv(f, kernels, spec);
        Tensor want = dynamic_conv_oracle(f.f, kernels, theta, c_mask);
        REQUIRE(got.shape() == want.shape());
        for (std::int64_t i = 0; i < got.numel(); ++i)
            CHECK(std::abs(got.at(i) - want.at(i)) < 1e-12);
    }
}

TEST_CASE("dynamic_conv and select_cell gradient check") {
    Rng rng(8);
    KernelSpec spec{1, 2};
    MaskFeatureMap f{rand_t({3, 3, 2}, rng)};
    Tensor kernels = rand_t({2, 2, 2}, rng);
    SUBCASE("w.r.t. kernels") {
        auto fn = [&](const Tensor& k) {
            return sum_all(sigmoid(dynamic_conv(f, k, spec)));
        };
        auto rep = finite_diff_check(fn, kernels, 1e-5, 1e-4);
        CAPTURE(rep.max_rel_err);
        CHECK(rep.pass);
    }
    SUBCASE("w.r.t. features through select_cell") {
        auto fn = [&](const Tensor& feat) {
            Tensor logits = dynamic_conv(MaskFeatureMap{feat}, kernels, spec);
            return sum_all(sigmoid(select_cell(logits, 1, 0)));
        };
        auto rep = finite_diff_check(fn, f.f, 1e-5, 1e-4);
        CAPTURE(rep.max_rel_err);
        CHECK(rep.pass);
    }
}

TEST_CASE("binarize") {
    Tensor soft(Shape{2, 2}, {0.1, 0.5, 0.7, 0.49});
    BinaryMask m = binarize(soft, 0.5);
    CHECK(m.at(0, 0) == 0);
    CHECK(m.at(0, 1) == 1);  // threshold is inclusive
    CHECK(m.at(1, 0) == 1);
    CHECK(m.at(1, 1) == 0);
}

TEST_CASE("matrix_nms fixtures") {
    BinaryMask a(4, 4);
    for (std::int64_t y = 0; y < 2; ++y)
        for (std::int64_t x = 0; x < 2; ++x) a.at(y, x) = 1;
    SUBCASE("single item keeps its score") {
        InstanceSet s;
        s.items.push_back(make_instance(a, 0.7, 0, 0, 0));
        auto out = matrix_nms(s, 2.0, NmsMethod::kGaussian);
        CHECK(out.items.size() == 1);
        CHECK(out.items[0].score == 0.7);
    }
    SUBCASE("duplicate masks: second decays to 0.8*exp(-1/2)") {
        InstanceSet s;
        s.items.push_back(make_instance(a, 0.9, 0, 0, 0));
        s.items.push_back(make_instance(a, 0.8, 0, 0, 1));
        auto out = matrix_nms(s, 2.0, NmsMethod::kGaussian);
        REQUIRE(out.items.size() == 2);
        CHECK(out.items[0].score == 0.9);
        CHECK(out.items[1].score == doctest::Approx(0.8 * std::exp(-0.5)).epsilon(1e-9));
    }
    SUBCASE("disjoint masks keep their scores") {
        BinaryMask b(4, 4);
        b.at(3, 3) = 1;
        InstanceSet s;
        s.items.push_back(make_instance(a, 0.9, 0, 0, 0));
        s.items.push_back(make_instance(b, 0.8, 1, 1, 1));
        auto out = matrix_nms(s, 2.0, NmsMethod::kGaussian);
        CHECK(out.items[0].score == 0.9);
        CHECK(out.items[1].score == 0.8);
    }
    SUBCASE("sigma <= 0 raises") {
        InstanceSet s;
        s.items.push_back(make_instance(a, 0.9, 0, 0, 0));
        CHECK_THROWS_AS(matrix_nms(s, 0.0, NmsMethod::kGaussian), ConfigError);
    }
}

TEST_CASE("matrix_nms matches the sequential oracle on random sets") {
    Rng rng(9);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t m = 1 + rng.next_below(6);
        InstanceSet s;
        std::vector<BinaryMask> masks;
        std::vector<double> scores;
        for (std::size_t k = 0; k < m; ++k) {
            BinaryMask mask = random_mask(5, 5, rng);
            // strictly decreasing scores keep the score order unambiguous
            const double score = 0.95 - 0.1 * static_cast<double>(k);
            masks.push_back(mask);
            scores.push_back(score);
            s.items.push_back(make_instance(mask, score, static_cast<int>(rng.next_below(3)),
                                            static_cast<std::int64_t>(k), 0));
        }
        const NmsMethod method = trial % 2 ? NmsMethod::kLinear : NmsMethod::kGaussian;
        auto out = matrix_nms(s, 2.0, method);
        auto want = matrix_nms_oracle(masks, scores, 2.0, method);
        std::sort(want.begin(), want.end(), std::greater<>());
        REQUIRE(out.items.size() == m);
        for (std::size_t k = 0; k < m; ++k) {
            CHECK(out.items[k].score == doctest::Approx(want[k]).epsilon(1e-15));
            if (k) CHECK(out.items[k - 1].score >= out.items[k].score);
        }
    }
}

TEST_CASE("predict_instances") {
    KernelSpec spec{1, 2};
    InferenceConfig cfg;
    MaskFeatureMap f{Tensor(Shape{4, 4, 2}, 1.0)};
    SUBCASE("all scores below threshold give an empty set") {
        Tensor cate(Shape{2, 2, 3}, 0.05);
        Tensor kernels(Shape{2, 2, 2}, 1.0);
        auto out = predict_instances(cate, kernels, f, spec, cfg);
        CHECK(out.items.empty());
    }
    SUBCASE("a single confident cell yields one instance with its argmax class") {
        Tensor cate(Shape{2, 2, 3}, 0.0);
        cate.at((1 * 2 + 0) * 3 + 2) = 0.99;
        Tensor kernels(Shape{2, 2, 2}, 1.0);
        auto out = predict_instances(cate, kernels, f, spec, cfg);
        REQUIRE(out.items.size() == 1);
        CHECK(out.items[0].class_id == 2);
        CHECK(out.items[0].score == 0.99);
        CHECK(out.items[0].cell_row == 1);
        CHECK(out.items[0].cell_col == 0);
        // kernel (1,1) on all-ones features -> logits 2 -> sigmoid > mask_thr
        CHECK(binarize(out.items[0].soft_mask, cfg.mask_thr).area() == 16);
    }
    SUBCASE("top_k truncation keeps the highest decayed scores") {
        InferenceConfig small = cfg;
        small.top_k = 2;
        Tensor cate(Shape{2, 2, 3}, 0.0);
        // four confident cells with distinct kernels -> distinct masks
        cate.at(0 * 3 + 0) = 0.9;
        cate.at(1 * 3 + 0) = 0.8;
        cate.at(2 * 3 + 0) = 0.7;
        cate.at(3 * 3 + 0) = 0.6;
        Rng rng(10);
        Tensor kernels = rand_t({2, 2, 2}, rng, 2.0);
        auto out = predict_instances(cate, kernels, f, spec, small);
        CHECK(out.items.size() <= 2);
        for (std::size_t k = 1; k < out.items.size(); ++k)
            CHECK(out.items[k - 1].score >= out.items[k].score);
    }
}
