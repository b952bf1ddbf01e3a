#include <doctest.h>

#include <cmath>

#include "docsegtr/gradcheck.hpp"
#include "docsegtr/heads.hpp"

using namespace docsegtr;

namespace {

Tensor rand_t(Shape shape, Rng rng, double scale = 1.0) {
    std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
    for (auto& x : v) x = scale * rng.next_normal();
    return Tensor(std::move(shape), std::move(v));
}

}  // namespace

TEST_CASE("class catalog") {
    auto cat = ClassCatalog::document_layout();
    CHECK(cat.num_classes() == 5);
    CHECK(cat.names == std::vector<std::string>{"text", "title", "list", "table", "figure"});
}

TEST_CASE("kernel spec") {
    CHECK(KernelSpec{1, 8}.kernel_params() == 8);
    CHECK(KernelSpec{3, 8}.kernel_params() == 72);
    CHECK_THROWS_AS((KernelSpec{2, 8}.validate()), ConfigError);  // theta must be odd
}

TEST_CASE("category head") {
    Rng rng(1);
    KernelSpec spec{1, 4};
    HeadParams p = HeadParams::init(4, 5, spec, rng);
    GridFeatures x = make_grid(rand_t({4, 4, 4}, rng));
    SUBCASE("zero weights and biases give 0.5 everywhere") {
        HeadParams z = p;
        for (Tensor* t : {&z.cate_w1, &z.cate_b1, &z.cate_w2, &z.cate_b2})
            for (auto& v : t->values()) v = 0.0;
        Tensor y = category_head_forward(x, z, 5);
        CHECK(y.shape() == Shape{4, 4, 5});
        for (auto v : y.values()) CHECK(v == 0.5);
    }
    SUBCASE("final bias -10 with zero weights gives sigmoid(-10)") {
        HeadParams z = p;
        for (Tensor* t : {&z.cate_w1, &z.cate_b1, &z.cate_w2})
            for (auto& v : t->values()) v = 0.0;
        for (auto& v : z.cate_b2.values()) v = -10.0;
        Tensor y = category_head_forward(x, z, 5);
        const double expect = 1.0 / (1.0 + std::exp(10.0));
        for (auto v : y.values()) CHECK(v == doctest::Approx(expect).epsilon(1e-12));
    }
    SUBCASE("outputs stay strictly inside (0,1)") {
        Tensor y = category_head_forward(x, p, 5);
        for (auto v : y.values()) {
            CHECK(v > 0.0);
            CHECK(v < 1.0);
        }
    }
    SUBCASE("gradient check") {
        auto f = [&](const Tensor& t) {
            return sum_all(category_head_forward(make_grid(t), p, 5));
        };
        auto rep = finite_diff_check(f, rand_t({2, 2, 4}, rng), 1e-5, 1e-4);
        CAPTURE(rep.max_rel_err);
        CHECK(rep.pass);
    }
}

TEST_CASE("kernel head") {
    Rng rng(2);
    KernelSpec spec{1, 8};
    HeadParams p = HeadParams::init(4, 5, spec, rng);
    GridFeatures x = make_grid(rand_t({3, 3, 4}, rng));
    SUBCASE("shape follows b = theta^2 * c_mask") {
        Tensor y = kernel_head_forward(x, p, spec);
        CHECK(y.shape() == Shape{3, 3, 8});
    }
    SUBCASE("zero weights give zero kernels") {
        HeadParams z = p;
        for (auto& v : z.kernel_w.values()) v = 0.0;
        for (auto& v : z.kernel_b.values()) v = 0.0;
        Tensor y = kernel_head_forward(x, z, spec);
        for (auto v : y.values()) CHECK(v == 0.0);
    }
    SUBCASE("linearity: no hidden nonlinearity") {
        Tensor y1 = kernel_head_forward(x, p, spec);
        Tensor doubled = x.grid.detach();
        for (auto& v : doubled.values()) v *= 2.0;
        Tensor y2 = kernel_head_forward(make_grid(doubled), p, spec);
        // 2*f(x) - f(2x) == bias for a linear map
        for (std::int64_t cell = 0; cell < 9; ++cell)
            for (std::int64_t k = 0; k < 8; ++k)
                CHECK(2.0 * y1.at(cell * 8 + k) - y2.at(cell * 8 + k) ==
                      doctest::Approx(p.kernel_b.at(k)).epsilon(1e-9));
    }
    SUBCASE("gradient check") {
        auto f = [&](const Tensor& t) {
            return sum_all(sigmoid(kernel_head_forward(make_grid(t), p, spec)));
        };
        auto rep = finite_diff_check(f, rand_t({2, 2, 4}, rng), 1e-5, 1e-4);
        CAPTURE(rep.max_rel_err);
        CHECK(rep.pass);
    }
}
