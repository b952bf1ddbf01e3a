#include <doctest.h>

#include <cmath>

#include "docsegtr/gradcheck.hpp"
#include "docsegtr/rng.hpp"
#include "docsegtr/tensor.hpp"

using namespace docsegtr;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
    std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
    for (auto& x : v) x = scale * rng.next_normal();
    return Tensor(std::move(shape), std::move(v));
}

Tensor seeded_tensor(Shape shape, std::uint64_t seed) {
    Rng rng(seed);
    return random_tensor(std::move(shape), rng);
}

}  // namespace

TEST_CASE("matmul basics") {
    Tensor a(Shape{2, 2}, {1, 2, 3, 4});
    Tensor eye(Shape{2, 2}, {1, 0, 0, 1});
    CHECK(matmul(a, eye).values() == std::vector<double>{1, 2, 3, 4});

    Tensor b(Shape{2, 1}, {5, 6});
    auto y = matmul(a, b);
    CHECK(y.shape() == Shape{2, 1});
    CHECK(y.at(0) == doctest::Approx(17));
    CHECK(y.at(1) == doctest::Approx(39));

    Tensor z(Shape{2, 3}, 0.0);
    auto azero = matmul(a, z);
    for (auto v : azero.values()) CHECK(v == 0.0);

    CHECK_THROWS_AS(matmul(a, Tensor(Shape{3, 2}, 0.0)), ShapeError);
    CHECK_THROWS_WITH(matmul(a, Tensor(Shape{3, 2}, 0.0)),
                      doctest::Contains("[2x2]"));
}

TEST_CASE("matmul associativity on random triples") {
    Rng rng(7);
    for (int trial = 0; trial < 5; ++trial) {
        Tensor a = random_tensor({4, 3}, rng);
        Tensor b = random_tensor({3, 5}, rng);
        Tensor c = random_tensor({5, 2}, rng);
        Tensor left = matmul(matmul(a, b), c);
        Tensor right = matmul(a, matmul(b, c));
        for (std::int64_t i = 0; i < left.numel(); ++i) {
            const double denom = std::max(std::abs(left.at(i)), 1e-12);
            CHECK(std::abs(left.at(i) - right.at(i)) / denom < 1e-9);
        }
    }
}

TEST_CASE("conv2d examples") {
    SUBCASE("1x1 identity kernel") {
        Rng rng(3);
        Tensor x = random_tensor({1, 4, 4}, rng);
        Tensor w(Shape{1, 1, 1, 1}, {1.0});
        Tensor b(Shape{1}, 0.0);
        auto y = conv2d(x, w, b, 1, 0);
        CHECK(y.values() == x.values());
    }
    SUBCASE("all-ones 3x3 with padding counts the window") {
        Tensor x(Shape{1, 3, 3}, 1.0);
        Tensor w(Shape{1, 1, 3, 3}, 1.0);
        Tensor b(Shape{1}, 0.0);
        auto y = conv2d(x, w, b, 1, 1);
        CHECK(y.shape() == Shape{1, 3, 3});
        CHECK(y.at(4) == doctest::Approx(9));  // center
        CHECK(y.at(0) == doctest::Approx(4));  // corner
    }
    SUBCASE("zero kernel gives constant bias") {
        Tensor x(Shape{2, 4, 4}, 3.0);
        Tensor w(Shape{3, 2, 3, 3}, 0.0);
        Tensor b(Shape{3}, {1.0, 2.0, -1.0});
        auto y = conv2d(x, w, b, 1, 1);
        CHECK(y.at(0) == 1.0);
        CHECK(y.at(16) == 2.0);
        CHECK(y.at(32) == -1.0);
    }
    SUBCASE("kernel larger than padded input") {
        Tensor x(Shape{1, 2, 2}, 1.0);
        Tensor w(Shape{1, 1, 5, 5}, 1.0);
        Tensor b(Shape{1}, 0.0);
        CHECK_THROWS_AS(conv2d(x, w, b, 1, 0), ShapeError);
    }
}

TEST_CASE("layer_norm examples") {
    Tensor gamma(Shape{3}, 1.0);
    Tensor beta(Shape{3}, 0.0);
    SUBCASE("constant vector normalizes to zero") {
        Tensor x(Shape{3}, 5.0);
        auto y = layer_norm(x, gamma, beta, 1e-12);
        for (auto v : y.values()) CHECK(std::abs(v) < 1e-6);
    }
    SUBCASE("unit-variance pair") {
        Tensor x(Shape{2}, {1.0, -1.0});
        auto y = layer_norm(x, Tensor(Shape{2}, 1.0), Tensor(Shape{2}, 0.0), 1e-12);
        CHECK(y.at(0) == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(y.at(1) == doctest::Approx(-1.0).epsilon(1e-9));
    }
    SUBCASE("zero input passes beta through") {
        Tensor x(Shape{2, 3}, 0.0);
        Tensor b(Shape{3}, {1.0, 2.0, 3.0});
        auto y = layer_norm(x, gamma, b, 1e-12);
        CHECK(y.at(0) == 1.0);
        CHECK(y.at(4) == 2.0);
        CHECK(y.at(5) == 3.0);
    }
    SUBCASE("channel mismatch") {
        Tensor x(Shape{4}, 0.0);
        CHECK_THROWS_AS(layer_norm(x, gamma, beta, 1e-12), ShapeError);
    }
    SUBCASE("pre-affine statistics on random rows") {
        Rng rng(11);
        Tensor x = random_tensor({8, 16}, rng, 3.0);
        auto y = layer_norm(x, Tensor(Shape{16}, 1.0), Tensor(Shape{16}, 0.0), 1e-12);
        for (std::int64_t r = 0; r < 8; ++r) {
            double mu = 0.0, var = 0.0;
            for (std::int64_t j = 0; j < 16; ++j) mu += y.at(r * 16 + j);
            mu /= 16;
            for (std::int64_t j = 0; j < 16; ++j) {
                const double d = y.at(r * 16 + j) - mu;
                var += d * d;
            }
            var /= 16;
            CHECK(std::abs(mu) < 1e-9);
            CHECK(std::abs(var - 1.0) < 1e-6);
        }
    }
}

TEST_CASE("softmax examples and invariants") {
    SUBCASE("equal logits are uniform") {
        Tensor x(Shape{4}, 2.5);
        auto y = softmax_lastdim(x);
        for (auto v : y.values()) CHECK(v == doctest::Approx(0.25).epsilon(1e-12));
    }
    SUBCASE("closed-form two-way") {
        Tensor x(Shape{2}, {0.0, std::log(3.0)});
        auto y = softmax_lastdim(x);
        CHECK(y.at(0) == doctest::Approx(0.25).epsilon(1e-12));
        CHECK(y.at(1) == doctest::Approx(0.75).epsilon(1e-12));
    }
    SUBCASE("shift invariance and row sums") {
        Rng rng(5);
        Tensor x = random_tensor({6, 9}, rng, 4.0);
        auto y = softmax_lastdim(x);
        Tensor shifted = x.detach();
        for (auto& v : shifted.values()) v += 13.75;
        auto y2 = softmax_lastdim(shifted);
        for (std::int64_t i = 0; i < y.numel(); ++i) {
            CHECK(y.at(i) == doctest::Approx(y2.at(i)).epsilon(1e-12));
        }
        for (std::int64_t r = 0; r < 6; ++r) {
            double s = 0.0;
            for (std::int64_t j = 0; j < 9; ++j) s += y.at(r * 9 + j);
            CHECK(std::abs(s - 1.0) < 1e-12);
        }
    }
    SUBCASE("NaN input raises") {
        Tensor x(Shape{2}, {0.0, std::nan("")});
        CHECK_THROWS_AS(softmax_lastdim(x), NumericError);
    }
}

TEST_CASE("backward basics") {
    SUBCASE("y = x^2 at x=3") {
        Tensor x = Tensor::scalar(3.0, true);
        Tensor y = mul(x, x);
        backward(y);
        CHECK(x.grad()[0] == doctest::Approx(6.0));
    }
    SUBCASE("y = sigmoid(x) at 0") {
        Tensor x = Tensor::scalar(0.0, true);
        Tensor y = sigmoid(x);
        backward(y);
        CHECK(x.grad()[0] == doctest::Approx(0.25));
    }
    SUBCASE("grad shapes match leaves") {
        Tensor x(Shape{3, 4}, 0.5, true);
        Tensor w(Shape{4, 2}, 0.25, true);
        Tensor loss = sum_all(matmul(x, w));
        backward(loss);
        CHECK(x.grad().size() == static_cast<std::size_t>(x.numel()));
        CHECK(w.grad().size() == static_cast<std::size_t>(w.numel()));
    }
    SUBCASE("non-scalar loss rejected") {
        Tensor x(Shape{2}, 1.0, true);
        Tensor y = mul(x, x);
        CHECK_THROWS_AS(backward(y), ContractError);
        Tape::active().clear();
    }
    SUBCASE("detached loss rejected") {
        Tensor c = Tensor::scalar(1.0);
        CHECK_THROWS_AS(backward(c), ContractError);
    }
    SUBCASE("tape consumed by one backward") {
        Tensor x = Tensor::scalar(2.0, true);
        Tensor y = mul(x, x);
        backward(y);
        CHECK_THROWS_AS(backward(y), ContractError);
    }
}

TEST_CASE("finite_diff_check fixtures") {
    Rng rng(17);
    SUBCASE("sum(matmul(x, W)) passes tightly") {
        Tensor w = random_tensor({3, 4}, rng);
        auto f = [&](const Tensor& x) { return sum_all(matmul(x, w)); };
        Tensor x = random_tensor({5, 3}, rng);
        auto rep = finite_diff_check(f, x, 1e-5, 1e-6);
        CHECK(rep.pass);
    }
    SUBCASE("constant function passes with zero gradients") {
        auto f = [](const Tensor&) { return Tensor::scalar(3.0); };
        Tensor x = random_tensor({4}, rng);
        auto rep = finite_diff_check(f, x, 1e-5, 1e-6);
        CHECK(rep.pass);
        CHECK(rep.max_rel_err == 0.0);
    }
    SUBCASE("relu kink coordinate is skipped") {
        Tensor x(Shape{3}, {1.0, 0.0, -2.0});
        auto f = [](const Tensor& t) { return sum_all(relu(t)); };
        auto skip = [](const Tensor& t, std::int64_t i) { return std::abs(t.at(i)) <= 1e-7; };
        auto rep = finite_diff_check(f, x, 1e-5, 1e-4, skip);
        CHECK(rep.pass);
        CHECK(rep.skipped == 1);
        CHECK(rep.checked == 2);
    }
}

TEST_CASE("gradient checks for primitives") {
    Rng rng(23);
    const double tol = 1e-4;
    auto check = [&](const std::function<Tensor(const Tensor&)>& f, Tensor x) {
        auto rep = finite_diff_check(f, x, 1e-5, tol);
        CAPTURE(rep.max_rel_err);
        CHECK(rep.pass);
    };

    // weights used as second operands
    Tensor w34 = random_tensor({3, 4}, rng);
    Tensor cw = random_tensor({2, 3, 3, 3}, rng);
    Tensor cb = random_tensor({2}, rng);
    Tensor gamma = random_tensor({5}, rng);
    Tensor beta = random_tensor({5}, rng);
    Tensor lin_w = random_tensor({4, 3}, rng);
    Tensor lin_b = random_tensor({3}, rng);
    Tensor mix = random_tensor({4, 5}, rng);  // weighting to avoid sum cancellation

    auto weighted_sum = [&](const Tensor& t, const Tensor& weights) {
        return sum_all(mul(t, weights));
    };

    check([&](const Tensor& x) { return sum_all(matmul(x, w34)); }, random_tensor({5, 3}, rng));
    check([&](const Tensor& x) { return sum_all(matmul(w34, x)); }, random_tensor({4, 2}, rng));
    check([&](const Tensor& x) { return sum_all(conv2d(x, cw, cb, 1, 1)); },
          random_tensor({3, 5, 5}, rng));
    check([&](const Tensor& x) { return sum_all(conv2d(seeded_tensor({3, 5, 5}, 1).detach(), x, cb, 2, 1)); },
          random_tensor({2, 3, 3, 3}, rng));
    check([&](const Tensor& x) { return weighted_sum(layer_norm(x, gamma, beta, 1e-6), mix); },
          random_tensor({4, 5}, rng));
    check([&](const Tensor& x) { return weighted_sum(softmax_lastdim(x), mix); },
          random_tensor({4, 5}, rng));
    check([&](const Tensor& x) { return sum_all(sigmoid(x)); }, random_tensor({7}, rng));
    check([&](const Tensor& x) { return sum_all(gelu(x)); }, random_tensor({7}, rng));
    check([&](const Tensor& x) { return sum_all(mul(x, x)); }, random_tensor({6}, rng));
    check([&](const Tensor& x) { return sum_all(add(x, lin_b)); }, random_tensor({2, 3}, rng));
    check([&](const Tensor& x) { return mean_all(mul(x, mix)); }, random_tensor({4, 5}, rng));
    check([&](const Tensor& x) { return sum_all(linear(x, lin_w, lin_b)); },
          random_tensor({6, 4}, rng));
    check([&](const Tensor& x) { return sum_all(adaptive_avg_pool2d(x, 2, 3)); },
          random_tensor({2, 5, 7}, rng));
    check([&](const Tensor& x) { return sum_all(mul(upsample_nearest2d(x, 6, 8),
                                                    seeded_tensor({2, 6, 8}, 2).detach())); },
          random_tensor({2, 3, 4}, rng));
    check([&](const Tensor& x) { return sum_all(mul(permute(x, {1, 0, 2}),
                                                    seeded_tensor({3, 2, 4}, 4).detach())); },
          random_tensor({2, 3, 4}, rng));
    check([&](const Tensor& x) { return sum_all(mul(reshape(x, {6, 2}),
                                                    seeded_tensor({6, 2}, 5).detach())); },
          random_tensor({3, 4}, rng));
    check([&](const Tensor& x) {
              Tensor other = seeded_tensor({2, 3, 3}, 6).detach();
              return sum_all(mul(concat({x, other}, 0), seeded_tensor({4, 3, 3}, 7).detach()));
          },
          random_tensor({2, 3, 3}, rng));
    check([&](const Tensor& x) { return sum_all(bmm(x, seeded_tensor({2, 4, 3}, 8).detach())); },
          random_tensor({2, 3, 4}, rng));
    // relu away from the kink
    check([&](const Tensor& x) { return sum_all(relu(x)); },
          Tensor(Shape{4}, {1.5, -2.0, 0.7, -0.3}));
}

TEST_CASE("broadcast add/mul semantics") {
    Tensor a(Shape{2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor b(Shape{3}, {10, 20, 30});
    auto y = add(a, b);
    CHECK(y.values() == std::vector<double>{11, 22, 33, 14, 25, 36});
    auto z = mul(a, b);
    CHECK(z.values() == std::vector<double>{10, 40, 90, 40, 100, 180});
    CHECK_THROWS_AS(add(a, Tensor(Shape{2}, 0.0)), ShapeError);
}

TEST_CASE("tensor invariants") {
    CHECK_THROWS_AS(Tensor(Shape{2, 0}, 0.0), ShapeError);
    CHECK_THROWS_AS(Tensor(Shape{3}, std::vector<double>{1.0}), ShapeError);
    Tensor t(Shape{2, 2}, 1.0);
    CHECK(t.numel() == 4);
    CHECK_THROWS_AS(t.item(), ContractError);
}
