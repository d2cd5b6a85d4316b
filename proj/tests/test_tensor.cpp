#include <cmath>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "macmd/gradcheck.hpp"
#include "macmd/ops.hpp"
#include "macmd/rng.hpp"
#include "macmd/tensor.hpp"

using namespace macmd;

namespace {

Tensor<double> ramp(const Shape& shape, bool track = false) {
    std::vector<double> data(static_cast<std::size_t>(shape.count()));
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = 0.5 * double(i) - 1.0;
    return Tensor<double>::from_data(shape, std::move(data), track);
}

}  // namespace

TEST_CASE("shape validates rank and extents") {
    CHECK_THROWS_AS(Shape({}), std::invalid_argument);
    CHECK_THROWS_AS(Shape({2, 0}), std::invalid_argument);
    CHECK_THROWS_AS(Shape({2, -1}), std::invalid_argument);
    Shape s{2, 3, 4, 5};
    CHECK(s.rank() == 4);
    CHECK(s.count() == 120);
    CHECK(s.str() == "(2,3,4,5)");
    CHECK_THROWS_AS(s[4], std::invalid_argument);
    CHECK(Shape({2, 3}) == Shape({2, 3}));
    CHECK(Shape({2, 3}) != Shape({3, 2}));
}

TEST_CASE("tensor construction and element access") {
    CHECK_THROWS_AS(Tensor<double>::from_data(Shape{3}, {1.0, 2.0}), std::invalid_argument);
    auto t = Tensor<double>::from_data(Shape{2, 3}, {1, 2, 3, 4, 5, 6});
    CHECK(t.at(1, 2) == 6.0);
    CHECK(t.size() == 6);
    CHECK_THROWS_AS(t.at(0, 0, 0, 0), std::invalid_argument);  // rank-4 accessor on rank-2
    CHECK_THROWS_AS(t.item(), std::invalid_argument);
    CHECK(Tensor<double>::scalar(7.0).item() == 7.0);
    CHECK(Tensor<double>::full(Shape{4}, 2.5).values() == std::vector<double>(4, 2.5));
    Tensor<double> undef;
    CHECK(!undef.defined());
}

TEST_CASE("add and mul broadcast right-aligned") {
    // Row-wise: [2,3] + [3].
    auto a = Tensor<double>::from_data(Shape{2, 3}, {1, 2, 3, 4, 5, 6});
    auto r = Tensor<double>::from_data(Shape{3}, {10, 20, 30});
    auto s = add(a, r);
    CHECK(s.at(0, 0) == 11.0);
    CHECK(s.at(1, 2) == 36.0);

    // Channel-scalar gate: [1,2,2,2] * [1,2,1,1].
    auto x = Tensor<double>::from_data(Shape{1, 2, 2, 2}, {1, 2, 3, 4, 5, 6, 7, 8});
    auto g = Tensor<double>::from_data(Shape{1, 2, 1, 1}, {2, 10});
    auto y = mul(x, g);
    CHECK(y.at(0, 0, 1, 1) == 8.0);
    CHECK(y.at(0, 1, 0, 0) == 50.0);

    // Shared spatial gate: [1,2,2,2] * [1,1,2,2].
    auto m = Tensor<double>::from_data(Shape{1, 1, 2, 2}, {1, 0, 0, 1});
    auto z = mul(x, m);
    CHECK(z.at(0, 0, 0, 1) == 0.0);
    CHECK(z.at(0, 1, 1, 1) == 8.0);

    CHECK_THROWS_AS(add(Tensor<double>::zeros(Shape{2, 3}), Tensor<double>::zeros(Shape{2, 2})),
                    std::invalid_argument);
}

TEST_CASE("broadcast backward accumulates over expanded axes") {
    auto x = Tensor<double>::from_data(Shape{1, 2, 2, 2}, {1, 2, 3, 4, 5, 6, 7, 8}, true);
    auto g = Tensor<double>::from_data(Shape{1, 2, 1, 1}, {2, 10}, true);
    backward(sum(mul(x, g)));
    // d/dg_c = sum of x over that channel's plane.
    CHECK(g.grad()[0] == doctest::Approx(1 + 2 + 3 + 4));
    CHECK(g.grad()[1] == doctest::Approx(5 + 6 + 7 + 8));
    // d/dx = g broadcast back.
    CHECK(x.grad()[0] == 2.0);
    CHECK(x.grad()[7] == 10.0);
}

TEST_CASE("backward of sum(w*x) yields grad w = x") {
    auto x = Tensor<double>::from_data(Shape{4}, {1, -2, 3, 0.5});
    auto w = Tensor<double>::from_data(Shape{4}, {0.1, 0.2, 0.3, 0.4}, true);
    backward(sum(mul(w, x)));
    for (int i = 0; i < 4; ++i) CHECK(w.grad()[size_t(i)] == doctest::Approx(x.values()[size_t(i)]));
}

TEST_CASE("sigmoid gradient at zero is a quarter of the downstream factor") {
    auto w = Tensor<double>::zeros(Shape{3}, true);
    auto x = Tensor<double>::from_data(Shape{3}, {2, 4, 8});
    backward(sum(mul(sigmoid(w), x)));
    for (int i = 0; i < 3; ++i)
        CHECK(w.grad()[size_t(i)] == doctest::Approx(0.25 * x.values()[size_t(i)]));
}

TEST_CASE("backward rejects non-scalar roots and repeated sweeps") {
    auto x = Tensor<double>::from_data(Shape{2}, {1, 2}, true);
    auto y = mul(x, x);
    CHECK_THROWS_AS(backward(y), std::invalid_argument);
    auto loss = sum(y);
    backward(loss);
    CHECK_THROWS_AS(backward(loss), std::runtime_error);  // no double accumulation
    // The working pattern: zero the leaves and rebuild the graph.
    x.zero_grad();
    backward(sum(mul(x, x)));
    CHECK(x.grad()[0] == doctest::Approx(2.0));
    CHECK(x.grad()[1] == doctest::Approx(4.0));
}

TEST_CASE("backward rejects a loss with no gradient requirement") {
    auto x = Tensor<double>::from_data(Shape{2}, {1, 2});  // untracked
    auto loss = sum(x);
    CHECK_THROWS_AS(backward(loss), std::invalid_argument);
}

TEST_CASE("no-grad guard suppresses graph recording") {
    auto x = Tensor<double>::from_data(Shape{2}, {1, 2}, true);
    {
        NoGradGuard ng;
        CHECK(!grad_enabled());
        auto y = mul(x, x);
        CHECK(!y.requires_grad());
    }
    CHECK(grad_enabled());
    CHECK(mul(x, x).requires_grad());
}

TEST_CASE("affine, sub, weighted_sum, recip behave and differentiate") {
    auto x = Tensor<double>::from_data(Shape{3}, {1, 2, 4}, true);
    auto y = affine(x, 3.0, -1.0);
    CHECK(y.values() == std::vector<double>{2, 5, 11});
    auto d = sub(y, x);
    CHECK(d.values() == std::vector<double>{1, 3, 7});

    auto ws = weighted_sum(x, {1.0, 10.0, 100.0});
    CHECK(ws.item() == doctest::Approx(1 + 20 + 400));
    CHECK_THROWS_AS(weighted_sum(x, {1.0, 2.0}), std::invalid_argument);

    x.zero_grad();
    backward(sum(recip(x)));
    CHECK(x.grad()[2] == doctest::Approx(-1.0 / 16.0));
    CHECK_THROWS_AS(recip(Tensor<double>::zeros(Shape{2})), std::invalid_argument);
}

TEST_CASE("reshape preserves order and routes gradients") {
    auto x = ramp(Shape{2, 6}, true);
    auto y = reshape(x, Shape{3, 4});
    CHECK(y.at(2, 3) == x.at(1, 5));
    CHECK_THROWS_AS(reshape(x, Shape{5}), std::invalid_argument);
    backward(weighted_sum(y, std::vector<double>(12, 2.0)));
    for (double g : x.grad()) CHECK(g == 2.0);
}

TEST_CASE("concat then slice recovers each part exactly") {
    auto a = ramp(Shape{2, 3, 2, 2});
    auto b = affine(ramp(Shape{2, 1, 2, 2}), -1.0, 7.0);
    auto cat = concat_channels<double>({a, b});
    CHECK(cat.shape() == Shape{2, 4, 2, 2});
    auto sa = slice_channels(cat, 0, 3);
    auto sb = slice_channels(cat, 3, 1);
    CHECK(sa.values() == a.values());
    CHECK(sb.values() == b.values());
    CHECK_THROWS_AS(slice_channels(cat, 3, 2), std::invalid_argument);
    CHECK_THROWS_AS(concat_channels<double>({a, ramp(Shape{2, 1, 3, 2})}), std::invalid_argument);
}

TEST_CASE("permute_channels gathers and its inverse restores") {
    auto x = ramp(Shape{1, 4, 2, 2}, true);
    std::vector<Index> perm{2, 0, 3, 1};
    auto y = permute_channels(x, perm);
    for (Index j = 0; j < 4; ++j)
        for (Index i = 0; i < 4; ++i)
            CHECK(y.at(0, j, i / 2, i % 2) == x.at(0, perm[size_t(j)], i / 2, i % 2));
    std::vector<Index> inv(4);
    for (Index j = 0; j < 4; ++j) inv[size_t(perm[size_t(j)])] = j;
    CHECK(permute_channels(y, inv).values() == x.values());
    CHECK_THROWS_AS(permute_channels(x, {0, 1}), std::invalid_argument);

    // Gradient scatters through the gather.
    std::vector<double> coeffs(16);
    for (size_t i = 0; i < 16; ++i) coeffs[i] = double(i + 1);
    backward(weighted_sum(y, coeffs));
    for (Index j = 0; j < 4; ++j)
        for (Index i = 0; i < 4; ++i)
            CHECK(x.grad()[size_t(perm[size_t(j)] * 4 + i)] == coeffs[size_t(j * 4 + i)]);
}

TEST_CASE("unfold and fold are exact inverses") {
    CounterRng rng(31);
    std::vector<double> data(2 * 6 * 3 * 5);
    for (auto& v : data) v = rng.next_double() * 4 - 2;
    auto x = Tensor<double>::from_data(Shape{2, 6, 3, 5}, data, true);
    auto tokens = unfold_tokens(x);
    CHECK(tokens.shape() == Shape{2 * 15, 6});
    // Token row (n,h,w) carries the channel column of that pixel.
    CHECK(tokens.at(1 * 15 + 2 * 5 + 3, 4) == x.at(1, 4, 2, 3));
    auto back = fold_tokens(tokens, 2, 3, 5);
    CHECK(back.values() == x.values());  // bitwise round trip
    CHECK_THROWS_AS(fold_tokens(tokens, 2, 4, 5), std::invalid_argument);

    // Round-trip gradient is the identity too.
    std::vector<double> coeffs(data.size());
    for (size_t i = 0; i < coeffs.size(); ++i) coeffs[i] = std::sin(double(i));
    backward(weighted_sum(back, coeffs));
    for (size_t i = 0; i < coeffs.size(); ++i) CHECK(x.grad()[i] == coeffs[i]);
}

TEST_CASE("grad_check on a quadratic is exact to first order") {
    CounterRng rng(7);
    std::vector<double> data(12);
    for (auto& v : data) v = rng.next_double() * 2 - 1;
    auto x = Tensor<double>::from_data(Shape{3, 4}, data);
    std::function<Tensor<double>(const Tensor<double>&)> f = [](const Tensor<double>& t) {
        return sum(mul(t, t));
    };
    // Central differences are exact for quadratics up to roundoff.
    CHECK(grad_check<double>(f, x, 1e-4) < 1e-10);
}

TEST_CASE("grad_check validates its inputs") {
    auto x = Tensor<double>::from_data(Shape{2}, {1, 2});
    std::function<Tensor<double>(const Tensor<double>&)> vec = [](const Tensor<double>& t) {
        return mul(t, t);
    };
    CHECK_THROWS_AS(grad_check<double>(vec, x, 1e-4), std::invalid_argument);
    std::function<Tensor<double>(const Tensor<double>&)> f = [](const Tensor<double>& t) {
        return sum(t);
    };
    CHECK_THROWS_AS(grad_check<double>(f, x, 0.0), std::invalid_argument);
}
