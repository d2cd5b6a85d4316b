#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "macmd/conv.hpp"
#include "macmd/gradcheck.hpp"
#include "macmd/rng.hpp"

using namespace macmd;

namespace {

Tensor<double> uniform(const Shape& shape, CounterRng& rng, double lo = -1.0, double hi = 1.0) {
    std::vector<double> data(static_cast<std::size_t>(shape.count()));
    for (auto& v : data) v = lo + (hi - lo) * rng.next_double();
    return Tensor<double>::from_data(shape, std::move(data));
}

/// Direct quadruple-loop convolution, the shape of the textbook definition.
std::vector<double> conv_oracle(const Tensor<double>& x, const Tensor<double>& w,
                                const std::vector<double>& bias, const Conv2dOpts& o) {
    const Index N = x.shape()[0], Cin = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
    const Index Cout = w.shape()[0], Cg = w.shape()[1], kh = w.shape()[2], kw = w.shape()[3];
    const Index OH = conv_out_extent(H, kh, o.stride.h, o.padding.h, o.dilation.h);
    const Index OW = conv_out_extent(W, kw, o.stride.w, o.padding.w, o.dilation.w);
    const Index G = o.groups, Cog = Cout / G;
    std::vector<double> out(static_cast<std::size_t>(N * Cout * OH * OW), 0.0);
    for (Index n = 0; n < N; ++n)
        for (Index co = 0; co < Cout; ++co) {
            const Index g = co / Cog;
            for (Index oh = 0; oh < OH; ++oh)
                for (Index ow = 0; ow < OW; ++ow) {
                    double acc = bias.empty() ? 0.0 : bias[static_cast<std::size_t>(co)];
                    for (Index c = 0; c < Cg; ++c)
                        for (Index ki = 0; ki < kh; ++ki)
                            for (Index kj = 0; kj < kw; ++kj) {
                                const Index ih = oh * o.stride.h - o.padding.h + ki * o.dilation.h;
                                const Index iw = ow * o.stride.w - o.padding.w + kj * o.dilation.w;
                                if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
                                acc += x.at(n, g * Cg + c, ih, iw) * w.at(co, c, ki, kj);
                            }
                    out[static_cast<std::size_t>(((n * Cout + co) * OH + oh) * OW + ow)] = acc;
                }
        }
    return out;
}

}  // namespace

TEST_CASE("identity 1x1 convolution passes the input through bitwise") {
    CounterRng rng(11);
    auto x = uniform(Shape{2, 3, 5, 4}, rng);
    // Weight [3,3,1,1] = I: output channel i reads input channel i.
    std::vector<double> wi(9, 0.0);
    wi[0] = wi[4] = wi[8] = 1.0;
    auto w = Tensor<double>::from_data(Shape{3, 3, 1, 1}, std::move(wi));
    auto y = conv2d(x, w, Tensor<double>{});
    CHECK(y.values() == x.values());
}

TEST_CASE("unit impulse under a dilated all-ones kernel lights the tap offsets") {
    // Impulse at (4,4) of a 9x9 field; 3x3 ones at dilation 2, padding 2:
    // ones exactly at offsets {-2,0,2} x {-2,0,2}, zero elsewhere.
    std::vector<double> img(81, 0.0);
    img[4 * 9 + 4] = 1.0;
    auto x = Tensor<double>::from_data(Shape{1, 1, 9, 9}, std::move(img));
    auto w = Tensor<double>::full(Shape{1, 1, 3, 3}, 1.0);
    auto y = conv2d(x, w, Tensor<double>{}, Conv2dOpts{.padding = 2, .dilation = 2});
    CHECK(y.shape() == Shape{1, 1, 9, 9});
    for (Index h = 0; h < 9; ++h)
        for (Index v = 0; v < 9; ++v) {
            const bool hit = (h == 2 || h == 4 || h == 6) && (v == 2 || v == 4 || v == 6);
            CHECK(y.at(0, 0, h, v) == (hit ? 1.0 : 0.0));
        }
}

TEST_CASE("3x3 same-padded convolution keeps the spatial extents") {
    CounterRng rng(12);
    auto x = uniform(Shape{2, 3, 8, 8}, rng);
    auto w = uniform(Shape{5, 3, 3, 3}, rng);
    auto y = conv2d(x, w, Tensor<double>{}, Conv2dOpts{.padding = 1});
    CHECK(y.shape() == Shape{2, 5, 8, 8});
}

TEST_CASE("gemm path matches the direct-convolution oracle") {
    CounterRng rng(13);
    struct Case {
        Shape xs, ws;
        Conv2dOpts o;
    };
    const Case cases[] = {
        {Shape{2, 4, 9, 7}, Shape{6, 4, 3, 3}, Conv2dOpts{.stride = {2, 1}, .padding = {1, 2}}},
        {Shape{1, 6, 8, 8}, Shape{4, 3, 3, 3}, Conv2dOpts{.padding = 2, .dilation = 2, .groups = 2}},
        {Shape{2, 5, 6, 6}, Shape{5, 1, 3, 3}, Conv2dOpts{.padding = 1, .groups = 5}},  // depthwise
        {Shape{1, 3, 7, 9}, Shape{2, 3, 1, 1}, Conv2dOpts{}},
        {Shape{1, 2, 10, 10}, Shape{2, 2, 5, 5}, Conv2dOpts{.stride = 2, .padding = {4, 0},
                                                            .dilation = {1, 2}}},
    };
    for (const auto& c : cases) {
        auto x = uniform(c.xs, rng);
        auto w = uniform(c.ws, rng);
        std::vector<double> bias(static_cast<std::size_t>(c.ws[0]));
        for (auto& v : bias) v = rng.next_double() - 0.5;
        auto b = Tensor<double>::from_data(Shape{c.ws[0]}, std::vector<double>(bias));
        auto y = conv2d(x, w, b, c.o);
        const auto want = conv_oracle(x, w, bias, c.o);
        REQUIRE(y.size() == Index(want.size()));
        for (std::size_t i = 0; i < want.size(); ++i)
            CHECK(y.values()[i] == doctest::Approx(want[i]).epsilon(1e-12));
    }
}

TEST_CASE("convolution is linear in its input") {
    CounterRng rng(14);
    auto a = uniform(Shape{1, 3, 6, 6}, rng);
    auto b = uniform(Shape{1, 3, 6, 6}, rng);
    auto w = uniform(Shape{4, 3, 3, 3}, rng);
    const Conv2dOpts o{.padding = 1};
    auto lhs = conv2d(add(a, b), w, Tensor<double>{}, o);
    auto rhs = add(conv2d(a, w, Tensor<double>{}, o), conv2d(b, w, Tensor<double>{}, o));
    for (Index i = 0; i < lhs.size(); ++i)
        CHECK(lhs.values()[size_t(i)] ==
              doctest::Approx(rhs.values()[size_t(i)]).epsilon(1e-6));
}

TEST_CASE("depthwise convolution equals per-channel single convolutions") {
    CounterRng rng(15);
    const Index C = 4;
    auto x = uniform(Shape{1, C, 6, 6}, rng);
    auto w = uniform(Shape{C, 1, 3, 3}, rng);
    auto y = conv2d(x, w, Tensor<double>{}, Conv2dOpts{.padding = 1, .groups = C});
    for (Index c = 0; c < C; ++c) {
        std::vector<double> xc(36), wc(9);
        for (Index i = 0; i < 36; ++i) xc[size_t(i)] = x.at(0, c, i / 6, i % 6);
        for (Index i = 0; i < 9; ++i) wc[size_t(i)] = w.at(c, 0, i / 3, i % 3);
        auto yc = conv2d(Tensor<double>::from_data(Shape{1, 1, 6, 6}, std::move(xc)),
                         Tensor<double>::from_data(Shape{1, 1, 3, 3}, std::move(wc)),
                         Tensor<double>{}, Conv2dOpts{.padding = 1});
        for (Index i = 0; i < 36; ++i)
            CHECK(y.at(0, c, i / 6, i % 6) == doctest::Approx(yc.at(0, 0, i / 6, i % 6)));
    }
}

TEST_CASE("conv2d rejects inconsistent geometry") {
    auto x = Tensor<double>::zeros(Shape{1, 4, 4, 4});
    auto w = Tensor<double>::zeros(Shape{2, 4, 3, 3});
    CHECK_THROWS_AS(conv2d(x, w, Tensor<double>{}, Conv2dOpts{.groups = 3}),
                    std::invalid_argument);
    CHECK_THROWS_AS(conv2d(x, Tensor<double>::zeros(Shape{2, 3, 3, 3}), Tensor<double>{}),
                    std::invalid_argument);
    CHECK_THROWS_AS(conv2d(x, w, Tensor<double>::zeros(Shape{3})), std::invalid_argument);
    CHECK_THROWS_AS(conv2d(x, Tensor<double>::zeros(Shape{2, 4, 7, 7}), Tensor<double>{}),
                    std::invalid_argument);  // kernel larger than input
    CHECK_THROWS_AS(conv2d(Tensor<double>::zeros(Shape{4, 4}), w, Tensor<double>{}),
                    std::invalid_argument);
}

TEST_CASE("conv2d weight and bias gradients pass a finite-difference check") {
    CounterRng rng(16);
    auto x = uniform(Shape{2, 3, 5, 5}, rng);
    auto w0 = uniform(Shape{4, 3, 3, 3}, rng);
    auto b0 = uniform(Shape{4}, rng);
    std::vector<double> coeffs(2 * 4 * 5 * 5);
    for (auto& v : coeffs) v = rng.next_double() + 0.5;

    auto wp = w0;
    std::function<Tensor<double>(const Tensor<double>&)> fw =
        [&](const Tensor<double>& w) {
            return weighted_sum(conv2d(x, w, b0, Conv2dOpts{.padding = 1}), coeffs);
        };
    CHECK(grad_check<double>(fw, wp, 1e-5) < 1e-6);

    auto bp = b0;
    std::function<Tensor<double>(const Tensor<double>&)> fb =
        [&](const Tensor<double>& b) {
            return weighted_sum(conv2d(x, w0, b, Conv2dOpts{.padding = 1}), coeffs);
        };
    CHECK(grad_check<double>(fb, bp, 1e-5) < 1e-6);
}

TEST_CASE("linear identity and zero-weight bias broadcast") {
    auto x = Tensor<double>::from_data(Shape{2, 3}, {1, 2, 3, 4, 5, 6});
    std::vector<double> wi(9, 0.0);
    wi[0] = wi[4] = wi[8] = 1.0;
    auto eye = Tensor<double>::from_data(Shape{3, 3}, std::move(wi));
    CHECK(linear(x, eye, Tensor<double>{}).values() == x.values());

    auto w0 = Tensor<double>::zeros(Shape{2, 3});
    auto b = Tensor<double>::from_data(Shape{2}, {10, 20});
    auto y = linear(x, w0, b);
    CHECK(y.at(0, 0) == 10.0);
    CHECK(y.at(1, 1) == 20.0);
}

TEST_CASE("linear matches a hand-computed 2x2 case") {
    auto x = Tensor<double>::from_data(Shape{2, 2}, {1, 2, 3, 4});
    auto w = Tensor<double>::from_data(Shape{2, 2}, {1, -1, 0.5, 2});  // rows are output units
    auto b = Tensor<double>::from_data(Shape{2}, {0.25, -0.25});
    auto y = linear(x, w, b);
    CHECK(y.at(0, 0) == doctest::Approx(1 * 1 + 2 * -1 + 0.25));
    CHECK(y.at(0, 1) == doctest::Approx(1 * 0.5 + 2 * 2 - 0.25));
    CHECK(y.at(1, 0) == doctest::Approx(3 * 1 + 4 * -1 + 0.25));
    CHECK(y.at(1, 1) == doctest::Approx(3 * 0.5 + 4 * 2 - 0.25));
    CHECK_THROWS_AS(linear(x, Tensor<double>::zeros(Shape{2, 3}), Tensor<double>{}),
                    std::invalid_argument);
}
