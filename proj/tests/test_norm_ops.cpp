#include <cmath>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "macmd/norm.hpp"
#include "macmd/ops.hpp"
#include "macmd/rng.hpp"

using namespace macmd;

namespace {

Tensor<double> uniform(const Shape& shape, CounterRng& rng, double lo = -1.0, double hi = 1.0) {
    std::vector<double> data(static_cast<std::size_t>(shape.count()));
    for (auto& v : data) v = lo + (hi - lo) * rng.next_double();
    return Tensor<double>::from_data(shape, std::move(data));
}

}  // namespace

TEST_CASE("batch norm maps a constant field to zero in training mode") {
    NormState<double> st(3);
    auto gain = Tensor<double>::full(Shape{3}, 1.0);
    auto bias = Tensor<double>::zeros(Shape{3});
    auto y = batch_norm(Tensor<double>::full(Shape{2, 3, 4, 4}, 5.0), gain, bias, st);
    for (double v : y.values()) CHECK(v == 0.0);
}

TEST_CASE("batch norm in eval mode is the affine of its frozen statistics") {
    NormState<double> st(1);  // fresh stats: mean 0, var 1
    st.training = false;
    auto gain = Tensor<double>::full(Shape{1}, 2.0);
    auto bias = Tensor<double>::full(Shape{1}, 1.0);
    CounterRng rng(21);
    auto x = uniform(Shape{2, 1, 3, 3}, rng, -3.0, 3.0);
    auto y = batch_norm(x, gain, bias, st);
    const double is = 1.0 / std::sqrt(1.0 + 1e-5);
    for (Index i = 0; i < x.size(); ++i) {
        const double v = x.values()[size_t(i)];
        CHECK(y.values()[size_t(i)] == doctest::Approx(2.0 * v * is + 1.0).epsilon(1e-14));
        CHECK(y.values()[size_t(i)] == doctest::Approx(2.0 * v + 1.0).epsilon(1e-4));
    }
}

TEST_CASE("batch norm training output has zero mean and unit variance per channel") {
    CounterRng rng(22);
    const Index N = 3, C = 4, H = 6, W = 6, M = N * H * W;
    auto x = uniform(Shape{N, C, H, W}, rng, -2.0, 2.0);
    NormState<double> st(C);
    auto gain = Tensor<double>::full(Shape{C}, 1.0);
    auto bias = Tensor<double>::zeros(Shape{C});
    auto y = batch_norm(x, gain, bias, st);
    for (Index c = 0; c < C; ++c) {
        double m = 0, v = 0;
        for (Index n = 0; n < N; ++n)
            for (Index i = 0; i < H * W; ++i) m += y.at(n, c, i / W, i % W);
        m /= double(M);
        for (Index n = 0; n < N; ++n)
            for (Index i = 0; i < H * W; ++i) {
                const double d = y.at(n, c, i / W, i % W) - m;
                v += d * d;
            }
        v /= double(M);
        CHECK(std::abs(m) < 1e-6);
        CHECK(std::abs(v - 1.0) < 1e-5);  // eps shaves var/(var+eps) off unity
    }
}

TEST_CASE("batch norm folds batch statistics into the running buffers") {
    CounterRng rng(23);
    const Index N = 2, C = 2, H = 4, W = 4, M = N * H * W;
    auto x = uniform(Shape{N, C, H, W}, rng);
    NormState<double> st(C);
    auto gain = Tensor<double>::full(Shape{C}, 1.0);
    auto bias = Tensor<double>::zeros(Shape{C});
    batch_norm(x, gain, bias, st);
    for (Index c = 0; c < C; ++c) {
        double m = 0, v = 0;
        for (Index n = 0; n < N; ++n)
            for (Index i = 0; i < H * W; ++i) m += x.at(n, c, i / W, i % W);
        m /= double(M);
        for (Index n = 0; n < N; ++n)
            for (Index i = 0; i < H * W; ++i) {
                const double d = x.at(n, c, i / W, i % W) - m;
                v += d * d;
            }
        v /= double(M);  // population variance
        CHECK(st.running_mean[size_t(c)] == doctest::Approx(0.9 * 0.0 + 0.1 * m).epsilon(1e-12));
        CHECK(st.running_var[size_t(c)] == doctest::Approx(0.9 * 1.0 + 0.1 * v).epsilon(1e-12));
    }
    // Eval mode must not touch the buffers.
    st.training = false;
    const auto rm = st.running_mean, rv = st.running_var;
    batch_norm(x, gain, bias, st);
    CHECK(st.running_mean == rm);
    CHECK(st.running_var == rv);
}

TEST_CASE("batch norm rejects mismatched extents") {
    NormState<double> st(3);
    auto g3 = Tensor<double>::full(Shape{3}, 1.0);
    auto b3 = Tensor<double>::zeros(Shape{3});
    CHECK_THROWS_AS(batch_norm(Tensor<double>::zeros(Shape{2, 4, 2, 2}), g3, b3, st),
                    std::invalid_argument);  // gain sized for 3 channels
    CHECK_THROWS_AS(batch_norm(Tensor<double>::zeros(Shape{3, 3}), g3, b3, st),
                    std::invalid_argument);
    NormState<double> st2(2);
    CHECK_THROWS_AS(batch_norm(Tensor<double>::zeros(Shape{2, 3, 2, 2}), g3, b3, st2),
                    std::invalid_argument);  // state sized for 2
}

TEST_CASE("layer norm on constant and antisymmetric rows") {
    auto gain = Tensor<double>::full(Shape{2}, 1.0);
    auto bias = Tensor<double>::zeros(Shape{2});
    auto c = layer_norm(Tensor<double>::full(Shape{3, 2}, 4.0), gain, bias);
    for (double v : c.values()) CHECK(v == 0.0);

    auto pm = layer_norm(Tensor<double>::from_data(Shape{1, 2}, {1.0, -1.0}), gain, bias);
    CHECK(pm.at(0, 0) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(pm.at(0, 1) == doctest::Approx(-1.0).epsilon(1e-6));
}

TEST_CASE("layer norm rows have zero mean and unit variance") {
    CounterRng rng(24);
    const Index T = 5, D = 16;
    auto x = uniform(Shape{T, D}, rng, -3.0, 3.0);
    auto gain = Tensor<double>::full(Shape{D}, 1.0);
    auto bias = Tensor<double>::zeros(Shape{D});
    auto y = layer_norm(x, gain, bias);
    for (Index t = 0; t < T; ++t) {
        double m = 0, v = 0;
        for (Index d = 0; d < D; ++d) m += y.at(t, d);
        m /= double(D);
        for (Index d = 0; d < D; ++d) v += (y.at(t, d) - m) * (y.at(t, d) - m);
        v /= double(D);
        CHECK(std::abs(m) < 1e-12);
        CHECK(std::abs(v - 1.0) < 1e-5);
    }
    CHECK_THROWS_AS(layer_norm(x, Tensor<double>::full(Shape{D + 1}, 1.0), bias),
                    std::invalid_argument);
}

TEST_CASE("softmax rows: uniformity, shift invariance, hand case, normalization") {
    auto u = softmax_rows(Tensor<double>::full(Shape{2, 5}, 3.0));
    for (double v : u.values()) CHECK(v == doctest::Approx(0.2).epsilon(1e-12));

    CounterRng rng(25);
    auto x = uniform(Shape{4, 6}, rng, -2.0, 2.0);
    auto shifted = affine(x, 1.0, 17.5);
    auto a = softmax_rows(x);
    auto b = softmax_rows(shifted);
    for (Index i = 0; i < a.size(); ++i)
        CHECK(std::abs(a.values()[size_t(i)] - b.values()[size_t(i)]) < 1e-12);

    auto h = softmax_rows(Tensor<double>::from_data(Shape{1, 2}, {0.0, std::log(3.0)}));
    CHECK(h.at(0, 0) == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(h.at(0, 1) == doctest::Approx(0.75).epsilon(1e-12));

    for (Index t = 0; t < 4; ++t) {
        double s = 0;
        for (Index k = 0; k < 6; ++k) s += a.at(t, k);
        CHECK(std::abs(s - 1.0) < 1e-9);
    }
}

TEST_CASE("softmax over channels normalizes every pixel") {
    CounterRng rng(26);
    auto x = uniform(Shape{2, 5, 3, 4}, rng, -4.0, 4.0);
    auto p = softmax_channels(x);
    for (Index n = 0; n < 2; ++n)
        for (Index h = 0; h < 3; ++h)
            for (Index w = 0; w < 4; ++w) {
                double s = 0;
                for (Index c = 0; c < 5; ++c) s += p.at(n, c, h, w);
                CHECK(std::abs(s - 1.0) < 1e-9);
            }
    CHECK_THROWS_AS(softmax_channels(Tensor<double>::zeros(Shape{2, 5})), std::invalid_argument);
}

TEST_CASE("activation fixed points") {
    auto s = sigmoid(Tensor<double>::zeros(Shape{3}));
    for (double v : s.values()) CHECK(v == 0.5);

    auto q = squared_relu(Tensor<double>::from_data(Shape{2}, {-2.0, 3.0}));
    CHECK(q.values()[0] == 0.0);
    CHECK(q.values()[1] == 9.0);

    auto nonneg = Tensor<double>::from_data(Shape{3}, {0.0, 1.5, 7.0});
    CHECK(relu(nonneg).values() == nonneg.values());
    CHECK(relu(relu(Tensor<double>::from_data(Shape{2}, {-1.0, 2.0}))).values() ==
          std::vector<double>{0.0, 2.0});
}

TEST_CASE("global pooling: constants, checkerboard, and a naive oracle") {
    auto c = global_avg_pool(Tensor<double>::full(Shape{2, 3, 4, 4}, 2.5));
    CHECK(c.shape() == Shape{2, 3, 1, 1});
    for (double v : c.values()) CHECK(v == 2.5);

    std::vector<double> board(16);
    for (Index i = 0; i < 16; ++i) board[size_t(i)] = ((i / 4 + i % 4) % 2 == 0) ? 1.0 : 0.0;
    auto half = global_avg_pool(Tensor<double>::from_data(Shape{1, 1, 4, 4}, std::move(board)));
    CHECK(half.values()[0] == doctest::Approx(0.5));

    CounterRng rng(27);
    auto x = uniform(Shape{2, 3, 5, 7}, rng);
    auto avg = global_avg_pool(x);
    auto mx = global_max_pool(x);
    for (Index n = 0; n < 2; ++n)
        for (Index ch = 0; ch < 3; ++ch) {
            double s = 0, top = x.at(n, ch, 0, 0);
            for (Index h = 0; h < 5; ++h)
                for (Index w = 0; w < 7; ++w) {
                    s += x.at(n, ch, h, w);
                    top = std::max(top, x.at(n, ch, h, w));
                }
            CHECK(avg.at(n, ch, 0, 0) == doctest::Approx(s / 35.0));
            CHECK(mx.at(n, ch, 0, 0) == top);
        }
}

TEST_CASE("channel mean and max reduce across channels per pixel") {
    auto x = Tensor<double>::from_data(Shape{1, 3, 1, 2}, {1, 2, 5, 6, -3, 10});
    auto m = channel_mean(x);
    CHECK(m.shape() == Shape{1, 1, 1, 2});
    CHECK(m.at(0, 0, 0, 0) == doctest::Approx((1 + 5 - 3) / 3.0));
    CHECK(m.at(0, 0, 0, 1) == doctest::Approx((2 + 6 + 10) / 3.0));
    auto mx = channel_max(x);
    CHECK(mx.at(0, 0, 0, 0) == 5.0);
    CHECK(mx.at(0, 0, 0, 1) == 10.0);
}

TEST_CASE("bilinear upsample: constants, the 2x2 hand case, convexity") {
    auto c = bilinear_upsample(Tensor<double>::full(Shape{2, 2, 3, 3}, 1.5), 7, 9);
    for (double v : c.values()) CHECK(v == doctest::Approx(1.5).epsilon(1e-14));

    auto x = Tensor<double>::from_data(Shape{1, 1, 2, 2}, {1, 2, 3, 4});
    auto y = bilinear_upsample(x, 4, 4);
    const double want[4][4] = {{1.0, 1.25, 1.75, 2.0},
                               {1.5, 1.75, 2.25, 2.5},
                               {2.5, 2.75, 3.25, 3.5},
                               {3.0, 3.25, 3.75, 4.0}};
    for (Index h = 0; h < 4; ++h)
        for (Index w = 0; w < 4; ++w) CHECK(y.at(0, 0, h, w) == want[h][w]);
    // Corners reproduce the input corners; every value convex-bounded.
    CHECK(y.at(0, 0, 0, 0) == 1.0);
    CHECK(y.at(0, 0, 3, 3) == 4.0);
    for (double v : y.values()) {
        CHECK(v >= 1.0);
        CHECK(v <= 4.0);
    }

    CounterRng rng(28);
    auto r = uniform(Shape{2, 3, 5, 4}, rng, -2.0, 3.0);
    double lo = r.values()[0], hi = r.values()[0];
    for (double v : r.values()) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    for (double v : bilinear_upsample(r, 11, 13).values()) {
        CHECK(v >= lo - 1e-12);
        CHECK(v <= hi + 1e-12);
    }
}

TEST_CASE("bilinear upsample at the identity size is a bitwise copy") {
    CounterRng rng(29);
    auto x = uniform(Shape{1, 2, 6, 5}, rng);
    CHECK(bilinear_upsample(x, 6, 5).values() == x.values());
    CHECK_THROWS_AS(bilinear_upsample(x, 3, 5), std::invalid_argument);  // enlarge-only
}
