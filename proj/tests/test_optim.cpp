#include <cmath>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "macmd/optim.hpp"

using namespace macmd;

namespace {

// A one-parameter store whose gradient we can dial in via a weighted sum.
struct Rig {
    ParamStore<double> ps{1};
    Tensor<double> w;  // shares the store's parameter node

    explicit Rig(std::size_t count, double init) {
        w = ps.add("w", Shape{Index(count)}, ParamKind::norm_gain);  // init 1
        double* d = w.data();
        for (std::size_t i = 0; i < count; ++i) d[i] = init;
    }

    void load_grads(const std::vector<double>& g) {
        ps.zero_grads();
        backward(weighted_sum(w, g));
    }
};

}  // namespace

TEST_CASE("decoupled decay acts even with zero gradient") {
    Rig rig(1, 1.0);
    rig.load_grads({0.0});
    AdamW<double> opt(rig.ps, AdamWConfig{0.1, 0.01, 0.9, 0.999, 1e-8});
    opt.step(1);
    CHECK(rig.w.values()[0] == doctest::Approx(0.999).epsilon(1e-15));
}

TEST_CASE("a unit gradient at step one moves by roughly the learning rate") {
    Rig rig(1, 1.0);
    rig.load_grads({1.0});
    AdamW<double> opt(rig.ps, AdamWConfig{0.1, 0.0, 0.9, 0.999, 1e-8});
    opt.step(1);
    CHECK(std::abs(rig.w.values()[0] - 0.9) < 1e-6);
}

TEST_CASE("zero gradient and zero decay leave the parameter untouched") {
    Rig rig(3, 0.7);
    rig.load_grads({0.0, 0.0, 0.0});
    AdamW<double> opt(rig.ps, AdamWConfig{0.1, 0.0, 0.9, 0.999, 1e-8});
    opt.step(1);
    opt.step(2);
    for (double v : rig.w.values()) CHECK(v == 0.7);
}

TEST_CASE("step counting starts at one") {
    Rig rig(1, 1.0);
    rig.load_grads({0.5});
    AdamW<double> opt(rig.ps, AdamWConfig{});
    CHECK_THROWS_AS(opt.step(0), std::invalid_argument);
    CHECK_THROWS_AS(opt.step(-3), std::invalid_argument);
}

TEST_CASE("config validation rejects nonsense") {
    Rig rig(1, 1.0);
    CHECK_THROWS_AS(AdamW<double>(rig.ps, AdamWConfig{-0.1, 0.0, 0.9, 0.999, 1e-8}),
                    std::invalid_argument);
    CHECK_THROWS_AS(AdamW<double>(rig.ps, AdamWConfig{0.1, -1.0, 0.9, 0.999, 1e-8}),
                    std::invalid_argument);
    CHECK_THROWS_AS(AdamW<double>(rig.ps, AdamWConfig{0.1, 0.0, 1.0, 0.999, 1e-8}),
                    std::invalid_argument);
    CHECK_THROWS_AS(AdamW<double>(rig.ps, AdamWConfig{0.1, 0.0, 0.9, 0.999, 0.0}),
                    std::invalid_argument);
}

TEST_CASE("a two-step trajectory matches the textbook recurrence") {
    const double lr = 0.05, wd = 0.02, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const std::vector<double> g1{0.3, -1.2}, g2{-0.7, 0.4};

    Rig rig(2, 1.5);
    AdamW<double> opt(rig.ps, AdamWConfig{lr, wd, b1, b2, eps});
    rig.load_grads(g1);
    opt.step(1);
    rig.load_grads(g2);
    opt.step(2);

    // Independent replay in plain doubles.
    double w[2] = {1.5, 1.5}, m[2] = {0, 0}, v[2] = {0, 0};
    const std::vector<double>* gs[2] = {&g1, &g2};
    for (int t = 1; t <= 2; ++t) {
        const double bc1 = 1.0 - std::pow(b1, t), bc2 = 1.0 - std::pow(b2, t);
        for (int k = 0; k < 2; ++k) {
            const double g = (*gs[t - 1])[size_t(k)];
            w[k] -= lr * wd * w[k];
            m[k] = b1 * m[k] + (1 - b1) * g;
            v[k] = b2 * v[k] + (1 - b2) * g * g;
            w[k] -= lr * (m[k] / bc1) / (std::sqrt(v[k] / bc2) + eps);
        }
    }
    CHECK(rig.w.values()[0] == doctest::Approx(w[0]).epsilon(1e-15));
    CHECK(rig.w.values()[1] == doctest::Approx(w[1]).epsilon(1e-15));
}

TEST_CASE("cosine schedule hits both endpoints and decays monotonically") {
    const double hi = 1e-3, lo = 1e-6;
    CHECK(std::abs(cosine_lr(hi, lo, 0, 100) - hi) < 1e-9);
    CHECK(std::abs(cosine_lr(hi, lo, 99, 100) - lo) < 1e-9);
    CHECK(cosine_lr(hi, lo, 0, 1) == hi);

    double prev = cosine_lr(hi, lo, 0, 100);
    for (Index s = 1; s < 100; ++s) {
        const double cur = cosine_lr(hi, lo, s, 100);
        CHECK(cur <= prev);
        prev = cur;
    }
    CHECK(std::abs(cosine_lr(hi, lo, 50, 101) - (lo + 0.5 * (hi - lo))) < 1e-12);

    CHECK_THROWS_AS(cosine_lr(hi, lo, -1, 10), std::invalid_argument);
    CHECK_THROWS_AS(cosine_lr(hi, lo, 10, 10), std::invalid_argument);
    CHECK_THROWS_AS(cosine_lr(hi, lo, 0, 0), std::invalid_argument);
}
