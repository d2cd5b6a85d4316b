#include <cmath>
#include <set>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "macmd/param_store.hpp"
#include "macmd/rng.hpp"

using namespace macmd;

TEST_CASE("counter rng is a pure function of seed and index") {
    CounterRng a(42);
    std::vector<std::uint64_t> seq;
    for (int i = 0; i < 8; ++i) seq.push_back(a.next_u64());
    CHECK(a.counter() == 8);

    CounterRng b(42);
    for (int i = 0; i < 8; ++i) CHECK(b.at_u64(static_cast<std::uint64_t>(i)) == seq[size_t(i)]);
    CHECK(b.counter() == 0);  // random access leaves the cursor alone

    CounterRng c(43);
    bool differs = false;
    for (int i = 0; i < 8; ++i) differs |= (c.next_u64() != seq[size_t(i)]);
    CHECK(differs);
}

TEST_CASE("counter rng derived draws stay in range") {
    CounterRng rng(7);
    for (int i = 0; i < 2000; ++i) {
        const double u = rng.next_double();
        CHECK(u > 0.0);
        CHECK(u < 1.0);
    }
    std::set<std::uint64_t> seen;
    for (int i = 0; i < 500; ++i) {
        const auto v = rng.next_below(13);
        CHECK(v < 13);
        seen.insert(v);
    }
    CHECK(seen.size() == 13);  // all residues hit in 500 draws
    CHECK(CounterRng(5).next_below(1) == 0);
}

TEST_CASE("counter rng normal draws have sane moments") {
    CounterRng rng(11);
    const int n = 20000;
    double s = 0, s2 = 0;
    for (int i = 0; i < n; ++i) {
        const double z = rng.next_normal();
        s += z;
        s2 += z * z;
    }
    const double mean = s / n;
    const double var = s2 / n - mean * mean;
    CHECK(std::abs(mean) < 0.05);
    CHECK(std::abs(var - 1.0) < 0.05);
}

TEST_CASE("parameter initialization follows the kind rules") {
    ParamStore<double> ps(123);
    auto w = ps.add("block.weight", Shape{8, 4, 3, 3}, ParamKind::weight, 4 * 3 * 3);
    auto b = ps.add("block.bias", Shape{8}, ParamKind::bias);
    auto g = ps.add("block.gain", Shape{8}, ParamKind::norm_gain);
    auto nb = ps.add("block.nbias", Shape{8}, ParamKind::norm_bias);
    auto mu = ps.add("block.mu", Shape{1, 8}, ParamKind::mix_coefficient);
    auto z = ps.add_zeros("block.v", Shape{4, 8}, ParamKind::weight);

    for (double v : b.values()) CHECK(v == 0.0);
    for (double v : g.values()) CHECK(v == 1.0);
    for (double v : nb.values()) CHECK(v == 0.0);
    for (double v : mu.values()) CHECK(v == 0.5);
    for (double v : z.values()) CHECK(v == 0.0);
    CHECK(w.requires_grad());
    CHECK(z.requires_grad());

    // He-normal weights: spread matches sqrt(2/fan_in) loosely, not all equal.
    const double sd = std::sqrt(2.0 / 36.0);
    double s2 = 0;
    for (double v : w.values()) s2 += v * v;
    const double est = std::sqrt(s2 / double(w.size()));
    CHECK(est > 0.5 * sd);
    CHECK(est < 1.5 * sd);
}

TEST_CASE("parameter store seeding is deterministic and order-sensitive") {
    ParamStore<float> a(9), b(9), c(10);
    auto wa = a.add("w", Shape{16, 16}, ParamKind::weight, 16);
    auto wb = b.add("w", Shape{16, 16}, ParamKind::weight, 16);
    auto wc = c.add("w", Shape{16, 16}, ParamKind::weight, 16);
    CHECK(wa.values() == wb.values());
    CHECK(wa.values() != wc.values());

    // A weight registered second sees a different slice of the stream.
    ParamStore<float> d(9);
    d.add("pre", Shape{4, 4}, ParamKind::weight, 4);
    auto wd = d.add("w", Shape{16, 16}, ParamKind::weight, 16);
    CHECK(wd.values() != wa.values());
}

TEST_CASE("parameter store rejects bad registrations and lookups") {
    ParamStore<double> ps(1);
    CHECK_THROWS_AS(ps.add("w", Shape{4, 4}, ParamKind::weight), std::invalid_argument);  // fan_in 0
    ps.add("w", Shape{4, 4}, ParamKind::weight, 4);
    CHECK_THROWS_AS(ps.add("w", Shape{2}, ParamKind::bias), std::invalid_argument);  // duplicate
    CHECK_THROWS_AS(ps.find("missing"), std::invalid_argument);
    CHECK(ps.has("w"));
    CHECK(!ps.has("missing"));

    ps.add_norm_state("bn", 4);
    CHECK_THROWS_AS(ps.add_norm_state("bn", 4), std::invalid_argument);
    CHECK(ps.norm_state_count() == 1);
    CHECK(ps.norm_state_name(0) == "bn");
    CHECK_THROWS_AS(ps.find_norm_state("nope"), std::invalid_argument);
}

TEST_CASE("element counting sums every parameter under a prefix") {
    ParamStore<double> ps(3);
    ps.add("enc.a.weight", Shape{8, 2, 3, 3}, ParamKind::weight, 18);
    ps.add("enc.a.bias", Shape{8}, ParamKind::bias);
    ps.add("enc.b.weight", Shape{4, 8}, ParamKind::weight, 8);
    ps.add("dec.weight", Shape{2, 4}, ParamKind::weight, 4);
    CHECK(ps.element_count("enc.a") == 8 * 2 * 3 * 3 + 8);
    CHECK(ps.element_count("enc") == 8 * 2 * 3 * 3 + 8 + 32);
    CHECK(ps.element_count("") == 8 * 2 * 3 * 3 + 8 + 32 + 8);
    CHECK(ps.element_count("nothing") == 0);
}

TEST_CASE("set_training flips every norm state") {
    ParamStore<float> ps(2);
    ps.add_norm_state("a", 3);
    ps.add_norm_state("b", 5);
    CHECK(ps.norm_state(0).training);
    ps.set_training(false);
    CHECK(!ps.norm_state(0).training);
    CHECK(!ps.norm_state(1).training);
    ps.set_training(true);
    CHECK(ps.norm_state(1).training);
}

TEST_CASE("zero_grads clears accumulated gradients on every parameter") {
    ParamStore<double> ps(4);
    auto w = ps.add("w", Shape{2, 2}, ParamKind::weight, 2);
    backward(sum(mul(w, w)));
    bool any = false;
    for (double v : w.grad()) any |= (v != 0.0);
    CHECK(any);
    ps.zero_grads();
    for (double v : w.grad()) CHECK(v == 0.0);
}
