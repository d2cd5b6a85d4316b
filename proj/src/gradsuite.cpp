#include "macmd/gradsuite.hpp"

#include <algorithm>

#include "macmd/gradcheck.hpp"
#include "macmd/loss.hpp"
#include "macmd/model.hpp"

namespace macmd {

namespace {

using T = Tensor<double>;

T uniform(const Shape& shape, double lo, double hi, CounterRng& rng, bool track = true) {
    std::vector<double> data(static_cast<std::size_t>(shape.count()));
    for (auto& v : data) v = lo + (hi - lo) * rng.next_double();
    return T::from_data(shape, std::move(data), track);
}

/// Fixed random blend makes the scalar probe sensitive to every output.
std::vector<double> blend(Index count, CounterRng& rng) {
    std::vector<double> coeffs(static_cast<std::size_t>(count));
    for (auto& c : coeffs) c = 0.5 + rng.next_double();
    return coeffs;
}

MaskBatch random_masks(Index n, Index h, Index w, Index K, CounterRng& rng) {
    MaskBatch y{n, h, w, {}};
    y.labels.resize(static_cast<std::size_t>(n * h * w));
    for (auto& v : y.labels)
        v = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(K)));
    return y;
}

}  // namespace

std::vector<GradSuiteEntry> gradient_suite() {
    std::vector<GradSuiteEntry> entries;
    const double h = 1e-5;

    entries.push_back({"conv2d", 1e-6, [=] {
        CounterRng rng(101);
        T x = uniform(Shape{2, 6, 9, 8}, -1, 1, rng);
        T w = uniform(Shape{4, 3, 3, 3}, -1, 1, rng);
        T b = uniform(Shape{4}, -1, 1, rng);
        const Conv2dOpts opts{.stride = {2, 1}, .padding = {1, 2}, .dilation = {1, 2}, .groups = 2};
        auto out_count = conv2d(x, w, b, opts).size();
        const auto coeffs = blend(out_count, rng);
        auto fx = [&](const T& v) { return weighted_sum(conv2d(v, w, b, opts), coeffs); };
        auto fw = [&](const T& v) { return weighted_sum(conv2d(x, v, b, opts), coeffs); };
        const double ex = grad_check<double>(fx, x, h, 48);
        const double ew = grad_check<double>(fw, w, h, 48);
        return std::max(ex, ew);
    }});

    entries.push_back({"batch_norm-train", 1e-6, [=] {
        CounterRng rng(102);
        // A wide input keeps the batch variance O(1), and the coarser step
        // balances the normalizer's truncation error against roundoff in the
        // near-zero-gradient coordinates that mean subtraction creates.
        T x = uniform(Shape{2, 5, 4, 6}, -2, 2, rng);
        T gain = uniform(Shape{5}, 0.5, 1.5, rng, false);
        T bias = uniform(Shape{5}, -0.5, 0.5, rng, false);
        NormState<double> state(5);
        state.training = true;
        const auto coeffs = blend(x.size(), rng);
        auto f = [&](const T& v) { return weighted_sum(batch_norm(v, gain, bias, state), coeffs); };
        return grad_check<double>(f, x, 5e-4, 48);
    }});

    entries.push_back({"layer_norm", 1e-6, [=] {
        CounterRng rng(103);
        T x = uniform(Shape{7, 10}, -1, 1, rng);
        T gain = uniform(Shape{10}, 0.5, 1.5, rng, false);
        T bias = uniform(Shape{10}, -0.5, 0.5, rng, false);
        const auto coeffs = blend(x.size(), rng);
        auto f = [&](const T& v) { return weighted_sum(layer_norm(v, gain, bias), coeffs); };
        return grad_check<double>(f, x, h, 48);
    }});

    entries.push_back({"bilinear_upsample", 1e-6, [=] {
        CounterRng rng(104);
        T x = uniform(Shape{2, 3, 5, 7}, -1, 1, rng);
        const auto coeffs = blend(2 * 3 * 11 * 16, rng);
        auto f = [&](const T& v) { return weighted_sum(bilinear_upsample(v, 11, 16), coeffs); };
        return grad_check<double>(f, x, h, 48);
    }});

    entries.push_back({"softmax", 1e-6, [=] {
        CounterRng rng(105);
        T x = uniform(Shape{2, 7, 3, 4}, -2, 2, rng);
        const auto coeffs = blend(x.size(), rng);
        auto f = [&](const T& v) { return weighted_sum(softmax_channels(v), coeffs); };
        return grad_check<double>(f, x, h, 48);
    }});

    entries.push_back({"hdconv", 1e-4, [=] {
        CounterRng rng(106);
        ParamStore<double> ps(6);
        auto layer = HDConvLayer<double>::make(ps, "hd", 8, 16);
        T x = uniform(Shape{2, 8, 8, 8}, -1, 1, rng);
        const auto coeffs = blend(2 * 16 * 8 * 8, rng);
        auto f = [&](const T& v) { return weighted_sum(hdconv_forward(v, layer), coeffs); };
        return grad_check<double>(f, x, h, 24);
    }});

    entries.push_back({"mcag", 1e-4, [=] {
        CounterRng rng(107);
        ParamStore<double> ps(7);
        auto block = McagBlock<double>::make(ps, "mcag", 16);
        T x = uniform(Shape{1, 16, 8, 8}, -1, 1, rng);
        const auto coeffs = blend(x.size(), rng);
        auto f = [&](const T& v) { return weighted_sum(mcag_forward(v, block), coeffs); };
        return grad_check<double>(f, x, h, 24);
    }});

    entries.push_back({"apm", 1e-4, [=] {
        CounterRng rng(108);
        ParamStore<double> ps(8);
        auto block = ApmBlock<double>::make(ps, "apm", {16, 16, 16, 16}, 16);
        T x1 = uniform(Shape{1, 16, 8, 8}, -1, 1, rng);
        T x2 = uniform(Shape{1, 16, 4, 4}, -1, 1, rng, false);
        T x3 = uniform(Shape{1, 16, 2, 2}, -1, 1, rng, false);
        T x4 = uniform(Shape{1, 16, 1, 1}, -1, 1, rng, false);
        const auto coeffs = blend(x1.size(), rng);
        auto f = [&](const T& v) {
            return weighted_sum(apm_forward(std::vector<T>{v, x2, x3, x4}, block), coeffs);
        };
        return grad_check<double>(f, x1, h, 24);
    }});

    entries.push_back({"msccm", 1e-4, [=] {
        CounterRng rng(109);
        ParamStore<double> ps(9);
        auto block = MsccmBlock<double>::make(ps, "msccm", 16, 16, 16);
        // Zero-initialized value weights would hide most of the graph; give
        // them a real setting for the check.
        for (auto& p : ps.parameters()) {
            if (p.name == "msccm.mix.w_v.weight") {
                double* v = p.value.data();
                CounterRng wr(90);
                for (Index i = 0; i < p.value.size(); ++i)
                    v[static_cast<std::size_t>(i)] = 0.2 * (wr.next_double() - 0.5);
            }
        }
        T x1 = uniform(Shape{1, 16, 8, 8}, -1, 1, rng);
        T x2 = uniform(Shape{1, 16, 4, 4}, -1, 1, rng, false);
        T x3 = uniform(Shape{1, 16, 2, 2}, -1, 1, rng, false);
        const auto coeffs1 = blend(1 * 16 * 8 * 8, rng);
        const auto coeffs2 = blend(1 * 16 * 4 * 4, rng);
        const auto coeffs3 = blend(1 * 16 * 2 * 2, rng);
        auto f = [&](const T& v) {
            auto skips = msccm_forward(v, x2, x3, block);
            return add(add(weighted_sum(skips[0], coeffs1), weighted_sum(skips[1], coeffs2)),
                       weighted_sum(skips[2], coeffs3));
        };
        return grad_check<double>(f, x1, h, 24);
    }});

    entries.push_back({"meab", 1e-4, [=] {
        CounterRng rng(110);
        ParamStore<double> ps(10);
        auto block = MeabBlock<double>::make(ps, "meab", 16, 4);
        T x = uniform(Shape{1, 16, 8, 8}, -1, 1, rng);
        const auto coeffs = blend(x.size(), rng);
        auto f = [&](const T& v) { return weighted_sum(meab_forward(v, block), coeffs); };
        return grad_check<double>(f, x, h, 24);
    }});

    entries.push_back({"seghead", 1e-4, [=] {
        CounterRng rng(111);
        ParamStore<double> ps(11);
        auto head = SegHead<double>::make(ps, "head", 16, 8, 2);
        T x = uniform(Shape{1, 16, 4, 4}, -1, 1, rng);
        const auto coeffs = blend(1 * 8 * 8 * 8, rng);
        auto f = [&](const T& v) { return weighted_sum(head(v), coeffs); };
        return grad_check<double>(f, x, h, 24);
    }});

    entries.push_back({"dice_loss", 1e-5, [=] {
        CounterRng rng(112);
        T logits = uniform(Shape{2, 3, 4, 4}, -2, 2, rng);
        MaskBatch y = random_masks(2, 4, 4, 3, rng);
        auto f = [&](const T& v) { return dice_loss(v, y); };
        return grad_check<double>(f, logits, h, 48);
    }});

    entries.push_back({"ce_loss", 1e-5, [=] {
        CounterRng rng(113);
        T logits = uniform(Shape{2, 3, 4, 4}, -2, 2, rng);
        MaskBatch y = random_masks(2, 4, 4, 3, rng);
        auto f = [&](const T& v) { return ce_loss(v, y); };
        return grad_check<double>(f, logits, h, 48);
    }});

    entries.push_back({"model-total-loss", 1e-4, [=] {
        CounterRng rng(114);
        ModelConfig mc;
        mc.channels = {16, 16, 16, 16};
        mc.num_classes = 3;
        mc.meab_reduction = 16;
        MacmdModel<double> model(mc, 42);
        model.set_training(true);
        T x = uniform(Shape{1, 3, 64, 64}, 0, 1, rng);
        MaskBatch y = random_masks(1, 64, 64, 3, rng);
        const LossWeights w{0.4, 0.6};
        auto f = [&](const T& v) {
            auto maps = model(v);
            return total_loss(maps[0], maps[1], maps[2], y, w);
        };
        return grad_check<double>(f, x, h, 12);
    }});

    return entries;
}

}  // namespace macmd
