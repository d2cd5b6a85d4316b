#pragma once

#include <string>
#include <vector>

#include "macmd/ops.hpp"
#include "macmd/param_store.hpp"

namespace macmd {

/// Cross-scale fusion block: per-scale projection to a common width, a
/// per-pixel softmax over scales for the fused context, and bidirectional
/// sigmoid modulation of each scale by that context. The scoring and
/// modulation convolutions are shared across scales; only the projections
/// are per-scale.
template <typename S>
struct ApmBlock {
    struct Projection {
        Conv2dLayer<S> conv;  // 1x1, C_i -> C
        BatchNormLayer<S> bn;
    };
    std::vector<Projection> projections;
    Conv2dLayer<S> attn1;  // shared 1x1, C -> C/8
    Conv2dLayer<S> attn2;  // shared 1x1, C/8 -> 1
    Conv2dLayer<S> mod_conv;  // shared 1x1, C -> C
    BatchNormLayer<S> mod_bn;
    Index common_c = 0;

    static ApmBlock make(ParamStore<S>& ps, const std::string& name,
                         const std::vector<Index>& in_channels, Index common_c) {
        if (in_channels.empty()) {
            throw std::invalid_argument("ApmBlock: at least one input scale required");
        }
        if (common_c % 8 != 0) {
            throw std::invalid_argument("ApmBlock: common width " + std::to_string(common_c) +
                                        " not divisible by 8");
        }
        ApmBlock block;
        block.common_c = common_c;
        for (std::size_t i = 0; i < in_channels.size(); ++i) {
            const std::string p = name + ".proj" + std::to_string(i + 1);
            block.projections.push_back(
                {Conv2dLayer<S>::make(ps, p + ".conv", in_channels[i], common_c, 1),
                 BatchNormLayer<S>::make(ps, p + ".bn", common_c)});
        }
        block.attn1 = Conv2dLayer<S>::make(ps, name + ".attn1", common_c, common_c / 8, 1);
        block.attn2 = Conv2dLayer<S>::make(ps, name + ".attn2", common_c / 8, 1, 1);
        block.mod_conv = Conv2dLayer<S>::make(ps, name + ".mod_conv", common_c, common_c, 1);
        block.mod_bn = BatchNormLayer<S>::make(ps, name + ".mod_bn", common_c);
        return block;
    }
};

/// Projects every scale at its native resolution (1x1 conv + BN + ReLU),
/// then upsamples to the first scale's size. The first scale is already at
/// target size and skips the resampling entirely.
template <typename S>
std::vector<Tensor<S>> apm_align(const std::vector<Tensor<S>>& xs, const ApmBlock<S>& block) {
    if (xs.empty()) throw std::invalid_argument("apm_align: no input scales");
    if (xs.size() != block.projections.size()) {
        throw std::invalid_argument("apm_align: got " + std::to_string(xs.size()) +
                                    " scales, block built for " +
                                    std::to_string(block.projections.size()));
    }
    const Index H = xs[0].shape()[2], W = xs[0].shape()[3];
    std::vector<Tensor<S>> aligned;
    aligned.reserve(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const Shape& s = xs[i].shape();
        const Index want_h = H >> i, want_w = W >> i;
        if (s.rank() != 4 || s[2] != want_h || s[3] != want_w) {
            throw std::invalid_argument("apm_align: scale " + std::to_string(i + 1) +
                                        " has shape " + s.str() + ", expected spatial " +
                                        std::to_string(want_h) + "x" + std::to_string(want_w) +
                                        " (halving pyramid)");
        }
        const auto& p = block.projections[i];
        Tensor<S> t = relu(p.bn(p.conv(xs[i])));
        if (i > 0) t = bilinear_upsample(t, H, W);
        aligned.push_back(t);
    }
    return aligned;
}

/// Scores each aligned map down to one channel, softmaxes the scores across
/// the scale axis per pixel, and returns the weighted sum of the maps. With
/// a single scale the weight is exactly one and the input passes through
/// unchanged.
template <typename S>
Tensor<S> apm_fuse(const std::vector<Tensor<S>>& aligned, const ApmBlock<S>& block) {
    if (aligned.empty()) throw std::invalid_argument("apm_fuse: no aligned scales");
    std::vector<Tensor<S>> scores;
    scores.reserve(aligned.size());
    for (const auto& x : aligned) scores.push_back(block.attn2(relu(block.attn1(x))));
    Tensor<S> weights = softmax_channels(concat_channels(scores));  // [N, scales, H, W]
    Tensor<S> fused;
    for (std::size_t i = 0; i < aligned.size(); ++i) {
        Tensor<S> term = mul(slice_channels(weights, static_cast<Index>(i), 1), aligned[i]);
        fused = fused.defined() ? add(fused, term) : term;
    }
    return fused;
}

/// Bidirectional modulation: each scale is gated by the fused context and
/// vice versa, their product is squeezed through the shared 1x1 conv into a
/// nonnegative gate, and the gated scales are averaged.
template <typename S>
Tensor<S> apm_modulate(const std::vector<Tensor<S>>& aligned, const Tensor<S>& fused,
                       const ApmBlock<S>& block) {
    if (aligned.empty()) throw std::invalid_argument("apm_modulate: no aligned scales");
    Tensor<S> fused_sig = sigmoid(fused);
    Tensor<S> acc;
    for (const auto& x : aligned) {
        Tensor<S> context_gated = mul(x, fused_sig);       // scale modulated by context
        Tensor<S> scale_gated = mul(fused, sigmoid(x));    // context modulated by scale
        Tensor<S> gate = relu(block.mod_bn(block.mod_conv(mul(context_gated, scale_gated))));
        Tensor<S> z = mul(gate, x);
        acc = acc.defined() ? add(acc, z) : z;
    }
    return affine(acc, S(1) / S(aligned.size()), S(0));
}

template <typename S>
Tensor<S> apm_forward(const std::vector<Tensor<S>>& xs, const ApmBlock<S>& block) {
    auto aligned = apm_align(xs, block);
    return apm_modulate(aligned, apm_fuse(aligned, block), block);
}

/// Closed-form learnable-element count for the standard four-scale block.
inline Index apm_param_count(const std::vector<Index>& in_channels, Index common_c) {
    Index total = 0;
    for (Index cin : in_channels) total += cin * common_c + common_c + 2 * common_c;  // conv+bn
    total += common_c * (common_c / 8) + common_c / 8;  // attn1
    total += common_c / 8 + 1;                          // attn2
    total += common_c * common_c + common_c;            // mod_conv
    total += 2 * common_c;                              // mod_bn
    return total;
}

}  // namespace macmd
