#pragma once

#include <string>

#include "macmd/hdconv.hpp"
#include "macmd/ops.hpp"

namespace macmd {

/// Deepest-stage refinement: two multi-dilated conv stacks, then channel
/// attention (global average pool + two-layer MLP) and spatial attention
/// (7x7 conv over the channelwise max and mean maps).
template <typename S>
struct MeabBlock {
    HDConvLayer<S> hd1, hd2;       // C -> C
    BatchNormLayer<S> bn1, bn2;
    LinearLayer<S> ca1;            // C -> C/r
    LinearLayer<S> ca2;            // C/r -> C
    Conv2dLayer<S> sa;             // 7x7, 2 -> 1, padding 3
    Index channels = 0;
    Index reduction = 0;

    static MeabBlock make(ParamStore<S>& ps, const std::string& name, Index channels,
                          Index reduction = 16) {
        if (channels % 16 != 0 || channels % reduction != 0) {
            throw std::invalid_argument("MeabBlock: channels " + std::to_string(channels) +
                                        " must be divisible by 16 and by the reduction " +
                                        std::to_string(reduction));
        }
        MeabBlock block;
        block.channels = channels;
        block.reduction = reduction;
        block.hd1 = HDConvLayer<S>::make(ps, name + ".hd1", channels, channels);
        block.bn1 = BatchNormLayer<S>::make(ps, name + ".bn1", channels);
        block.hd2 = HDConvLayer<S>::make(ps, name + ".hd2", channels, channels);
        block.bn2 = BatchNormLayer<S>::make(ps, name + ".bn2", channels);
        block.ca1 = LinearLayer<S>::make(ps, name + ".ca1", channels, channels / reduction);
        block.ca2 = LinearLayer<S>::make(ps, name + ".ca2", channels / reduction, channels);
        block.sa = Conv2dLayer<S>::make(ps, name + ".sa", 2, 1, 7, Conv2dOpts{.padding = 3});
        return block;
    }
};

template <typename S>
Tensor<S> meab_forward(const Tensor<S>& x, const MeabBlock<S>& block) {
    if (x.shape().rank() != 4 || x.shape()[1] != block.channels) {
        throw std::invalid_argument("meab_forward: expected " + std::to_string(block.channels) +
                                    " channels, got input " + x.shape().str());
    }
    const Index N = x.shape()[0], C = block.channels;
    Tensor<S> u = relu(block.bn2(hdconv_forward(relu(block.bn1(hdconv_forward(x, block.hd1))),
                                                block.hd2)));
    // Channel gate: spatially constant, one weight per channel.
    Tensor<S> pooled = reshape(global_avg_pool(u), Shape{N, C});
    Tensor<S> ch_gate = reshape(sigmoid(block.ca2(relu(block.ca1(pooled)))), Shape{N, C, 1, 1});
    Tensor<S> gated = mul(u, ch_gate);
    // Spatial gate: channel-constant, driven by the max and mean maps.
    Tensor<S> sp_gate =
        sigmoid(block.sa(concat_channels<S>({channel_max(gated), channel_mean(gated)})));
    return mul(gated, sp_gate);
}

/// Two HDConv stacks with biases, two batch norms, the channel MLP with
/// biases, and the 7x7 spatial conv with bias.
inline Index meab_param_count(Index channels, Index reduction) {
    const Index hidden = channels / reduction;
    return 2 * (9 * channels * channels + channels) + 4 * channels +
           (channels * hidden + hidden + hidden * channels + channels) + (7 * 7 * 2 + 1);
}

}  // namespace macmd
