#pragma once

#include <string>

#include "macmd/hdconv.hpp"
#include "macmd/ops.hpp"

namespace macmd {

/// Contextual attention gate: a multi-dilated transform of the stage
/// feature, gated by a single-channel sigmoid map shared across channels.
template <typename S>
struct McagBlock {
    HDConvLayer<S> hd;        // C -> C
    BatchNormLayer<S> bn1;    // over C
    Conv2dLayer<S> attn;      // 1x1, C -> 1
    BatchNormLayer<S> bn2;    // over the gate channel
    Index channels = 0;

    static McagBlock make(ParamStore<S>& ps, const std::string& name, Index channels) {
        McagBlock block;
        block.channels = channels;
        block.hd = HDConvLayer<S>::make(ps, name + ".hdconv", channels, channels);
        block.bn1 = BatchNormLayer<S>::make(ps, name + ".bn1", channels);
        block.attn = Conv2dLayer<S>::make(ps, name + ".attn", channels, 1, 1);
        block.bn2 = BatchNormLayer<S>::make(ps, name + ".bn2", 1);
        return block;
    }
};

/// t = BN(HDConv(x)); gate = sigmoid(BN(Conv1x1(ReLU(t)))) with one channel
/// broadcast across all C; returns t * gate.
template <typename S>
Tensor<S> mcag_forward(const Tensor<S>& x, const McagBlock<S>& block) {
    if (x.shape().rank() != 4 || x.shape()[1] != block.channels) {
        throw std::invalid_argument("mcag_forward: expected " + std::to_string(block.channels) +
                                    " channels, got input " + x.shape().str());
    }
    Tensor<S> t = block.bn1(hdconv_forward(x, block.hd));
    Tensor<S> gate = sigmoid(block.bn2(block.attn(relu(t))));
    return mul(t, gate);
}

/// 9C^2 (hdconv weights) + C (hdconv bias) + 2C (bn1) + C+1 (gate conv)
/// + 2 (bn2).
inline Index mcag_param_count(Index channels) {
    return 9 * channels * channels + 4 * channels + 3;
}

}  // namespace macmd
