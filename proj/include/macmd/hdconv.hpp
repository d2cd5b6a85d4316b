#pragma once

#include <array>
#include <stdexcept>
#include <string>
#include <vector>

#include "macmd/param_store.hpp"

namespace macmd {

/// Dilation rates of the four parallel branches.
inline constexpr std::array<Index, 4> kHdconvDilations{1, 2, 3, 5};

/// The cyclic regrouping rule, isolated so it can be swapped wholesale:
/// each branch output (Cout/4 channels) splits into 4 sub-groups of
/// Cout/16; output quarter j takes sub-group (b+j) mod 4 from branch b, so
/// every quarter mixes all four dilation rates. Returned as a gather map:
/// output channel o reads concatenated-branch channel perm[o].
inline std::vector<Index> hdconv_permutation(Index cout) {
    if (cout % 16 != 0) {
        throw std::invalid_argument("hdconv_permutation: output channels " +
                                    std::to_string(cout) + " not divisible by 16");
    }
    const Index quarter = cout / 4, sub = cout / 16;
    std::vector<Index> perm(static_cast<std::size_t>(cout));
    for (Index j = 0; j < 4; ++j)
        for (Index b = 0; b < 4; ++b)
            for (Index t = 0; t < sub; ++t)
                perm[static_cast<std::size_t>(j * quarter + b * sub + t)] =
                    b * quarter + ((b + j) % 4) * sub + t;
    return perm;
}

/// Hybrid multi-dilated convolution: four parallel 3x3 convolutions at
/// dilations 1/2/3/5 (padding = dilation, so spatial size is preserved),
/// outputs regrouped by the cyclic rule above. Parameter count matches one
/// dense 3x3 convolution Cin->Cout exactly.
template <typename S>
struct HDConvLayer {
    std::array<Conv2dLayer<S>, 4> branches;
    std::vector<Index> regroup;
    Index cin = 0;
    Index cout = 0;

    static HDConvLayer make(ParamStore<S>& ps, const std::string& name, Index cin, Index cout,
                            bool with_bias = true) {
        if (cout % 16 != 0) {
            throw std::invalid_argument("HDConvLayer: output channels " + std::to_string(cout) +
                                        " not divisible by 16 (4 branches x 4 sub-groups)");
        }
        HDConvLayer layer;
        layer.cin = cin;
        layer.cout = cout;
        layer.regroup = hdconv_permutation(cout);
        for (int b = 0; b < 4; ++b) {
            const Index d = kHdconvDilations[static_cast<std::size_t>(b)];
            layer.branches[static_cast<std::size_t>(b)] = Conv2dLayer<S>::make(
                ps, name + ".branch" + std::to_string(b), cin, cout / 4, 3,
                Conv2dOpts{.padding = d, .dilation = d}, with_bias);
        }
        return layer;
    }
};

template <typename S>
Tensor<S> hdconv_forward(const Tensor<S>& x, const HDConvLayer<S>& layer) {
    std::vector<Tensor<S>> outs;
    outs.reserve(4);
    for (const auto& branch : layer.branches) outs.push_back(branch(x));
    return permute_channels(concat_channels(outs), layer.regroup);
}

/// Learnable-element count: 4 branches of [Cout/4, Cin, 3, 3] = 9*Cin*Cout,
/// plus Cout bias terms when present.
inline Index hdconv_param_count(Index cin, Index cout, bool with_bias) {
    return 9 * cin * cout + (with_bias ? cout : 0);
}

}  // namespace macmd
