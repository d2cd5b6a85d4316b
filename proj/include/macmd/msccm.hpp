#pragma once

#include <array>
#include <string>
#include <vector>

#include "macmd/ops.hpp"
#include "macmd/param_store.hpp"

namespace macmd {

/// Quad-directional token shift: channels split into four equal groups;
/// group 0 reads each pixel's left neighbor, group 1 the right, group 2 the
/// one above, group 3 the one below. Missing neighbors contribute zero.
template <typename S>
Tensor<S> qshift(const Tensor<S>& x) {
    const Shape& xs = x.shape();
    if (xs.rank() != 4) throw std::invalid_argument("qshift: rank-4 input required");
    const Index N = xs[0], D = xs[1], H = xs[2], W = xs[3];
    if (D % 4 != 0) {
        throw std::invalid_argument("qshift: channel count " + std::to_string(D) +
                                    " not divisible by 4");
    }
    const Index Dg = D / 4;
    std::vector<S> out(static_cast<std::size_t>(xs.count()), S(0));
    const S* px = x.data();
    // dh/dw encode where each group's value comes from: out(h,w) = in(h+dh, w+dw).
    static constexpr Index kDh[4] = {0, 0, -1, 1};
    static constexpr Index kDw[4] = {-1, 1, 0, 0};
    for (Index n = 0; n < N; ++n)
        for (Index d = 0; d < D; ++d) {
            const int g = static_cast<int>(d / Dg);
            const S* src = px + (n * D + d) * H * W;
            S* dst = out.data() + (n * D + d) * H * W;
            for (Index h = 0; h < H; ++h) {
                const Index sh = h + kDh[g];
                if (sh < 0 || sh >= H) continue;
                for (Index w = 0; w < W; ++w) {
                    const Index sw = w + kDw[g];
                    if (sw >= 0 && sw < W) dst[h * W + w] = src[sh * W + sw];
                }
            }
        }
    auto xn = x.handle();
    return detail::make_result<S>(xs, std::move(out), {x},
                                  [xn, N, D, Dg, H, W](detail::Node<S>& self) {
                                      xn->ensure_grad();
                                      for (Index n = 0; n < N; ++n)
                                          for (Index d = 0; d < D; ++d) {
                                              const int g = static_cast<int>(d / Dg);
                                              const S* gp = self.grad.data() + (n * D + d) * H * W;
                                              S* dst = xn->grad.data() + (n * D + d) * H * W;
                                              for (Index h = 0; h < H; ++h) {
                                                  const Index sh = h + kDh[g];
                                                  if (sh < 0 || sh >= H) continue;
                                                  for (Index w = 0; w < W; ++w) {
                                                      const Index sw = w + kDw[g];
                                                      if (sw >= 0 && sw < W)
                                                          dst[sh * W + sw] += gp[h * W + w];
                                                  }
                                              }
                                          }
                                  });
}

/// The channel-mixing feed-forward over pixel tokens: receptance/key/value
/// projections on learnable blends of each token with its shifted neighbor,
/// squared-ReLU on the key path, sigmoid receptance gating the value. The
/// value projection starts at zero so the enclosing residual is the exact
/// identity at initialization.
template <typename S>
struct ChannelMixCore {
    Tensor<S> ln_gain, ln_bias;  // layer norm over D
    Tensor<S> mu_r, mu_k;        // learnable blend coefficients, init 0.5
    LinearLayer<S> w_r;          // D -> D, no bias
    LinearLayer<S> w_k;          // D -> 2D, no bias
    LinearLayer<S> w_v;          // 2D -> D, no bias, zero-init
    Index d = 0;

    static ChannelMixCore make(ParamStore<S>& ps, const std::string& name, Index d) {
        if (d % 4 != 0) {
            throw std::invalid_argument("ChannelMixCore: width " + std::to_string(d) +
                                        " not divisible by 4 (quad shift groups)");
        }
        ChannelMixCore core;
        core.d = d;
        core.ln_gain = ps.add(name + ".ln.gain", Shape{d}, ParamKind::norm_gain);
        core.ln_bias = ps.add(name + ".ln.bias", Shape{d}, ParamKind::norm_bias);
        core.mu_r = ps.add(name + ".mu_r", Shape{d}, ParamKind::mix_coefficient);
        core.mu_k = ps.add(name + ".mu_k", Shape{d}, ParamKind::mix_coefficient);
        core.w_r = LinearLayer<S>::make(ps, name + ".w_r", d, d, /*with_bias=*/false);
        core.w_k = LinearLayer<S>::make(ps, name + ".w_k", d, 2 * d, /*with_bias=*/false);
        core.w_v = LinearLayer<S>(); // zero-init by hand below
        core.w_v.w = ps.add_zeros(name + ".w_v.weight", Shape{d, 2 * d}, ParamKind::weight);
        return core;
    }
};

/// tokens: [T,D] flattened spatial grids, T a multiple of h*w (one grid per
/// batch sample). Returns the mix output WITHOUT the residual; the caller
/// adds the input back.
template <typename S>
Tensor<S> channel_mix(const Tensor<S>& tokens, const ChannelMixCore<S>& core, Index h, Index w) {
    const Shape& ts = tokens.shape();
    if (ts.rank() != 2 || ts[1] != core.d) {
        throw std::invalid_argument("channel_mix: expected tokens [T," + std::to_string(core.d) +
                                    "], got " + ts.str());
    }
    const Index grid = h * w;
    if (grid < 1 || ts[0] % grid != 0) {
        throw std::invalid_argument("channel_mix: token count " + std::to_string(ts[0]) +
                                    " is not a whole number of " + std::to_string(h) + "x" +
                                    std::to_string(w) + " grids");
    }
    const Index n = ts[0] / grid;
    Tensor<S> u = layer_norm(tokens, core.ln_gain, core.ln_bias);
    Tensor<S> s = unfold_tokens(qshift(fold_tokens(u, n, h, w)));
    Tensor<S> inv_mu_r = affine(core.mu_r, S(-1), S(1));
    Tensor<S> inv_mu_k = affine(core.mu_k, S(-1), S(1));
    Tensor<S> r = sigmoid(core.w_r(add(mul(u, core.mu_r), mul(s, inv_mu_r))));
    Tensor<S> k = core.w_k(add(mul(u, core.mu_k), mul(s, inv_mu_k)));
    Tensor<S> v = linear(squared_relu(k), core.w_v.w, core.w_v.b);
    return mul(r, v);
}

/// Mixer over the three shallow pyramid stages: 1x1-project everything to
/// the stage-1 width at the stage-1 resolution, concatenate, channel-mix
/// with residual over pixel tokens, then split and restore each stage's
/// width and resolution.
template <typename S>
struct MsccmBlock {
    std::array<Conv2dLayer<S>, 3> in_projs;   // C_i -> C1 (1x1, bias)
    std::array<Conv2dLayer<S>, 3> out_projs;  // C1 -> C_i (1x1, bias)
    ChannelMixCore<S> mix;
    std::array<Index, 3> channels{};  // C1, C2, C3
    Index c1 = 0;

    static MsccmBlock make(ParamStore<S>& ps, const std::string& name, Index c1, Index c2,
                           Index c3) {
        MsccmBlock block;
        block.channels = {c1, c2, c3};
        block.c1 = c1;
        const std::array<Index, 3> cs{c1, c2, c3};
        for (int i = 0; i < 3; ++i) {
            block.in_projs[static_cast<std::size_t>(i)] = Conv2dLayer<S>::make(
                ps, name + ".in_proj" + std::to_string(i + 1), cs[static_cast<std::size_t>(i)],
                c1, 1);
        }
        block.mix = ChannelMixCore<S>::make(ps, name + ".mix", 3 * c1);
        for (int i = 0; i < 3; ++i) {
            block.out_projs[static_cast<std::size_t>(i)] = Conv2dLayer<S>::make(
                ps, name + ".out_proj" + std::to_string(i + 1), c1,
                cs[static_cast<std::size_t>(i)], 1);
        }
        return block;
    }
};

/// Stage 1 is projected in place; stages 2 and 3 are upsampled to the
/// stage-1 grid first, then projected. Channel concatenation in stage order.
template <typename S>
Tensor<S> msccm_align(const Tensor<S>& x1, const Tensor<S>& x2, const Tensor<S>& x3,
                      const MsccmBlock<S>& block) {
    const Index H = x1.shape()[2], W = x1.shape()[3];
    const std::array<const Tensor<S>*, 3> xs{&x1, &x2, &x3};
    for (int i = 0; i < 3; ++i) {
        const Shape& s = xs[static_cast<std::size_t>(i)]->shape();
        if (s.rank() != 4 || s[1] != block.channels[static_cast<std::size_t>(i)] ||
            s[2] != (H >> i) || s[3] != (W >> i)) {
            throw std::invalid_argument(
                "msccm_align: stage " + std::to_string(i + 1) + " has shape " + s.str() +
                ", expected channels " +
                std::to_string(block.channels[static_cast<std::size_t>(i)]) + " at " +
                std::to_string(H >> i) + "x" + std::to_string(W >> i));
        }
    }
    Tensor<S> t1 = block.in_projs[0](x1);
    Tensor<S> t2 = block.in_projs[1](bilinear_upsample(x2, H, W));
    Tensor<S> t3 = block.in_projs[2](bilinear_upsample(x3, H, W));
    return concat_channels<S>({t1, t2, t3});
}

/// Splits the mixed map into its three stage groups, projects each back to
/// its stage width at the shared grid, then resamples down to the stage's
/// native resolution (stage 1 is already native).
template <typename S>
std::array<Tensor<S>, 3> msccm_restore(const Tensor<S>& x_mix, const MsccmBlock<S>& block) {
    const Shape& s = x_mix.shape();
    if (s.rank() != 4 || s[1] != 3 * block.c1) {
        throw std::invalid_argument("msccm_restore: expected " + std::to_string(3 * block.c1) +
                                    " channels, got " + s.str());
    }
    const Index H = s[2], W = s[3];
    std::array<Tensor<S>, 3> out;
    for (int i = 0; i < 3; ++i) {
        Tensor<S> group = slice_channels(x_mix, Index(i) * block.c1, block.c1);
        Tensor<S> proj = block.out_projs[static_cast<std::size_t>(i)](group);
        out[static_cast<std::size_t>(i)] =
            (i == 0) ? proj : detail::bilinear_resize(proj, H >> i, W >> i);
    }
    return out;
}

template <typename S>
std::array<Tensor<S>, 3> msccm_forward(const Tensor<S>& x1, const Tensor<S>& x2,
                                       const Tensor<S>& x3, const MsccmBlock<S>& block) {
    Tensor<S> cat = msccm_align(x1, x2, x3, block);
    const Index N = cat.shape()[0], H = cat.shape()[2], W = cat.shape()[3];
    Tensor<S> tokens = unfold_tokens(cat);
    Tensor<S> mixed = add(channel_mix(tokens, block.mix, H, W), tokens);  // residual
    return msccm_restore(fold_tokens(mixed, N, H, W), block);
}

/// Closed-form learnable-element count: three projection pairs with biases
/// plus the mix core (layer norm, two blend vectors, three bias-free linear
/// maps with hidden width 2D).
inline Index msccm_param_count(Index c1, Index c2, Index c3) {
    const Index d = 3 * c1;
    Index projs = 0;
    for (Index c : {c1, c2, c3}) projs += (c * c1 + c1) + (c1 * c + c);  // in + out
    const Index core = 2 * d + 2 * d + d * d + d * 2 * d + 2 * d * d;
    return projs + core;
}

}  // namespace macmd
