#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <vector>

#include "macmd/tensor.hpp"

namespace macmd {

/// A per-axis (h,w) extent pair; constructible from a single value for the
/// usual symmetric case.
struct Extent2 {
    Index h = 1;
    Index w = 1;
    Extent2() = default;
    Extent2(Index v) : h(v), w(v) {}  // NOLINT: implicit by design
    Extent2(Index h_, Index w_) : h(h_), w(w_) {}
};

struct Conv2dOpts {
    Extent2 stride{1};
    Extent2 padding{0};
    Extent2 dilation{1};
    Index groups = 1;
};

inline Index conv_out_extent(Index in, Index k, Index stride, Index padding, Index dilation) {
    return (in + 2 * padding - dilation * (k - 1) - 1) / stride + 1;
}

namespace detail {

template <typename S>
using RowMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Gathers one sample's patches for one channel group into a K x P matrix
/// (K = Cg*kh*kw patch length, P = OH*OW output pixels), zero-filling
/// out-of-image taps.
template <typename S>
void im2col(const S* x, Index C, Index H, Index W, Index c0, Index Cg, Index kh, Index kw,
            Index OH, Index OW, const Conv2dOpts& o, S* col) {
    const Index P = OH * OW;
    for (Index c = 0; c < Cg; ++c) {
        const S* plane = x + (c0 + c) * H * W;
        for (Index ki = 0; ki < kh; ++ki)
            for (Index kj = 0; kj < kw; ++kj) {
                S* row = col + ((c * kh + ki) * kw + kj) * P;
                for (Index oh = 0; oh < OH; ++oh) {
                    const Index ih = oh * o.stride.h - o.padding.h + ki * o.dilation.h;
                    if (ih < 0 || ih >= H) {
                        std::fill(row + oh * OW, row + (oh + 1) * OW, S(0));
                        continue;
                    }
                    for (Index ow = 0; ow < OW; ++ow) {
                        const Index iw = ow * o.stride.w - o.padding.w + kj * o.dilation.w;
                        row[oh * OW + ow] = (iw < 0 || iw >= W) ? S(0) : plane[ih * W + iw];
                    }
                }
            }
    }
}

/// Scatters a K x P patch-gradient matrix back onto the input plane,
/// accumulating where patches overlap.
template <typename S>
void col2im(const S* col, Index C, Index H, Index W, Index c0, Index Cg, Index kh, Index kw,
            Index OH, Index OW, const Conv2dOpts& o, S* dx) {
    const Index P = OH * OW;
    for (Index c = 0; c < Cg; ++c) {
        S* plane = dx + (c0 + c) * H * W;
        for (Index ki = 0; ki < kh; ++ki)
            for (Index kj = 0; kj < kw; ++kj) {
                const S* row = col + ((c * kh + ki) * kw + kj) * P;
                for (Index oh = 0; oh < OH; ++oh) {
                    const Index ih = oh * o.stride.h - o.padding.h + ki * o.dilation.h;
                    if (ih < 0 || ih >= H) continue;
                    for (Index ow = 0; ow < OW; ++ow) {
                        const Index iw = ow * o.stride.w - o.padding.w + kj * o.dilation.w;
                        if (iw >= 0 && iw < W) plane[ih * W + iw] += row[oh * OW + ow];
                    }
                }
            }
    }
}

}  // namespace detail

/// Grouped 2-D convolution. x: [N,Cin,H,W]; w: [Cout,Cin/groups,kh,kw];
/// b: [Cout] or an undefined tensor for no bias. Depthwise = groups == Cin.
template <typename S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b,
                 const Conv2dOpts& opts = {}) {
    const Shape& xs = x.shape();
    const Shape& ws = w.shape();
    if (xs.rank() != 4) throw std::invalid_argument("conv2d: input must be rank-4, got " + xs.str());
    if (ws.rank() != 4) throw std::invalid_argument("conv2d: weight must be rank-4, got " + ws.str());
    if (opts.stride.h < 1 || opts.stride.w < 1 || opts.dilation.h < 1 || opts.dilation.w < 1 ||
        opts.padding.h < 0 || opts.padding.w < 0 || opts.groups < 1) {
        throw std::invalid_argument("conv2d: stride/dilation must be >=1, padding >=0, groups >=1");
    }
    const Index N = xs[0], Cin = xs[1], H = xs[2], W = xs[3];
    const Index Cout = ws[0], Cg = ws[1], kh = ws[2], kw = ws[3];
    if (Cin % opts.groups != 0 || Cout % opts.groups != 0) {
        throw std::invalid_argument("conv2d: channels not divisible by groups");
    }
    if (Cg != Cin / opts.groups) {
        throw std::invalid_argument("conv2d: weight expects " + std::to_string(Cg) +
                                    " channels per group, input provides " +
                                    std::to_string(Cin / opts.groups));
    }
    if (b.defined() && (b.shape().rank() != 1 || b.shape()[0] != Cout)) {
        throw std::invalid_argument("conv2d: bias shape " + b.shape().str() + " != (" +
                                    std::to_string(Cout) + ")");
    }
    const Index OH = conv_out_extent(H, kh, opts.stride.h, opts.padding.h, opts.dilation.h);
    const Index OW = conv_out_extent(W, kw, opts.stride.w, opts.padding.w, opts.dilation.w);
    if (OH < 1 || OW < 1) {
        throw std::invalid_argument("conv2d: kernel does not fit input " + xs.str());
    }
    const Index G = opts.groups, Cog = Cout / G, K = Cg * kh * kw, P = OH * OW;

    Shape out_shape{N, Cout, OH, OW};
    std::vector<S> out(static_cast<std::size_t>(out_shape.count()));
    std::vector<S> col(static_cast<std::size_t>(K * P));
    for (Index n = 0; n < N; ++n) {
        const S* xp = x.data() + n * Cin * H * W;
        for (Index g = 0; g < G; ++g) {
            detail::im2col(xp, Cin, H, W, g * Cg, Cg, kh, kw, OH, OW, opts, col.data());
            Eigen::Map<const detail::RowMat<S>> Wm(w.data() + g * Cog * K, Cog, K);
            Eigen::Map<const detail::RowMat<S>> Cm(col.data(), K, P);
            Eigen::Map<detail::RowMat<S>> Ym(out.data() + (n * Cout + g * Cog) * P, Cog, P);
            Ym.noalias() = Wm * Cm;
        }
    }
    if (b.defined()) {
        const S* pb = b.data();
        for (Index n = 0; n < N; ++n)
            for (Index c = 0; c < Cout; ++c) {
                S* row = out.data() + (n * Cout + c) * P;
                const S bias = pb[c];
                for (Index p = 0; p < P; ++p) row[p] += bias;
            }
    }

    auto xn = x.handle();
    auto wn = w.handle();
    auto bn = b.defined() ? b.handle() : nullptr;
    auto run_backward = [xn, wn, bn, opts, N, Cin, H, W, Cout, Cg, kh, kw, OH, OW, G, Cog, K,
                         P](detail::Node<S>& self) {
        const bool need_x = xn->requires_grad;
        const bool need_w = wn->requires_grad;
        const bool need_b = bn && bn->requires_grad;
        if (need_x) xn->ensure_grad();
        if (need_w) wn->ensure_grad();
        if (need_b) bn->ensure_grad();
        std::vector<S> col(static_cast<std::size_t>(K * P));
        std::vector<S> dcol(static_cast<std::size_t>(K * P));
        for (Index n = 0; n < N; ++n) {
            const S* xp = xn->value.data() + n * Cin * H * W;
            for (Index g = 0; g < G; ++g) {
                Eigen::Map<const detail::RowMat<S>> Gm(
                    self.grad.data() + (n * Cout + g * Cog) * P, Cog, P);
                Eigen::Map<const detail::RowMat<S>> Wm(wn->value.data() + g * Cog * K, Cog, K);
                if (need_w) {
                    detail::im2col(xp, Cin, H, W, g * Cg, Cg, kh, kw, OH, OW, opts, col.data());
                    Eigen::Map<const detail::RowMat<S>> Cm(col.data(), K, P);
                    Eigen::Map<detail::RowMat<S>> dWm(wn->grad.data() + g * Cog * K, Cog, K);
                    dWm.noalias() += Gm * Cm.transpose();
                }
                if (need_x) {
                    Eigen::Map<detail::RowMat<S>> dCm(dcol.data(), K, P);
                    dCm.noalias() = Wm.transpose() * Gm;
                    detail::col2im(dcol.data(), Cin, H, W, g * Cg, Cg, kh, kw, OH, OW, opts,
                                   xn->grad.data() + n * Cin * H * W);
                }
            }
            if (need_b) {
                for (Index c = 0; c < Cout; ++c) {
                    const S* row = self.grad.data() + (n * Cout + c) * P;
                    S acc = 0;
                    for (Index p = 0; p < P; ++p) acc += row[p];
                    bn->grad[static_cast<std::size_t>(c)] += acc;
                }
            }
        }
    };
    if (b.defined()) {
        return detail::make_result<S>(out_shape, std::move(out), {x, w, b},
                                      std::move(run_backward));
    }
    return detail::make_result<S>(out_shape, std::move(out), {x, w}, std::move(run_backward));
}

/// Fully connected layer on token rows. x: [T,Din]; w: [Dout,Din];
/// b: [Dout] or undefined. Returns [T,Dout].
template <typename S>
Tensor<S> linear(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b) {
    const Shape& xs = x.shape();
    const Shape& ws = w.shape();
    if (xs.rank() != 2 || ws.rank() != 2) {
        throw std::invalid_argument("linear: expected rank-2 input and weight, got " + xs.str() +
                                    " and " + ws.str());
    }
    const Index T = xs[0], Din = xs[1], Dout = ws[0];
    if (ws[1] != Din) {
        throw std::invalid_argument("linear: weight " + ws.str() + " incompatible with input " +
                                    xs.str());
    }
    if (b.defined() && (b.shape().rank() != 1 || b.shape()[0] != Dout)) {
        throw std::invalid_argument("linear: bias shape " + b.shape().str() + " != (" +
                                    std::to_string(Dout) + ")");
    }
    Shape out_shape{T, Dout};
    std::vector<S> out(static_cast<std::size_t>(out_shape.count()));
    {
        Eigen::Map<const detail::RowMat<S>> Xm(x.data(), T, Din);
        Eigen::Map<const detail::RowMat<S>> Wm(w.data(), Dout, Din);
        Eigen::Map<detail::RowMat<S>> Ym(out.data(), T, Dout);
        Ym.noalias() = Xm * Wm.transpose();
        if (b.defined()) {
            Eigen::Map<const Eigen::Matrix<S, 1, Eigen::Dynamic>> Bm(b.data(), Dout);
            Ym.rowwise() += Bm;
        }
    }
    auto xn = x.handle();
    auto wn = w.handle();
    auto bn = b.defined() ? b.handle() : nullptr;
    auto run_backward = [xn, wn, bn, T, Din, Dout](detail::Node<S>& self) {
        Eigen::Map<const detail::RowMat<S>> Gm(self.grad.data(), T, Dout);
        if (xn->requires_grad) {
            xn->ensure_grad();
            Eigen::Map<const detail::RowMat<S>> Wm(wn->value.data(), Dout, Din);
            Eigen::Map<detail::RowMat<S>> dXm(xn->grad.data(), T, Din);
            dXm.noalias() += Gm * Wm;
        }
        if (wn->requires_grad) {
            wn->ensure_grad();
            Eigen::Map<const detail::RowMat<S>> Xm(xn->value.data(), T, Din);
            Eigen::Map<detail::RowMat<S>> dWm(wn->grad.data(), Dout, Din);
            dWm.noalias() += Gm.transpose() * Xm;
        }
        if (bn && bn->requires_grad) {
            bn->ensure_grad();
            Eigen::Map<Eigen::Matrix<S, 1, Eigen::Dynamic>> dBm(bn->grad.data(), Dout);
            dBm += Gm.colwise().sum();
        }
    };
    if (b.defined()) {
        return detail::make_result<S>(out_shape, std::move(out), {x, w, b},
                                      std::move(run_backward));
    }
    return detail::make_result<S>(out_shape, std::move(out), {x, w}, std::move(run_backward));
}

}  // namespace macmd
