#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "macmd/tensor.hpp"

namespace macmd {

/// Running statistics and mode carried by a batch-norm layer. The stats are
/// buffers, not learnable parameters: updated as a side effect of
/// training-mode forward, serialized with checkpoints, never differentiated.
template <typename S>
struct NormState {
    std::vector<S> running_mean;
    std::vector<S> running_var;
    S momentum = S(0.1);
    S eps = S(1e-5);
    bool training = true;

    explicit NormState(Index channels)
        : running_mean(static_cast<std::size_t>(channels), S(0)),
          running_var(static_cast<std::size_t>(channels), S(1)) {
        if (eps <= S(0)) throw std::invalid_argument("NormState: epsilon must be positive");
    }
};

/// Per-channel batch normalization over (N,H,W). Training mode normalizes
/// with the current batch's population statistics and folds them into the
/// running buffers (running = (1-m)*running + m*batch); eval mode normalizes
/// with the buffers and needs no batch statistics at all.
template <typename S>
Tensor<S> batch_norm(const Tensor<S>& x, const Tensor<S>& gain, const Tensor<S>& bias,
                     NormState<S>& state) {
    const bool training = state.training;
    const Shape& xs = x.shape();
    if (xs.rank() != 4) throw std::invalid_argument("batch_norm: rank-4 input required");
    const Index N = xs[0], C = xs[1], H = xs[2], W = xs[3], HW = H * W;
    if (gain.shape().rank() != 1 || gain.shape()[0] != C || bias.shape().rank() != 1 ||
        bias.shape()[0] != C) {
        throw std::invalid_argument("batch_norm: gain/bias must be (" + std::to_string(C) + ")");
    }
    if (static_cast<Index>(state.running_mean.size()) != C) {
        throw std::invalid_argument("batch_norm: state sized for " +
                                    std::to_string(state.running_mean.size()) + " channels, got " +
                                    std::to_string(C));
    }
    const Index M = N * HW;  // elements per channel
    const S* px = x.data();
    const S* pg = gain.data();
    const S* pb = bias.data();

    std::vector<S> mean(static_cast<std::size_t>(C));
    std::vector<S> inv_std(static_cast<std::size_t>(C));
    if (training) {
        for (Index c = 0; c < C; ++c) {
            S m = 0;
            for (Index n = 0; n < N; ++n) {
                const S* plane = px + (n * C + c) * HW;
                for (Index i = 0; i < HW; ++i) m += plane[i];
            }
            m /= S(M);
            S v = 0;
            for (Index n = 0; n < N; ++n) {
                const S* plane = px + (n * C + c) * HW;
                for (Index i = 0; i < HW; ++i) {
                    const S d = plane[i] - m;
                    v += d * d;
                }
            }
            v /= S(M);
            mean[static_cast<std::size_t>(c)] = m;
            inv_std[static_cast<std::size_t>(c)] = S(1) / std::sqrt(v + state.eps);
            state.running_mean[static_cast<std::size_t>(c)] =
                (S(1) - state.momentum) * state.running_mean[static_cast<std::size_t>(c)] +
                state.momentum * m;
            state.running_var[static_cast<std::size_t>(c)] =
                (S(1) - state.momentum) * state.running_var[static_cast<std::size_t>(c)] +
                state.momentum * v;
        }
    } else {
        for (Index c = 0; c < C; ++c) {
            mean[static_cast<std::size_t>(c)] = state.running_mean[static_cast<std::size_t>(c)];
            inv_std[static_cast<std::size_t>(c)] =
                S(1) / std::sqrt(state.running_var[static_cast<std::size_t>(c)] + state.eps);
        }
    }

    std::vector<S> out(static_cast<std::size_t>(xs.count()));
    for (Index n = 0; n < N; ++n)
        for (Index c = 0; c < C; ++c) {
            const S* plane = px + (n * C + c) * HW;
            S* dst = out.data() + (n * C + c) * HW;
            const S m = mean[static_cast<std::size_t>(c)];
            const S is = inv_std[static_cast<std::size_t>(c)];
            const S g = pg[c], b = pb[c];
            for (Index i = 0; i < HW; ++i) dst[i] = g * (plane[i] - m) * is + b;
        }

    auto xn = x.handle();
    auto gn = gain.handle();
    auto bn = bias.handle();
    return detail::make_result<S>(
        xs, std::move(out), {x, gain, bias},
        [xn, gn, bn, mean, inv_std, training, N, C, HW, M](detail::Node<S>& self) {
            const bool need_x = xn->requires_grad;
            const bool need_g = gn->requires_grad;
            const bool need_b = bn->requires_grad;
            if (need_x) xn->ensure_grad();
            if (need_g) gn->ensure_grad();
            if (need_b) bn->ensure_grad();
            const S* px = xn->value.data();
            const S* pg = gn->value.data();
            for (Index c = 0; c < C; ++c) {
                const S m = mean[static_cast<std::size_t>(c)];
                const S is = inv_std[static_cast<std::size_t>(c)];
                // Channel-wide reductions of dy and dy*xhat feed both the
                // parameter grads and (in training mode) the batch-stat
                // terms of dx.
                S sum_dy = 0, sum_dy_xhat = 0;
                for (Index n = 0; n < N; ++n) {
                    const S* gp = self.grad.data() + (n * C + c) * HW;
                    const S* vp = px + (n * C + c) * HW;
                    for (Index i = 0; i < HW; ++i) {
                        sum_dy += gp[i];
                        sum_dy_xhat += gp[i] * (vp[i] - m) * is;
                    }
                }
                if (need_g) gn->grad[static_cast<std::size_t>(c)] += sum_dy_xhat;
                if (need_b) bn->grad[static_cast<std::size_t>(c)] += sum_dy;
                if (!need_x) continue;
                const S g = pg[c];
                if (training) {
                    const S mean_dy = sum_dy / S(M);
                    const S mean_dy_xhat = sum_dy_xhat / S(M);
                    for (Index n = 0; n < N; ++n) {
                        const S* gp = self.grad.data() + (n * C + c) * HW;
                        const S* vp = px + (n * C + c) * HW;
                        S* dp = xn->grad.data() + (n * C + c) * HW;
                        for (Index i = 0; i < HW; ++i) {
                            const S xhat = (vp[i] - m) * is;
                            dp[i] += g * is * (gp[i] - mean_dy - xhat * mean_dy_xhat);
                        }
                    }
                } else {
                    // Running stats are constants in eval mode, so the map
                    // is a plain per-channel affine.
                    for (Index n = 0; n < N; ++n) {
                        const S* gp = self.grad.data() + (n * C + c) * HW;
                        S* dp = xn->grad.data() + (n * C + c) * HW;
                        for (Index i = 0; i < HW; ++i) dp[i] += g * is * gp[i];
                    }
                }
            }
        });
}

/// Per-row layer normalization of token matrices [T,D]: each row is centered
/// and scaled by its own population statistics over the D features, then
/// passed through the learnable per-feature affine.
template <typename S>
Tensor<S> layer_norm(const Tensor<S>& x, const Tensor<S>& gain, const Tensor<S>& bias,
                     S eps = S(1e-6)) {
    const Shape& xs = x.shape();
    if (xs.rank() != 2) throw std::invalid_argument("layer_norm: rank-2 input required");
    const Index T = xs[0], D = xs[1];
    if (gain.shape().rank() != 1 || gain.shape()[0] != D || bias.shape().rank() != 1 ||
        bias.shape()[0] != D) {
        throw std::invalid_argument("layer_norm: gain/bias must be (" + std::to_string(D) + ")");
    }
    const S* px = x.data();
    const S* pg = gain.data();
    const S* pb = bias.data();
    std::vector<S> out(static_cast<std::size_t>(xs.count()));
    std::vector<S> inv_std(static_cast<std::size_t>(T));
    std::vector<S> mean(static_cast<std::size_t>(T));
    for (Index t = 0; t < T; ++t) {
        const S* row = px + t * D;
        S m = 0;
        for (Index d = 0; d < D; ++d) m += row[d];
        m /= S(D);
        S v = 0;
        for (Index d = 0; d < D; ++d) {
            const S diff = row[d] - m;
            v += diff * diff;
        }
        v /= S(D);
        const S is = S(1) / std::sqrt(v + eps);
        mean[static_cast<std::size_t>(t)] = m;
        inv_std[static_cast<std::size_t>(t)] = is;
        S* dst = out.data() + t * D;
        for (Index d = 0; d < D; ++d) dst[d] = pg[d] * (row[d] - m) * is + pb[d];
    }
    auto xn = x.handle();
    auto gn = gain.handle();
    auto bn = bias.handle();
    return detail::make_result<S>(
        xs, std::move(out), {x, gain, bias},
        [xn, gn, bn, mean, inv_std, T, D](detail::Node<S>& self) {
            const bool need_x = xn->requires_grad;
            const bool need_g = gn->requires_grad;
            const bool need_b = bn->requires_grad;
            if (need_x) xn->ensure_grad();
            if (need_g) gn->ensure_grad();
            if (need_b) bn->ensure_grad();
            const S* px = xn->value.data();
            const S* pg = gn->value.data();
            for (Index t = 0; t < T; ++t) {
                const S* row = px + t * D;
                const S* gp = self.grad.data() + t * D;
                const S m = mean[static_cast<std::size_t>(t)];
                const S is = inv_std[static_cast<std::size_t>(t)];
                S mean_dyh = 0, mean_dyh_xhat = 0;
                for (Index d = 0; d < D; ++d) {
                    const S xhat = (row[d] - m) * is;
                    const S dyh = gp[d] * pg[d];
                    mean_dyh += dyh;
                    mean_dyh_xhat += dyh * xhat;
                    if (need_g) gn->grad[static_cast<std::size_t>(d)] += gp[d] * xhat;
                    if (need_b) bn->grad[static_cast<std::size_t>(d)] += gp[d];
                }
                if (!need_x) continue;
                mean_dyh /= S(D);
                mean_dyh_xhat /= S(D);
                S* dp = xn->grad.data() + t * D;
                for (Index d = 0; d < D; ++d) {
                    const S xhat = (row[d] - m) * is;
                    dp[d] += is * (gp[d] * pg[d] - mean_dyh - xhat * mean_dyh_xhat);
                }
            }
        });
}

}  // namespace macmd
