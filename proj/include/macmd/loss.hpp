#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "macmd/mask.hpp"
#include "macmd/ops.hpp"

namespace macmd {

struct LossWeights {
    double alpha = 1.0;  // cross-entropy weight
    double beta = 1.0;   // dice weight

    void validate() const {
        if (alpha < 0 || beta < 0) {
            throw std::invalid_argument("LossWeights: negative weight");
        }
        if (alpha == 0 && beta == 0) {
            throw std::invalid_argument("LossWeights: at least one weight must be positive");
        }
    }
};

/// Mean per-pixel cross entropy of class logits against integer labels.
/// With a single logit channel the binary sigmoid form is used and labels
/// must be 0/1. Computed via log-sum-exp for stability.
template <typename S>
Tensor<S> ce_loss(const Tensor<S>& logits, const MaskBatch& y) {
    const Shape& ls = logits.shape();
    if (ls.rank() != 4) throw std::invalid_argument("ce_loss: rank-4 logits required");
    const Index N = ls[0], K = ls[1], H = ls[2], W = ls[3];
    if (y.n != N || y.h != H || y.w != W) {
        throw std::invalid_argument("ce_loss: labels " + std::to_string(y.n) + "x" +
                                    std::to_string(y.h) + "x" + std::to_string(y.w) +
                                    " do not match logits " + ls.str());
    }
    y.validate(K);
    const Index M = N * H * W, HW = H * W;
    const S* pz = logits.data();
    double total = 0.0;
    if (K == 1) {
        for (Index i = 0; i < M; ++i) {
            const double z = static_cast<double>(pz[i]);
            const double yv = static_cast<double>(y.labels[static_cast<std::size_t>(i)]);
            total += std::max(z, 0.0) - yv * z + std::log1p(std::exp(-std::abs(z)));
        }
    } else {
        for (Index n = 0; n < N; ++n)
            for (Index i = 0; i < HW; ++i) {
                const S* col = pz + n * K * HW + i;
                double mx = static_cast<double>(col[0]);
                for (Index c = 1; c < K; ++c)
                    mx = std::max(mx, static_cast<double>(col[c * HW]));
                double z = 0.0;
                for (Index c = 0; c < K; ++c)
                    z += std::exp(static_cast<double>(col[c * HW]) - mx);
                const int t = y.labels[static_cast<std::size_t>(n * HW + i)];
                total += mx + std::log(z) - static_cast<double>(col[Index(t) * HW]);
            }
    }
    const S value = static_cast<S>(total / static_cast<double>(M));
    auto zn = logits.handle();
    auto labels = y.labels;
    return detail::make_result<S>(
        Shape{1}, std::vector<S>{value}, {logits},
        [zn, labels, N, K, H, W, HW, M](detail::Node<S>& self) {
            zn->ensure_grad();
            const S g = self.grad[0] / S(M);
            const S* pz = zn->value.data();
            if (K == 1) {
                for (Index i = 0; i < M; ++i) {
                    const S s = S(1) / (S(1) + std::exp(-pz[i]));
                    zn->grad[static_cast<std::size_t>(i)] +=
                        g * (s - S(labels[static_cast<std::size_t>(i)]));
                }
                return;
            }
            for (Index n = 0; n < N; ++n)
                for (Index i = 0; i < HW; ++i) {
                    const S* col = pz + n * K * HW + i;
                    S mx = col[0];
                    for (Index c = 1; c < K; ++c) mx = std::max(mx, col[c * HW]);
                    S z = 0;
                    for (Index c = 0; c < K; ++c) z += std::exp(col[c * HW] - mx);
                    const int t = labels[static_cast<std::size_t>(n * HW + i)];
                    for (Index c = 0; c < K; ++c) {
                        const S p = std::exp(col[c * HW] - mx) / z;
                        zn->grad[(n * K + c) * HW + i] += g * (p - S(c == Index(t) ? 1 : 0));
                    }
                }
        });
}

/// Soft dice loss over softmax probabilities (sigmoid for a single logit
/// channel): per class, dice = (2*sum(p*y) + eps) / (sum(p) + sum(y) + eps)
/// with eps = 1, sums pooled over the whole batch; the loss is one minus
/// the mean over ALL classes, background included.
template <typename S>
Tensor<S> dice_loss(const Tensor<S>& logits, const MaskBatch& y, S eps = S(1)) {
    const Shape& ls = logits.shape();
    if (ls.rank() != 4) throw std::invalid_argument("dice_loss: rank-4 logits required");
    const Index N = ls[0], K = ls[1], H = ls[2], W = ls[3], HW = H * W;
    if (y.n != N || y.h != H || y.w != W) {
        throw std::invalid_argument("dice_loss: labels " + std::to_string(y.n) + "x" +
                                    std::to_string(y.h) + "x" + std::to_string(y.w) +
                                    " do not match logits " + ls.str());
    }
    y.validate(K);
    Tensor<S> probs = (K == 1) ? sigmoid(logits) : softmax_channels(logits);
    Tensor<S> acc;
    for (Index c = 0; c < K; ++c) {
        // One-hot plane for class c as a constant (no gradient flows to labels).
        std::vector<S> onehot(static_cast<std::size_t>(N * HW));
        S y_count = 0;
        for (Index n = 0; n < N; ++n)
            for (Index i = 0; i < HW; ++i) {
                const int label = y.labels[static_cast<std::size_t>(n * HW + i)];
                // K == 1: the single sigmoid channel scores the foreground.
                const bool hit = (K == 1) ? (label == 1) : (label == int(c));
                onehot[static_cast<std::size_t>(n * HW + i)] = hit ? S(1) : S(0);
                if (hit) y_count += S(1);
            }
        Tensor<S> yc = Tensor<S>::from_data(Shape{N, 1, H, W}, std::move(onehot));
        Tensor<S> pc = (K == 1) ? probs : slice_channels(probs, c, 1);
        Tensor<S> numer = affine(sum(mul(pc, yc)), S(2), eps);
        Tensor<S> denom = affine(sum(pc), S(1), y_count + eps);
        Tensor<S> dice_c = mul(numer, recip(denom));
        acc = acc.defined() ? add(acc, dice_c) : dice_c;
    }
    return affine(acc, S(-1) / S(K), S(1));  // 1 - mean dice
}

/// alpha * CE + beta * Dice.
template <typename S>
Tensor<S> composite_loss(const Tensor<S>& logits, const MaskBatch& y, const LossWeights& w) {
    w.validate();
    return add(affine(ce_loss(logits, y), static_cast<S>(w.alpha), S(0)),
               affine(dice_loss(logits, y), static_cast<S>(w.beta), S(0)));
}

/// Deep-supervision objective: the plain sum of the three maps' composite
/// losses against the shared labels.
template <typename S>
Tensor<S> total_loss(const Tensor<S>& p1, const Tensor<S>& p2, const Tensor<S>& p3,
                     const MaskBatch& y, const LossWeights& w) {
    return add(add(composite_loss(p1, y, w), composite_loss(p2, y, w)),
               composite_loss(p3, y, w));
}

}  // namespace macmd
