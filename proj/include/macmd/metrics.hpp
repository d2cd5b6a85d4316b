#pragma once

#include <vector>

#include "macmd/mask.hpp"
#include "macmd/tensor.hpp"

namespace macmd {

/// Per-class overlap and boundary-distance scores for one mask pair (or a
/// pooled batch). hd95 entries are NaN when exactly one of the two class
/// masks is empty (the distance set is undefined there).
struct MetricsReport {
    std::vector<double> dsc;   // size K; index 0 is background
    std::vector<double> hd95;  // size K; NaN = undefined
    double mean_dsc = 0.0;     // mean over classes 1..K-1
    double acc = 0.0;          // fraction of matching pixels
};

/// Brute-force metrics: DSC = 2|P∩Y|/(|P|+|Y|) (1 when both empty), HD95 =
/// nearest-rank 95th percentile of the pooled symmetric nearest-boundary
/// distances (0 when both empty), acc = matching-pixel fraction. Boundary
/// pixels are in-mask pixels with a 4-neighbor outside the mask or outside
/// the image.
MetricsReport compute_metrics(const MaskBatch& pred, const MaskBatch& truth, Index num_classes);

/// Hard labels from [N,K,H,W] class logits: per-pixel argmax (first maximum
/// wins), or the 0.5 sigmoid threshold when K == 1.
template <typename S>
MaskBatch argmax_labels(const Tensor<S>& logits) {
    const Shape& s = logits.shape();
    if (s.rank() != 4) {
        throw std::invalid_argument("argmax_labels: expected [N,K,H,W] logits, got " + s.str());
    }
    const Index N = s[0], K = s[1], H = s[2], W = s[3];
    MaskBatch mb;
    mb.n = N;
    mb.h = H;
    mb.w = W;
    mb.labels.resize(static_cast<std::size_t>(N * H * W));
    const S* v = logits.data();
    const Index plane = H * W;
    for (Index n = 0; n < N; ++n)
        for (Index i = 0; i < plane; ++i) {
            const S* px = v + n * K * plane + i;
            int best = 0;
            if (K == 1) {
                best = px[0] > S(0) ? 1 : 0;  // sigmoid(z) > 0.5
            } else {
                S top = px[0];
                for (Index c = 1; c < K; ++c) {
                    if (px[c * plane] > top) {
                        top = px[c * plane];
                        best = static_cast<int>(c);
                    }
                }
            }
            mb.labels[static_cast<std::size_t>(n * plane + i)] = best;
        }
    return mb;
}

}  // namespace macmd
