#include "macmd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace macmd {

namespace {

struct Point {
    Index h, w;
};

/// In-mask pixels with a 4-neighbor outside the mask, where pixels beyond
/// the image edge count as outside.
std::vector<Point> boundary_pixels(const std::vector<int>& labels, Index n0, Index H, Index W,
                                   int cls) {
    std::vector<Point> pts;
    const int* base = labels.data() + n0 * H * W;
    auto inside = [&](Index h, Index w) {
        return h >= 0 && h < H && w >= 0 && w < W && base[h * W + w] == cls;
    };
    for (Index h = 0; h < H; ++h)
        for (Index w = 0; w < W; ++w) {
            if (base[h * W + w] != cls) continue;
            if (!inside(h - 1, w) || !inside(h + 1, w) || !inside(h, w - 1) || !inside(h, w + 1))
                pts.push_back({h, w});
        }
    return pts;
}

void nearest_distances(const std::vector<Point>& from, const std::vector<Point>& to,
                       std::vector<double>& out) {
    for (const auto& a : from) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& b : to) {
            const double dh = static_cast<double>(a.h - b.h);
            const double dw = static_cast<double>(a.w - b.w);
            best = std::min(best, dh * dh + dw * dw);
        }
        out.push_back(std::sqrt(best));
    }
}

/// Nearest-rank percentile of an unsorted sample: the ceil(q*n)-th smallest.
double nearest_rank_percentile(std::vector<double> values, double q) {
    std::sort(values.begin(), values.end());
    const auto n = static_cast<std::ptrdiff_t>(values.size());
    std::ptrdiff_t rank = static_cast<std::ptrdiff_t>(
        std::ceil(q * static_cast<double>(n)));
    rank = std::max<std::ptrdiff_t>(1, std::min(rank, n));
    return values[static_cast<std::size_t>(rank - 1)];
}

}  // namespace

MetricsReport compute_metrics(const MaskBatch& pred, const MaskBatch& truth, Index num_classes) {
    if (pred.n != truth.n || pred.h != truth.h || pred.w != truth.w) {
        throw std::invalid_argument("compute_metrics: prediction batch " + std::to_string(pred.n) +
                                    "x" + std::to_string(pred.h) + "x" + std::to_string(pred.w) +
                                    " does not match truth " + std::to_string(truth.n) + "x" +
                                    std::to_string(truth.h) + "x" + std::to_string(truth.w));
    }
    const Index K = num_classes == 1 ? 2 : num_classes;  // sigmoid masks are two-valued
    pred.validate(K);
    truth.validate(K);

    MetricsReport rep;
    rep.dsc.resize(static_cast<std::size_t>(K));
    rep.hd95.resize(static_cast<std::size_t>(K));

    const Index total = pred.size();
    Index matches = 0;
    for (Index i = 0; i < total; ++i) {
        if (pred.labels[static_cast<std::size_t>(i)] == truth.labels[static_cast<std::size_t>(i)])
            ++matches;
    }
    rep.acc = static_cast<double>(matches) / static_cast<double>(total);

    for (Index c = 0; c < K; ++c) {
        const int cls = static_cast<int>(c);
        Index inter = 0, p_count = 0, y_count = 0;
        for (Index i = 0; i < total; ++i) {
            const bool in_p = pred.labels[static_cast<std::size_t>(i)] == cls;
            const bool in_y = truth.labels[static_cast<std::size_t>(i)] == cls;
            p_count += in_p;
            y_count += in_y;
            inter += (in_p && in_y);
        }
        rep.dsc[static_cast<std::size_t>(c)] =
            (p_count + y_count == 0)
                ? 1.0
                : 2.0 * static_cast<double>(inter) / static_cast<double>(p_count + y_count);

        // Boundary distances pooled across the batch; boundaries never span
        // image borders.
        std::vector<double> dists;
        bool p_any = false, y_any = false;
        for (Index n = 0; n < pred.n; ++n) {
            const auto pb = boundary_pixels(pred.labels, n, pred.h, pred.w, cls);
            const auto yb = boundary_pixels(truth.labels, n, truth.h, truth.w, cls);
            p_any = p_any || !pb.empty();
            y_any = y_any || !yb.empty();
            if (!pb.empty() && !yb.empty()) {
                nearest_distances(pb, yb, dists);
                nearest_distances(yb, pb, dists);
            }
        }
        if (!p_any && !y_any) {
            rep.hd95[static_cast<std::size_t>(c)] = 0.0;
        } else if (dists.empty()) {
            rep.hd95[static_cast<std::size_t>(c)] = std::numeric_limits<double>::quiet_NaN();
        } else {
            rep.hd95[static_cast<std::size_t>(c)] = nearest_rank_percentile(std::move(dists), 0.95);
        }
    }

    double fg_sum = 0.0;
    for (Index c = 1; c < K; ++c) fg_sum += rep.dsc[static_cast<std::size_t>(c)];
    rep.mean_dsc = (K > 1) ? fg_sum / static_cast<double>(K - 1) : rep.dsc[0];
    return rep;
}

}  // namespace macmd
