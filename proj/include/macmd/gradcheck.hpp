#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "macmd/tensor.hpp"

namespace macmd {

/// Central-difference check of reverse-mode gradients. f must map the probe
/// tensor to a scalar; the probe's analytic gradient is compared per
/// coordinate against (f(x+h·e) − f(x−h·e)) / 2h and the worst relative
/// error |analytic − numeric| / max(|analytic|, |numeric|, 1e−8) is
/// returned. Intended to run at double precision.
///
/// max_coords > 0 probes only that many evenly strided coordinates — the
/// escape hatch for large inputs where every coordinate would cost two full
/// forward passes. Selection is deterministic.
template <typename S>
double grad_check(const std::function<Tensor<S>(const Tensor<S>&)>& f, Tensor<S>& x, S h,
                  Index max_coords = 0) {
    if (h <= S(0)) throw std::invalid_argument("grad_check: step must be positive");
    x.set_requires_grad(true);
    x.zero_grad();

    Tensor<S> y = f(x);
    if (y.size() != 1) {
        throw std::invalid_argument("grad_check: f must return a scalar, got shape " +
                                    y.shape().str());
    }
    backward(y);
    const std::vector<S> analytic = x.grad();

    std::vector<Index> coords;
    const Index n = x.size();
    if (max_coords <= 0 || max_coords >= n) {
        coords.resize(static_cast<std::size_t>(n));
        for (Index i = 0; i < n; ++i) coords[static_cast<std::size_t>(i)] = i;
    } else {
        const Index stride = n / max_coords;
        for (Index k = 0; k < max_coords; ++k) coords.push_back(k * stride);
        coords.push_back(n - 1);  // always probe the final coordinate
    }

    double worst = 0.0;
    S* data = x.data();
    for (Index i : coords) {
        const S saved = data[i];
        double plus, minus;
        {
            NoGradGuard ng;
            data[i] = saved + h;
            plus = static_cast<double>(f(x).item());
            data[i] = saved - h;
            minus = static_cast<double>(f(x).item());
            data[i] = saved;
        }
        const double numeric = (plus - minus) / (2.0 * static_cast<double>(h));
        const double a = static_cast<double>(analytic[static_cast<std::size_t>(i)]);
        const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
        worst = std::max(worst, std::abs(a - numeric) / denom);
    }
    return worst;
}

}  // namespace macmd
