#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "macmd/tensor.hpp"

namespace macmd {

template <typename S>
Tensor<S> relu(const Tensor<S>& x) {
    std::vector<S> out(x.values());
    for (auto& v : out) v = v > S(0) ? v : S(0);
    auto xn = x.handle();
    return detail::make_result<S>(x.shape(), std::move(out), {x}, [xn](detail::Node<S>& self) {
        xn->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            if (xn->value[i] > S(0)) xn->grad[i] += self.grad[i];
    });
}

template <typename S>
Tensor<S> sigmoid(const Tensor<S>& x) {
    std::vector<S> out(x.values());
    for (auto& v : out) v = S(1) / (S(1) + std::exp(-v));
    auto xn = x.handle();
    return detail::make_result<S>(x.shape(), std::move(out), {x}, [xn](detail::Node<S>& self) {
        xn->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            const S s = self.value[i];
            xn->grad[i] += self.grad[i] * s * (S(1) - s);
        }
    });
}

/// max(x,0)^2 — the squared-ReLU used inside the channel-mix feed-forward.
template <typename S>
Tensor<S> squared_relu(const Tensor<S>& x) {
    std::vector<S> out(x.values());
    for (auto& v : out) {
        const S r = v > S(0) ? v : S(0);
        v = r * r;
    }
    auto xn = x.handle();
    return detail::make_result<S>(x.shape(), std::move(out), {x}, [xn](detail::Node<S>& self) {
        xn->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            const S v = xn->value[i];
            if (v > S(0)) xn->grad[i] += self.grad[i] * S(2) * v;
        }
    });
}

/// Elementwise reciprocal; rejects zero entries rather than emitting inf.
template <typename S>
Tensor<S> recip(const Tensor<S>& x) {
    std::vector<S> out(x.values());
    for (auto& v : out) {
        if (v == S(0)) throw std::invalid_argument("recip: division by zero entry");
        v = S(1) / v;
    }
    auto xn = x.handle();
    return detail::make_result<S>(x.shape(), std::move(out), {x}, [xn](detail::Node<S>& self) {
        xn->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            const S r = self.value[i];
            xn->grad[i] -= self.grad[i] * r * r;
        }
    });
}

/// Row-wise softmax of a [T,K] matrix, max-shifted for stability.
template <typename S>
Tensor<S> softmax_rows(const Tensor<S>& x) {
    const Shape& xs = x.shape();
    if (xs.rank() != 2) throw std::invalid_argument("softmax_rows: rank-2 input required");
    const Index T = xs[0], K = xs[1];
    std::vector<S> out(static_cast<std::size_t>(xs.count()));
    const S* px = x.data();
    for (Index t = 0; t < T; ++t) {
        const S* row = px + t * K;
        S* dst = out.data() + t * K;
        S mx = row[0];
        for (Index k = 1; k < K; ++k) mx = std::max(mx, row[k]);
        S z = 0;
        for (Index k = 0; k < K; ++k) {
            dst[k] = std::exp(row[k] - mx);
            z += dst[k];
        }
        for (Index k = 0; k < K; ++k) dst[k] /= z;
    }
    auto xn = x.handle();
    return detail::make_result<S>(xs, std::move(out), {x}, [xn, T, K](detail::Node<S>& self) {
        xn->ensure_grad();
        for (Index t = 0; t < T; ++t) {
            const S* p = self.value.data() + t * K;
            const S* g = self.grad.data() + t * K;
            S dot = 0;
            for (Index k = 0; k < K; ++k) dot += p[k] * g[k];
            S* dst = xn->grad.data() + t * K;
            for (Index k = 0; k < K; ++k) dst[k] += p[k] * (g[k] - dot);
        }
    });
}

/// Softmax across the channel axis of a [N,C,H,W] map, independently per
/// spatial position.
template <typename S>
Tensor<S> softmax_channels(const Tensor<S>& x) {
    const Shape& xs = x.shape();
    if (xs.rank() != 4) throw std::invalid_argument("softmax_channels: rank-4 input required");
    const Index N = xs[0], C = xs[1], HW = xs[2] * xs[3];
    std::vector<S> out(static_cast<std::size_t>(xs.count()));
    const S* px = x.data();
    for (Index n = 0; n < N; ++n)
        for (Index i = 0; i < HW; ++i) {
            S mx = px[n * C * HW + i];
            for (Index c = 1; c < C; ++c) mx = std::max(mx, px[(n * C + c) * HW + i]);
            S z = 0;
            for (Index c = 0; c < C; ++c) {
                const S e = std::exp(px[(n * C + c) * HW + i] - mx);
                out[static_cast<std::size_t>((n * C + c) * HW + i)] = e;
                z += e;
            }
            for (Index c = 0; c < C; ++c) out[static_cast<std::size_t>((n * C + c) * HW + i)] /= z;
        }
    auto xn = x.handle();
    return detail::make_result<S>(xs, std::move(out), {x}, [xn, N, C, HW](detail::Node<S>& self) {
        xn->ensure_grad();
        for (Index n = 0; n < N; ++n)
            for (Index i = 0; i < HW; ++i) {
                S dot = 0;
                for (Index c = 0; c < C; ++c)
                    dot += self.value[(n * C + c) * HW + i] * self.grad[(n * C + c) * HW + i];
                for (Index c = 0; c < C; ++c) {
                    const S p = self.value[(n * C + c) * HW + i];
                    xn->grad[(n * C + c) * HW + i] += p * (self.grad[(n * C + c) * HW + i] - dot);
                }
            }
    });
}

/// Spatial mean per channel: [N,C,H,W] -> [N,C,1,1].
template <typename S>
Tensor<S> global_avg_pool(const Tensor<S>& x) {
    const Shape& xs = x.shape();
    if (xs.rank() != 4) throw std::invalid_argument("global_avg_pool: rank-4 input required");
    const Index N = xs[0], C = xs[1], HW = xs[2] * xs[3];
    std::vector<S> out(static_cast<std::size_t>(N * C));
    const S* px = x.data();
    for (Index n = 0; n < N; ++n)
        for (Index c = 0; c < C; ++c) {
            const S* plane = px + (n * C + c) * HW;
            S acc = 0;
            for (Index i = 0; i < HW; ++i) acc += plane[i];
            out[static_cast<std::size_t>(n * C + c)] = acc / S(HW);
        }
    auto xn = x.handle();
    return detail::make_result<S>(Shape{N, C, 1, 1}, std::move(out), {x},
                                  [xn, N, C, HW](detail::Node<S>& self) {
                                      xn->ensure_grad();
                                      for (Index n = 0; n < N; ++n)
                                          for (Index c = 0; c < C; ++c) {
                                              const S g = self.grad[n * C + c] / S(HW);
                                              S* dst = xn->grad.data() + (n * C + c) * HW;
                                              for (Index i = 0; i < HW; ++i) dst[i] += g;
                                          }
                                  });
}

/// Spatial max per channel: [N,C,H,W] -> [N,C,1,1]. Gradient flows to the
/// first maximal element of each plane.
template <typename S>
Tensor<S> global_max_pool(const Tensor<S>& x) {
    const Shape& xs = x.shape();
    if (xs.rank() != 4) throw std::invalid_argument("global_max_pool: rank-4 input required");
    const Index N = xs[0], C = xs[1], HW = xs[2] * xs[3];
    std::vector<S> out(static_cast<std::size_t>(N * C));
    std::vector<Index> arg(static_cast<std::size_t>(N * C));
    const S* px = x.data();
    for (Index n = 0; n < N; ++n)
        for (Index c = 0; c < C; ++c) {
            const S* plane = px + (n * C + c) * HW;
            Index best = 0;
            for (Index i = 1; i < HW; ++i)
                if (plane[i] > plane[best]) best = i;
            out[static_cast<std::size_t>(n * C + c)] = plane[best];
            arg[static_cast<std::size_t>(n * C + c)] = best;
        }
    auto xn = x.handle();
    return detail::make_result<S>(Shape{N, C, 1, 1}, std::move(out), {x},
                                  [xn, arg, N, C, HW](detail::Node<S>& self) {
                                      xn->ensure_grad();
                                      for (Index nc = 0; nc < N * C; ++nc)
                                          xn->grad[nc * HW + arg[static_cast<std::size_t>(nc)]] +=
                                              self.grad[static_cast<std::size_t>(nc)];
                                  });
}

/// Per-pixel mean over channels: [N,C,H,W] -> [N,1,H,W].
template <typename S>
Tensor<S> channel_mean(const Tensor<S>& x) {
    const Shape& xs = x.shape();
    if (xs.rank() != 4) throw std::invalid_argument("channel_mean: rank-4 input required");
    const Index N = xs[0], C = xs[1], HW = xs[2] * xs[3];
    std::vector<S> out(static_cast<std::size_t>(N * HW));
    const S* px = x.data();
    for (Index n = 0; n < N; ++n)
        for (Index i = 0; i < HW; ++i) {
            S acc = 0;
            for (Index c = 0; c < C; ++c) acc += px[(n * C + c) * HW + i];
            out[static_cast<std::size_t>(n * HW + i)] = acc / S(C);
        }
    auto xn = x.handle();
    return detail::make_result<S>(Shape{N, 1, xs[2], xs[3]}, std::move(out), {x},
                                  [xn, N, C, HW](detail::Node<S>& self) {
                                      xn->ensure_grad();
                                      for (Index n = 0; n < N; ++n)
                                          for (Index i = 0; i < HW; ++i) {
                                              const S g = self.grad[n * HW + i] / S(C);
                                              for (Index c = 0; c < C; ++c)
                                                  xn->grad[(n * C + c) * HW + i] += g;
                                          }
                                  });
}

/// Per-pixel max over channels: [N,C,H,W] -> [N,1,H,W]; gradient routes to
/// the first maximal channel.
template <typename S>
Tensor<S> channel_max(const Tensor<S>& x) {
    const Shape& xs = x.shape();
    if (xs.rank() != 4) throw std::invalid_argument("channel_max: rank-4 input required");
    const Index N = xs[0], C = xs[1], HW = xs[2] * xs[3];
    std::vector<S> out(static_cast<std::size_t>(N * HW));
    std::vector<Index> arg(static_cast<std::size_t>(N * HW));
    const S* px = x.data();
    for (Index n = 0; n < N; ++n)
        for (Index i = 0; i < HW; ++i) {
            Index best = 0;
            for (Index c = 1; c < C; ++c)
                if (px[(n * C + c) * HW + i] > px[(n * C + best) * HW + i]) best = c;
            out[static_cast<std::size_t>(n * HW + i)] = px[(n * C + best) * HW + i];
            arg[static_cast<std::size_t>(n * HW + i)] = best;
        }
    auto xn = x.handle();
    return detail::make_result<S>(Shape{N, 1, xs[2], xs[3]}, std::move(out), {x},
                                  [xn, arg, N, C, HW](detail::Node<S>& self) {
                                      xn->ensure_grad();
                                      for (Index n = 0; n < N; ++n)
                                          for (Index i = 0; i < HW; ++i)
                                              xn->grad[(n * C + arg[n * HW + i]) * HW + i] +=
                                                  self.grad[n * HW + i];
                                  });
}

namespace detail {

struct BilinearTap {
    Index lo;
    Index hi;
    double t;  // blend toward hi
};

inline std::vector<BilinearTap> bilinear_taps(Index in, Index out) {
    std::vector<BilinearTap> taps(static_cast<std::size_t>(out));
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    for (Index d = 0; d < out; ++d) {
        // Half-pixel-center sampling, clamped to the valid range so border
        // outputs replicate edge rows/columns.
        double s = (static_cast<double>(d) + 0.5) * scale - 0.5;
        s = std::min(std::max(s, 0.0), static_cast<double>(in - 1));
        const Index lo = static_cast<Index>(std::floor(s));
        const Index hi = std::min(lo + 1, in - 1);
        taps[static_cast<std::size_t>(d)] = {lo, hi, s - static_cast<double>(lo)};
    }
    return taps;
}

/// Bilinear resampling to an arbitrary target size (both directions).
template <typename S>
Tensor<S> bilinear_resize(const Tensor<S>& x, Index out_h, Index out_w) {
    const Shape& xs = x.shape();
    if (xs.rank() != 4) throw std::invalid_argument("bilinear_resize: rank-4 input required");
    if (out_h < 1 || out_w < 1) throw std::invalid_argument("bilinear_resize: empty target");
    const Index N = xs[0], C = xs[1], H = xs[2], W = xs[3];
    if (out_h == H && out_w == W) {
        // Identity target: pass values through untouched.
        std::vector<S> out(x.values());
        auto xn = x.handle();
        return make_result<S>(xs, std::move(out), {x}, [xn](Node<S>& self) {
            xn->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) xn->grad[i] += self.grad[i];
        });
    }
    const auto row_taps = bilinear_taps(H, out_h);
    const auto col_taps = bilinear_taps(W, out_w);
    Shape out_shape{N, C, out_h, out_w};
    std::vector<S> out(static_cast<std::size_t>(out_shape.count()));
    const S* px = x.data();
    for (Index nc = 0; nc < N * C; ++nc) {
        const S* plane = px + nc * H * W;
        S* dst = out.data() + nc * out_h * out_w;
        for (Index oh = 0; oh < out_h; ++oh) {
            const auto& rt = row_taps[static_cast<std::size_t>(oh)];
            const S th = static_cast<S>(rt.t);
            for (Index ow = 0; ow < out_w; ++ow) {
                const auto& ct = col_taps[static_cast<std::size_t>(ow)];
                const S tw = static_cast<S>(ct.t);
                const S v00 = plane[rt.lo * W + ct.lo];
                const S v01 = plane[rt.lo * W + ct.hi];
                const S v10 = plane[rt.hi * W + ct.lo];
                const S v11 = plane[rt.hi * W + ct.hi];
                dst[oh * out_w + ow] = (S(1) - th) * ((S(1) - tw) * v00 + tw * v01) +
                                       th * ((S(1) - tw) * v10 + tw * v11);
            }
        }
    }
    auto xn = x.handle();
    return make_result<S>(
        out_shape, std::move(out), {x},
        [xn, row_taps, col_taps, N, C, H, W, out_h, out_w](Node<S>& self) {
            xn->ensure_grad();
            for (Index nc = 0; nc < N * C; ++nc) {
                S* dplane = xn->grad.data() + nc * H * W;
                const S* g = self.grad.data() + nc * out_h * out_w;
                for (Index oh = 0; oh < out_h; ++oh) {
                    const auto& rt = row_taps[static_cast<std::size_t>(oh)];
                    const S th = static_cast<S>(rt.t);
                    for (Index ow = 0; ow < out_w; ++ow) {
                        const auto& ct = col_taps[static_cast<std::size_t>(ow)];
                        const S tw = static_cast<S>(ct.t);
                        const S gv = g[oh * out_w + ow];
                        dplane[rt.lo * W + ct.lo] += (S(1) - th) * (S(1) - tw) * gv;
                        dplane[rt.lo * W + ct.hi] += (S(1) - th) * tw * gv;
                        dplane[rt.hi * W + ct.lo] += th * (S(1) - tw) * gv;
                        dplane[rt.hi * W + ct.hi] += th * tw * gv;
                    }
                }
            }
        });
}

}  // namespace detail

/// Bilinear enlargement with half-pixel centers and edge clamping. The
/// public op only grows maps; decoder paths never shrink through it.
template <typename S>
Tensor<S> bilinear_upsample(const Tensor<S>& x, Index out_h, Index out_w) {
    const Shape& xs = x.shape();
    if (xs.rank() != 4) throw std::invalid_argument("bilinear_upsample: rank-4 input required");
    if (out_h < xs[2] || out_w < xs[3]) {
        throw std::invalid_argument("bilinear_upsample: target " + std::to_string(out_h) + "x" +
                                    std::to_string(out_w) + " smaller than input " + xs.str());
    }
    return detail::bilinear_resize(x, out_h, out_w);
}

}  // namespace macmd
