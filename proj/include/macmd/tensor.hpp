#pragma once

#include <algorithm>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "macmd/shape.hpp"

namespace macmd {

namespace detail {

template <typename S>
struct Node {
    Shape shape;
    std::vector<S> value;
    std::vector<S> grad;  // allocated on demand, same length as value
    bool requires_grad = false;
    bool backward_ran = false;  // set on the node backward() was called on
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backprop;  // pulls from this->grad into parents

    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), S(0));
    }
};

inline int& nograd_depth() {
    thread_local int depth = 0;
    return depth;
}

}  // namespace detail

inline bool grad_enabled() { return detail::nograd_depth() == 0; }

/// Scoped switch that stops ops from recording the backward graph.
struct NoGradGuard {
    NoGradGuard() { ++detail::nograd_depth(); }
    ~NoGradGuard() { --detail::nograd_depth(); }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

/// Dense rank-1..4 tensor handle with an attached reverse-mode record.
/// Copying a Tensor copies the handle: both refer to the same node, which is
/// what lets free functions chain into a graph without ownership ceremony.
template <typename S>
class Tensor {
public:
    using Scalar = S;

    Tensor() = default;

    static Tensor zeros(const Shape& shape, bool requires_grad = false) {
        return Tensor(shape, std::vector<S>(static_cast<std::size_t>(shape.count()), S(0)),
                      requires_grad);
    }

    static Tensor full(const Shape& shape, S fill, bool requires_grad = false) {
        return Tensor(shape, std::vector<S>(static_cast<std::size_t>(shape.count()), fill),
                      requires_grad);
    }

    static Tensor from_data(const Shape& shape, std::vector<S> data, bool requires_grad = false) {
        if (static_cast<Index>(data.size()) != shape.count()) {
            throw std::invalid_argument("Tensor: data length " + std::to_string(data.size()) +
                                        " does not match shape " + shape.str());
        }
        return Tensor(shape, std::move(data), requires_grad);
    }

    static Tensor scalar(S v, bool requires_grad = false) {
        return Tensor(Shape{1}, std::vector<S>{v}, requires_grad);
    }

    bool defined() const { return n_ != nullptr; }
    const Shape& shape() const { return node().shape; }
    Index size() const { return static_cast<Index>(node().value.size()); }

    const S* data() const { return node().value.data(); }
    S* data() { return node().value.data(); }
    const std::vector<S>& values() const { return node().value; }
    std::vector<S>& values() { return node().value; }

    S item() const {
        if (size() != 1) {
            throw std::invalid_argument("Tensor::item: tensor has " + std::to_string(size()) +
                                        " elements, expected 1");
        }
        return node().value[0];
    }

    S at(Index n, Index c, Index h, Index w) const {
        const Shape& s = shape();
        if (s.rank() != 4) throw std::invalid_argument("Tensor::at: rank-4 accessor on " + s.str());
        return node().value[static_cast<std::size_t>(((n * s[1] + c) * s[2] + h) * s[3] + w)];
    }
    S at(Index r, Index c) const {
        const Shape& s = shape();
        if (s.rank() != 2) throw std::invalid_argument("Tensor::at: rank-2 accessor on " + s.str());
        return node().value[static_cast<std::size_t>(r * s[1] + c)];
    }

    bool requires_grad() const { return node().requires_grad; }
    void set_requires_grad(bool flag) { node().requires_grad = flag; }

    const std::vector<S>& grad() const {
        const auto& nd = node();
        if (nd.grad.size() != nd.value.size()) {
            throw std::runtime_error("Tensor::grad: gradient not populated; run backward first");
        }
        return nd.grad;
    }

    void zero_grad() {
        auto& nd = node();
        nd.grad.assign(nd.value.size(), S(0));
        nd.backward_ran = false;
    }

    detail::Node<S>* node_ptr() const { return n_.get(); }
    const std::shared_ptr<detail::Node<S>>& handle() const { return n_; }

    static Tensor wrap(std::shared_ptr<detail::Node<S>> n) {
        Tensor t;
        t.n_ = std::move(n);
        return t;
    }

private:
    Tensor(const Shape& shape, std::vector<S> data, bool requires_grad)
        : n_(std::make_shared<detail::Node<S>>()) {
        n_->shape = shape;
        n_->value = std::move(data);
        n_->requires_grad = requires_grad;
    }

    detail::Node<S>& node() const {
        if (!n_) throw std::runtime_error("Tensor: use of an undefined tensor");
        return *n_;
    }

    std::shared_ptr<detail::Node<S>> n_;
};

namespace detail {

/// Creates the result node of an op, attaching parents and the backward
/// closure only when gradient recording is on and some parent needs it.
template <typename S>
Tensor<S> make_result(const Shape& shape, std::vector<S> value,
                      std::initializer_list<Tensor<S>> parents,
                      std::function<void(Node<S>&)> backprop) {
    auto out = Tensor<S>::from_data(shape, std::move(value));
    bool track = grad_enabled();
    if (track) {
        bool any = false;
        for (const auto& p : parents) any = any || p.node_ptr()->requires_grad;
        track = any;
    }
    if (track) {
        auto* nd = out.node_ptr();
        nd->requires_grad = true;
        for (const auto& p : parents) nd->parents.push_back(p.handle());
        nd->backprop = std::move(backprop);
    }
    return out;
}

template <typename S>
Tensor<S> make_result(const Shape& shape, std::vector<S> value,
                      const std::vector<Tensor<S>>& parents,
                      std::function<void(Node<S>&)> backprop) {
    auto out = Tensor<S>::from_data(shape, std::move(value));
    bool track = grad_enabled();
    if (track) {
        bool any = false;
        for (const auto& p : parents) any = any || p.node_ptr()->requires_grad;
        track = any;
    }
    if (track) {
        auto* nd = out.node_ptr();
        nd->requires_grad = true;
        for (const auto& p : parents) nd->parents.push_back(p.handle());
        nd->backprop = std::move(backprop);
    }
    return out;
}

}  // namespace detail

/// Reverse-mode sweep from a scalar loss. Gradients accumulate into every
/// reachable node that requires them; leaves keep their grads after the
/// graph itself is dropped. A second sweep from the same node is rejected
/// (it would double-accumulate) until zero_grad resets it.
template <typename S>
void backward(const Tensor<S>& loss) {
    if (!loss.defined()) throw std::invalid_argument("backward: undefined tensor");
    auto* root = loss.node_ptr();
    if (loss.size() != 1) {
        throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                    loss.shape().str());
    }
    if (!root->requires_grad) {
        throw std::invalid_argument("backward: loss does not require gradients");
    }
    if (root->backward_ran) {
        throw std::runtime_error("backward: called twice on the same loss without reset");
    }
    root->backward_ran = true;

    // Iterative post-order DFS; the resulting topological order is fixed by
    // parent registration order, keeping accumulation deterministic.
    std::vector<detail::Node<S>*> order;
    std::unordered_set<detail::Node<S>*> seen;
    struct Frame {
        detail::Node<S>* node;
        std::size_t next_parent;
    };
    std::vector<Frame> stack;
    stack.push_back({root, 0});
    seen.insert(root);
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next_parent < f.node->parents.size()) {
            detail::Node<S>* p = f.node->parents[f.next_parent++].get();
            if (p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(f.node);
            stack.pop_back();
        }
    }

    root->ensure_grad();
    root->grad[0] = S(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::Node<S>* nd = *it;
        if (nd->backprop && nd->grad.size() == nd->value.size()) nd->backprop(*nd);
    }
}

// ---------------------------------------------------------------------------
// Elementwise arithmetic with numpy-style right-aligned broadcasting.
// ---------------------------------------------------------------------------

namespace detail {

struct BroadcastPlan {
    Shape out;
    std::array<Index, 4> dims{1, 1, 1, 1};
    std::array<Index, 4> stride_a{0, 0, 0, 0};
    std::array<Index, 4> stride_b{0, 0, 0, 0};
};

inline BroadcastPlan broadcast_plan(const Shape& a, const Shape& b) {
    BroadcastPlan plan;
    const auto da = pad4(a);
    const auto db = pad4(b);
    std::array<Index, 4> dout{};
    for (int i = 0; i < 4; ++i) {
        if (da[i] != db[i] && da[i] != 1 && db[i] != 1) {
            throw std::invalid_argument("broadcast: incompatible extents at axis " +
                                        std::to_string(i) + ": " + a.str() + " vs " + b.str());
        }
        dout[i] = std::max(da[i], db[i]);
    }
    std::array<Index, 4> sa{0, 0, 0, 0}, sb{0, 0, 0, 0};
    Index run_a = 1, run_b = 1;
    for (int i = 3; i >= 0; --i) {
        sa[i] = (da[i] == 1) ? 0 : run_a;
        sb[i] = (db[i] == 1) ? 0 : run_b;
        run_a *= da[i];
        run_b *= db[i];
    }
    // Output rank follows the higher-rank operand.
    switch (std::max(a.rank(), b.rank())) {
        case 1: plan.out = Shape{dout[3]}; break;
        case 2: plan.out = Shape{dout[2], dout[3]}; break;
        case 3: plan.out = Shape{dout[1], dout[2], dout[3]}; break;
        default: plan.out = Shape{dout[0], dout[1], dout[2], dout[3]}; break;
    }
    plan.dims = dout;
    plan.stride_a = sa;
    plan.stride_b = sb;
    return plan;
}

}  // namespace detail

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
    const auto plan = detail::broadcast_plan(a.shape(), b.shape());
    std::vector<S> out(static_cast<std::size_t>(plan.out.count()));
    const S* pa = a.data();
    const S* pb = b.data();
    Index idx = 0;
    for (Index i0 = 0; i0 < plan.dims[0]; ++i0)
        for (Index i1 = 0; i1 < plan.dims[1]; ++i1)
            for (Index i2 = 0; i2 < plan.dims[2]; ++i2)
                for (Index i3 = 0; i3 < plan.dims[3]; ++i3) {
                    const Index ia = i0 * plan.stride_a[0] + i1 * plan.stride_a[1] +
                                     i2 * plan.stride_a[2] + i3 * plan.stride_a[3];
                    const Index ib = i0 * plan.stride_b[0] + i1 * plan.stride_b[1] +
                                     i2 * plan.stride_b[2] + i3 * plan.stride_b[3];
                    out[static_cast<std::size_t>(idx++)] = pa[ia] + pb[ib];
                }
    auto an = a.handle();
    auto bn = b.handle();
    return detail::make_result<S>(
        plan.out, std::move(out), {a, b}, [plan, an, bn](detail::Node<S>& self) {
            const bool need_a = an->requires_grad;
            const bool need_b = bn->requires_grad;
            if (need_a) an->ensure_grad();
            if (need_b) bn->ensure_grad();
            Index idx = 0;
            for (Index i0 = 0; i0 < plan.dims[0]; ++i0)
                for (Index i1 = 0; i1 < plan.dims[1]; ++i1)
                    for (Index i2 = 0; i2 < plan.dims[2]; ++i2)
                        for (Index i3 = 0; i3 < plan.dims[3]; ++i3) {
                            const S g = self.grad[static_cast<std::size_t>(idx++)];
                            if (need_a) {
                                const Index ia = i0 * plan.stride_a[0] + i1 * plan.stride_a[1] +
                                                 i2 * plan.stride_a[2] + i3 * plan.stride_a[3];
                                an->grad[static_cast<std::size_t>(ia)] += g;
                            }
                            if (need_b) {
                                const Index ib = i0 * plan.stride_b[0] + i1 * plan.stride_b[1] +
                                                 i2 * plan.stride_b[2] + i3 * plan.stride_b[3];
                                bn->grad[static_cast<std::size_t>(ib)] += g;
                            }
                        }
        });
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
    const auto plan = detail::broadcast_plan(a.shape(), b.shape());
    std::vector<S> out(static_cast<std::size_t>(plan.out.count()));
    const S* pa = a.data();
    const S* pb = b.data();
    Index idx = 0;
    for (Index i0 = 0; i0 < plan.dims[0]; ++i0)
        for (Index i1 = 0; i1 < plan.dims[1]; ++i1)
            for (Index i2 = 0; i2 < plan.dims[2]; ++i2)
                for (Index i3 = 0; i3 < plan.dims[3]; ++i3) {
                    const Index ia = i0 * plan.stride_a[0] + i1 * plan.stride_a[1] +
                                     i2 * plan.stride_a[2] + i3 * plan.stride_a[3];
                    const Index ib = i0 * plan.stride_b[0] + i1 * plan.stride_b[1] +
                                     i2 * plan.stride_b[2] + i3 * plan.stride_b[3];
                    out[static_cast<std::size_t>(idx++)] = pa[ia] * pb[ib];
                }
    auto an = a.handle();
    auto bn = b.handle();
    return detail::make_result<S>(
        plan.out, std::move(out), {a, b}, [plan, an, bn](detail::Node<S>& self) {
            const bool need_a = an->requires_grad;
            const bool need_b = bn->requires_grad;
            if (need_a) an->ensure_grad();
            if (need_b) bn->ensure_grad();
            const S* va = an->value.data();
            const S* vb = bn->value.data();
            Index idx = 0;
            for (Index i0 = 0; i0 < plan.dims[0]; ++i0)
                for (Index i1 = 0; i1 < plan.dims[1]; ++i1)
                    for (Index i2 = 0; i2 < plan.dims[2]; ++i2)
                        for (Index i3 = 0; i3 < plan.dims[3]; ++i3) {
                            const S g = self.grad[static_cast<std::size_t>(idx++)];
                            const Index ia = i0 * plan.stride_a[0] + i1 * plan.stride_a[1] +
                                             i2 * plan.stride_a[2] + i3 * plan.stride_a[3];
                            const Index ib = i0 * plan.stride_b[0] + i1 * plan.stride_b[1] +
                                             i2 * plan.stride_b[2] + i3 * plan.stride_b[3];
                            if (need_a) an->grad[static_cast<std::size_t>(ia)] += g * vb[ib];
                            if (need_b) bn->grad[static_cast<std::size_t>(ib)] += g * va[ia];
                        }
        });
}

/// y = scale * x + shift, elementwise with scalar coefficients.
template <typename S>
Tensor<S> affine(const Tensor<S>& x, S scale, S shift) {
    std::vector<S> out(x.values().begin(), x.values().end());
    for (auto& v : out) v = scale * v + shift;
    auto xn = x.handle();
    return detail::make_result<S>(x.shape(), std::move(out), {x},
                                  [scale, xn](detail::Node<S>& self) {
                                      xn->ensure_grad();
                                      for (std::size_t i = 0; i < self.grad.size(); ++i)
                                          xn->grad[i] += scale * self.grad[i];
                                  });
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
    return add(a, affine(b, S(-1), S(0)));
}

/// Scalar total of all entries.
template <typename S>
Tensor<S> sum(const Tensor<S>& x) {
    S total = 0;
    for (S v : x.values()) total += v;
    auto xn = x.handle();
    return detail::make_result<S>(Shape{1}, std::vector<S>{total}, {x},
                                  [xn](detail::Node<S>& self) {
                                      xn->ensure_grad();
                                      const S g = self.grad[0];
                                      for (auto& gv : xn->grad) gv += g;
                                  });
}

/// Scalar dot of x with fixed coefficients; the workhorse for reducing an
/// op output to a scalar in gradient checks without symmetric cancellation.
template <typename S>
Tensor<S> weighted_sum(const Tensor<S>& x, const std::vector<S>& coeffs) {
    if (static_cast<Index>(coeffs.size()) != x.size()) {
        throw std::invalid_argument("weighted_sum: coefficient count " +
                                    std::to_string(coeffs.size()) + " != tensor size " +
                                    std::to_string(x.size()));
    }
    S total = 0;
    const S* px = x.data();
    for (std::size_t i = 0; i < coeffs.size(); ++i) total += px[i] * coeffs[i];
    auto xn = x.handle();
    return detail::make_result<S>(Shape{1}, std::vector<S>{total}, {x},
                                  [xn, coeffs](detail::Node<S>& self) {
                                      xn->ensure_grad();
                                      const S g = self.grad[0];
                                      for (std::size_t i = 0; i < coeffs.size(); ++i)
                                          xn->grad[i] += g * coeffs[i];
                                  });
}

/// Same data, new extents (row-major order preserved).
template <typename S>
Tensor<S> reshape(const Tensor<S>& x, const Shape& shape) {
    if (shape.count() != x.size()) {
        throw std::invalid_argument("reshape: element count mismatch, " + x.shape().str() +
                                    " -> " + shape.str());
    }
    std::vector<S> out(x.values());
    auto xn = x.handle();
    return detail::make_result<S>(shape, std::move(out), {x}, [xn](detail::Node<S>& self) {
        xn->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) xn->grad[i] += self.grad[i];
    });
}

// ---------------------------------------------------------------------------
// Channel-axis structural ops for rank-4 feature maps.
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> concat_channels(const std::vector<Tensor<S>>& xs) {
    if (xs.empty()) throw std::invalid_argument("concat_channels: empty input list");
    const Shape& s0 = xs[0].shape();
    if (s0.rank() != 4) throw std::invalid_argument("concat_channels: rank-4 inputs required");
    Index ctotal = 0;
    for (const auto& x : xs) {
        const Shape& s = x.shape();
        if (s.rank() != 4 || s[0] != s0[0] || s[2] != s0[2] || s[3] != s0[3]) {
            throw std::invalid_argument("concat_channels: incompatible shape " + s.str() +
                                        " vs " + s0.str());
        }
        ctotal += s[1];
    }
    const Index N = s0[0], H = s0[2], W = s0[3], HW = H * W;
    Shape out_shape{N, ctotal, H, W};
    std::vector<S> out(static_cast<std::size_t>(out_shape.count()));
    std::vector<Index> offsets;  // starting output channel per input
    Index coff = 0;
    for (const auto& x : xs) {
        offsets.push_back(coff);
        const Index C = x.shape()[1];
        const S* px = x.data();
        for (Index n = 0; n < N; ++n) {
            std::copy(px + n * C * HW, px + (n + 1) * C * HW,
                      out.begin() + (n * ctotal + coff) * HW);
        }
        coff += C;
    }
    std::vector<std::shared_ptr<detail::Node<S>>> handles;
    for (const auto& x : xs) handles.push_back(x.handle());
    return detail::make_result<S>(
        out_shape, std::move(out), xs,
        [handles, offsets, N, HW, ctotal](detail::Node<S>& self) {
            for (std::size_t k = 0; k < handles.size(); ++k) {
                auto& p = handles[k];
                if (!p->requires_grad) continue;
                p->ensure_grad();
                const Index C = p->shape[1];
                for (Index n = 0; n < N; ++n) {
                    const S* g = self.grad.data() + (n * ctotal + offsets[k]) * HW;
                    S* dst = p->grad.data() + n * C * HW;
                    for (Index i = 0; i < C * HW; ++i) dst[i] += g[i];
                }
            }
        });
}

template <typename S>
Tensor<S> slice_channels(const Tensor<S>& x, Index start, Index count) {
    const Shape& s = x.shape();
    if (s.rank() != 4) throw std::invalid_argument("slice_channels: rank-4 input required");
    if (start < 0 || count <= 0 || start + count > s[1]) {
        throw std::invalid_argument("slice_channels: range [" + std::to_string(start) + "," +
                                    std::to_string(start + count) + ") out of " +
                                    std::to_string(s[1]) + " channels");
    }
    const Index N = s[0], C = s[1], H = s[2], W = s[3], HW = H * W;
    Shape out_shape{N, count, H, W};
    std::vector<S> out(static_cast<std::size_t>(out_shape.count()));
    const S* px = x.data();
    for (Index n = 0; n < N; ++n) {
        std::copy(px + (n * C + start) * HW, px + (n * C + start + count) * HW,
                  out.begin() + n * count * HW);
    }
    auto xn = x.handle();
    return detail::make_result<S>(out_shape, std::move(out), {x},
                                  [xn, start, count, N, C, HW](detail::Node<S>& self) {
                                      xn->ensure_grad();
                                      for (Index n = 0; n < N; ++n) {
                                          const S* g = self.grad.data() + n * count * HW;
                                          S* dst = xn->grad.data() + (n * C + start) * HW;
                                          for (Index i = 0; i < count * HW; ++i) dst[i] += g[i];
                                      }
                                  });
}

/// out[:, j] = x[:, perm[j]] — a fixed channel gather.
template <typename S>
Tensor<S> permute_channels(const Tensor<S>& x, const std::vector<Index>& perm) {
    const Shape& s = x.shape();
    if (s.rank() != 4) throw std::invalid_argument("permute_channels: rank-4 input required");
    const Index N = s[0], C = s[1], H = s[2], W = s[3], HW = H * W;
    if (static_cast<Index>(perm.size()) != C) {
        throw std::invalid_argument("permute_channels: permutation size " +
                                    std::to_string(perm.size()) + " != channels " +
                                    std::to_string(C));
    }
    std::vector<S> out(static_cast<std::size_t>(s.count()));
    const S* px = x.data();
    for (Index n = 0; n < N; ++n)
        for (Index j = 0; j < C; ++j)
            std::copy(px + (n * C + perm[j]) * HW, px + (n * C + perm[j] + 1) * HW,
                      out.begin() + (n * C + j) * HW);
    auto xn = x.handle();
    return detail::make_result<S>(s, std::move(out), {x},
                                  [xn, perm, N, C, HW](detail::Node<S>& self) {
                                      xn->ensure_grad();
                                      for (Index n = 0; n < N; ++n)
                                          for (Index j = 0; j < C; ++j) {
                                              const S* g = self.grad.data() + (n * C + j) * HW;
                                              S* dst = xn->grad.data() + (n * C + perm[j]) * HW;
                                              for (Index i = 0; i < HW; ++i) dst[i] += g[i];
                                          }
                                  });
}

/// [N,D,H,W] -> [N*H*W, D] pixel tokens, rows ordered (n, h, w).
template <typename S>
Tensor<S> unfold_tokens(const Tensor<S>& x) {
    const Shape& s = x.shape();
    if (s.rank() != 4) throw std::invalid_argument("unfold_tokens: rank-4 input required");
    const Index N = s[0], D = s[1], H = s[2], W = s[3], HW = H * W;
    Shape out_shape{N * HW, D};
    std::vector<S> out(static_cast<std::size_t>(out_shape.count()));
    const S* px = x.data();
    for (Index n = 0; n < N; ++n)
        for (Index d = 0; d < D; ++d)
            for (Index p = 0; p < HW; ++p)
                out[static_cast<std::size_t>((n * HW + p) * D + d)] = px[(n * D + d) * HW + p];
    auto xn = x.handle();
    return detail::make_result<S>(out_shape, std::move(out), {x},
                                  [xn, N, D, HW](detail::Node<S>& self) {
                                      xn->ensure_grad();
                                      for (Index n = 0; n < N; ++n)
                                          for (Index d = 0; d < D; ++d)
                                              for (Index p = 0; p < HW; ++p)
                                                  xn->grad[(n * D + d) * HW + p] +=
                                                      self.grad[(n * HW + p) * D + d];
                                  });
}

/// Exact inverse of unfold_tokens.
template <typename S>
Tensor<S> fold_tokens(const Tensor<S>& t, Index N, Index H, Index W) {
    const Shape& s = t.shape();
    if (s.rank() != 2) throw std::invalid_argument("fold_tokens: rank-2 input required");
    const Index HW = H * W, D = s[1];
    if (s[0] != N * HW) {
        throw std::invalid_argument("fold_tokens: token count " + std::to_string(s[0]) +
                                    " != N*H*W = " + std::to_string(N * HW));
    }
    Shape out_shape{N, D, H, W};
    std::vector<S> out(static_cast<std::size_t>(out_shape.count()));
    const S* pt = t.data();
    for (Index n = 0; n < N; ++n)
        for (Index d = 0; d < D; ++d)
            for (Index p = 0; p < HW; ++p)
                out[static_cast<std::size_t>((n * D + d) * HW + p)] = pt[(n * HW + p) * D + d];
    auto tn = t.handle();
    return detail::make_result<S>(out_shape, std::move(out), {t},
                                  [tn, N, D, HW](detail::Node<S>& self) {
                                      tn->ensure_grad();
                                      for (Index n = 0; n < N; ++n)
                                          for (Index d = 0; d < D; ++d)
                                              for (Index p = 0; p < HW; ++p)
                                                  tn->grad[(n * HW + p) * D + d] +=
                                                      self.grad[(n * D + d) * HW + p];
                                  });
}

}  // namespace macmd
