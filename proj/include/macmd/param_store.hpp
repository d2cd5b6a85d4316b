#pragma once

#include <cmath>
#include <deque>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "macmd/conv.hpp"
#include "macmd/norm.hpp"
#include "macmd/rng.hpp"
#include "macmd/tensor.hpp"

namespace macmd {

/// The kind fixes the initialization rule: weights draw He-style normals
/// scaled by their fan-in, biases and norm shifts start at zero, norm gains
/// at one, mix coefficients at one half.
enum class ParamKind { weight, bias, norm_gain, norm_bias, mix_coefficient };

template <typename S>
struct Parameter {
    std::string name;
    ParamKind kind;
    Tensor<S> value;
};

/// Owns every learnable tensor and every norm-layer running-stat buffer of a
/// model, keyed by dotted path names (e.g. "decoder.mcag1.hdconv.branch0.weight").
/// Registration order is the construction order, which also fixes the RNG
/// draw sequence, the optimizer's walk, and the checkpoint record order —
/// the determinism contract hangs on this ordering.
template <typename S>
class ParamStore {
public:
    explicit ParamStore(std::uint64_t seed) : rng_(seed) {}

    /// Registers and initializes a parameter. fan_in is required for
    /// kind==weight (He scale sqrt(2/fan_in)) and ignored otherwise.
    Tensor<S> add(const std::string& name, const Shape& shape, ParamKind kind, Index fan_in = 0) {
        const Index count = shape.count();
        std::vector<S> data(static_cast<std::size_t>(count));
        switch (kind) {
            case ParamKind::weight: {
                if (fan_in <= 0) {
                    throw std::invalid_argument("ParamStore: weight \"" + name +
                                                "\" needs a positive fan_in");
                }
                const double std_dev = std::sqrt(2.0 / static_cast<double>(fan_in));
                for (auto& v : data) v = static_cast<S>(rng_.next_normal() * std_dev);
                break;
            }
            case ParamKind::bias:
            case ParamKind::norm_bias:
                break;  // zeros
            case ParamKind::norm_gain:
                for (auto& v : data) v = S(1);
                break;
            case ParamKind::mix_coefficient:
                for (auto& v : data) v = S(0.5);
                break;
        }
        return insert(name, kind, Tensor<S>::from_data(shape, std::move(data), true));
    }

    /// Registers a parameter with explicit all-zero contents regardless of
    /// kind (for layers that must start as the identity).
    Tensor<S> add_zeros(const std::string& name, const Shape& shape, ParamKind kind) {
        return insert(name, kind, Tensor<S>::zeros(shape, true));
    }

    /// Registers the running-stat buffers for one batch-norm layer; the
    /// returned reference stays valid for the store's lifetime.
    NormState<S>& add_norm_state(const std::string& name, Index channels) {
        if (norm_index_.count(name)) {
            throw std::invalid_argument("ParamStore: duplicate norm state \"" + name + "\"");
        }
        norm_states_.emplace_back(channels);
        norm_names_.push_back(name);
        norm_index_[name] = norm_states_.size() - 1;
        return norm_states_.back();
    }

    std::vector<Parameter<S>>& parameters() { return params_; }
    const std::vector<Parameter<S>>& parameters() const { return params_; }

    Index norm_state_count() const { return static_cast<Index>(norm_states_.size()); }
    const std::string& norm_state_name(Index i) const {
        return norm_names_[static_cast<std::size_t>(i)];
    }
    NormState<S>& norm_state(Index i) { return norm_states_[static_cast<std::size_t>(i)]; }
    const NormState<S>& norm_state(Index i) const {
        return norm_states_[static_cast<std::size_t>(i)];
    }

    bool has(const std::string& name) const { return index_.count(name) != 0; }

    Tensor<S> find(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) {
            throw std::invalid_argument("ParamStore: no parameter named \"" + name + "\"");
        }
        return params_[it->second].value;
    }

    NormState<S>& find_norm_state(const std::string& name) {
        auto it = norm_index_.find(name);
        if (it == norm_index_.end()) {
            throw std::invalid_argument("ParamStore: no norm state named \"" + name + "\"");
        }
        return norm_states_[it->second];
    }

    /// Total learnable elements whose name starts with the prefix.
    Index element_count(const std::string& prefix = "") const {
        Index total = 0;
        for (const auto& p : params_)
            if (p.name.rfind(prefix, 0) == 0) total += p.value.size();
        return total;
    }

    void zero_grads() {
        for (auto& p : params_) p.value.zero_grad();
    }

    void set_training(bool training) {
        for (auto& st : norm_states_) st.training = training;
    }

    CounterRng& rng() { return rng_; }

private:
    Tensor<S> insert(const std::string& name, ParamKind kind, Tensor<S> value) {
        if (name.empty()) throw std::invalid_argument("ParamStore: empty parameter name");
        if (index_.count(name)) {
            throw std::invalid_argument("ParamStore: duplicate parameter \"" + name + "\"");
        }
        index_[name] = params_.size();
        params_.push_back({name, kind, value});
        return value;
    }

    CounterRng rng_;
    std::vector<Parameter<S>> params_;
    std::unordered_map<std::string, std::size_t> index_;
    std::deque<NormState<S>> norm_states_;  // deque: references must not move
    std::vector<std::string> norm_names_;
    std::unordered_map<std::string, std::size_t> norm_index_;
};

// ---------------------------------------------------------------------------
// Thin layer wrappers: bundle a layer's tensors with its call.
// ---------------------------------------------------------------------------

template <typename S>
struct Conv2dLayer {
    Tensor<S> w;
    Tensor<S> b;  // undefined when the layer is bias-free
    Conv2dOpts opts;

    static Conv2dLayer make(ParamStore<S>& ps, const std::string& name, Index cin, Index cout,
                            Index k, Conv2dOpts opts = {}, bool with_bias = true) {
        Conv2dLayer layer;
        layer.opts = opts;
        const Index fan_in = (cin / opts.groups) * k * k;
        layer.w = ps.add(name + ".weight", Shape{cout, cin / opts.groups, k, k},
                         ParamKind::weight, fan_in);
        if (with_bias) layer.b = ps.add(name + ".bias", Shape{cout}, ParamKind::bias);
        return layer;
    }

    Tensor<S> operator()(const Tensor<S>& x) const { return conv2d(x, w, b, opts); }
};

template <typename S>
struct BatchNormLayer {
    Tensor<S> gain;
    Tensor<S> bias;
    NormState<S>* state = nullptr;

    static BatchNormLayer make(ParamStore<S>& ps, const std::string& name, Index channels) {
        BatchNormLayer layer;
        layer.gain = ps.add(name + ".gain", Shape{channels}, ParamKind::norm_gain);
        layer.bias = ps.add(name + ".bias", Shape{channels}, ParamKind::norm_bias);
        layer.state = &ps.add_norm_state(name, channels);
        return layer;
    }

    Tensor<S> operator()(const Tensor<S>& x) const { return batch_norm(x, gain, bias, *state); }
};

template <typename S>
struct LinearLayer {
    Tensor<S> w;
    Tensor<S> b;  // undefined when bias-free

    static LinearLayer make(ParamStore<S>& ps, const std::string& name, Index din, Index dout,
                            bool with_bias = true) {
        LinearLayer layer;
        layer.w = ps.add(name + ".weight", Shape{dout, din}, ParamKind::weight, din);
        if (with_bias) layer.b = ps.add(name + ".bias", Shape{dout}, ParamKind::bias);
        return layer;
    }

    Tensor<S> operator()(const Tensor<S>& x) const { return linear(x, w, b); }
};

}  // namespace macmd
