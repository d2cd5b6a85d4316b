#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "macmd/apm.hpp"
#include "macmd/mcag.hpp"
#include "macmd/meab.hpp"
#include "macmd/msccm.hpp"
#include "macmd/param_store.hpp"

namespace macmd {

struct ModelConfig {
    std::array<Index, 4> channels{32, 64, 128, 256};  // full scale: 64,128,320,512
    Index num_classes = 3;
    Index meab_reduction = 16;
    // Ablation switches: a disabled block registers no parameters and is
    // replaced by the identity on its inputs, so every other module keeps
    // identical shapes and counts.
    bool use_mcag_apm = true;
    bool use_msccm = true;
    bool use_meab = true;

    void validate() const {
        for (std::size_t i = 0; i < channels.size(); ++i) {
            if (channels[i] < 16 || channels[i] % 16 != 0) {
                throw std::invalid_argument("ModelConfig: stage " + std::to_string(i + 1) +
                                            " width " + std::to_string(channels[i]) +
                                            " must be a positive multiple of 16");
            }
        }
        if (channels[3] % meab_reduction != 0) {
            throw std::invalid_argument("ModelConfig: deepest width not divisible by the "
                                        "channel-attention reduction");
        }
        if (num_classes < 1) throw std::invalid_argument("ModelConfig: need at least one class");
    }
};

template <typename S>
struct FeaturePyramid {
    std::array<Tensor<S>, 4> x;  // strides 4, 8, 16, 32
};

/// One encoder stage: two (3x3 conv, BN, ReLU) layers. The first conv
/// carries the stage's downsampling stride.
template <typename S>
struct EncoderStage {
    Conv2dLayer<S> conv1;
    BatchNormLayer<S> bn1;
    Conv2dLayer<S> conv2;
    BatchNormLayer<S> bn2;

    static EncoderStage make(ParamStore<S>& ps, const std::string& name, Index cin, Index cout,
                             Index stride2) {
        EncoderStage st;
        st.conv1 = Conv2dLayer<S>::make(ps, name + ".conv1", cin, cout, 3,
                                        Conv2dOpts{.stride = 2, .padding = 1});
        st.bn1 = BatchNormLayer<S>::make(ps, name + ".bn1", cout);
        st.conv2 = Conv2dLayer<S>::make(ps, name + ".conv2", cout, cout, 3,
                                        Conv2dOpts{.stride = stride2, .padding = 1});
        st.bn2 = BatchNormLayer<S>::make(ps, name + ".bn2", cout);
        return st;
    }

    Tensor<S> operator()(const Tensor<S>& x) const { return relu(bn2(conv2(relu(bn1(conv1(x)))))); }
};

/// Decoding head: upsample, channel-preserving 1x1 point operation,
/// channel-changing pointwise 1x1, then a 9x9 depthwise convolution.
template <typename S>
struct SegHead {
    Index up_factor = 2;
    Conv2dLayer<S> point_op;   // 1x1, Cin -> Cin
    Conv2dLayer<S> pointwise;  // 1x1, Cin -> Cout
    Conv2dLayer<S> depthwise;  // 9x9 over Cout, padding 4, groups = Cout

    static SegHead make(ParamStore<S>& ps, const std::string& name, Index cin, Index cout,
                        Index up_factor) {
        SegHead head;
        head.up_factor = up_factor;
        head.point_op = Conv2dLayer<S>::make(ps, name + ".point_op", cin, cin, 1);
        head.pointwise = Conv2dLayer<S>::make(ps, name + ".pointwise", cin, cout, 1);
        head.depthwise = Conv2dLayer<S>::make(ps, name + ".depthwise", cout, cout, 9,
                                              Conv2dOpts{.padding = 4, .groups = cout});
        return head;
    }

    Tensor<S> operator()(const Tensor<S>& x) const {
        Tensor<S> up = bilinear_upsample(x, x.shape()[2] * up_factor, x.shape()[3] * up_factor);
        return depthwise(pointwise(point_op(up)));
    }
};

/// Final skip merge at the shallowest stage: 1x1 reduce + BN + ReLU, then a
/// 3x3 refinement + BN + ReLU.
template <typename S>
struct FusionBlock {
    Conv2dLayer<S> reduce;  // 1x1, 2*C1 -> C1
    BatchNormLayer<S> bn1;
    Conv2dLayer<S> refine;  // 3x3, C1 -> C1
    BatchNormLayer<S> bn2;

    static FusionBlock make(ParamStore<S>& ps, const std::string& name, Index c1) {
        FusionBlock f;
        f.reduce = Conv2dLayer<S>::make(ps, name + ".reduce", 2 * c1, c1, 1);
        f.bn1 = BatchNormLayer<S>::make(ps, name + ".bn1", c1);
        f.refine = Conv2dLayer<S>::make(ps, name + ".refine", c1, c1, 3, Conv2dOpts{.padding = 1});
        f.bn2 = BatchNormLayer<S>::make(ps, name + ".bn2", c1);
        return f;
    }

    Tensor<S> operator()(const Tensor<S>& x) const { return relu(bn2(refine(relu(bn1(reduce(x)))))); }
};

/// The full assembly: toy pyramid encoder, per-stage attention gates, the
/// cross-scale fusion block, channel mixer, deepest-stage refinement, four
/// decoding heads with deep-supervision taps, and the skip-fusion block.
template <typename S>
class MacmdModel {
public:
    MacmdModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg), store_(seed) {
        cfg_.validate();
        const auto [c1, c2, c3, c4] = cfg_.channels;
        stages_[0] = EncoderStage<S>::make(store_, "encoder.stage1", 3, c1, 2);
        stages_[1] = EncoderStage<S>::make(store_, "encoder.stage2", c1, c2, 1);
        stages_[2] = EncoderStage<S>::make(store_, "encoder.stage3", c2, c3, 1);
        stages_[3] = EncoderStage<S>::make(store_, "encoder.stage4", c3, c4, 1);
        if (cfg_.use_mcag_apm) {
            for (int i = 0; i < 4; ++i) {
                mcag_[static_cast<std::size_t>(i)] = McagBlock<S>::make(
                    store_, "decoder.mcag" + std::to_string(i + 1),
                    cfg_.channels[static_cast<std::size_t>(i)]);
            }
            apm_ = ApmBlock<S>::make(store_, "decoder.apm", {c1, c2, c3, c4}, c1);
        }
        if (cfg_.use_msccm) msccm_ = MsccmBlock<S>::make(store_, "decoder.msccm", c1, c2, c3);
        if (cfg_.use_meab) {
            meab_ = MeabBlock<S>::make(store_, "decoder.meab", c4, cfg_.meab_reduction);
        }
        seghead_[0] = SegHead<S>::make(store_, "decoder.seghead1", c4, c3, 2);
        seghead_[1] = SegHead<S>::make(store_, "decoder.seghead2", 2 * c3, c2, 2);
        seghead_[2] = SegHead<S>::make(store_, "decoder.seghead3", 2 * c2, c1, 2);
        seghead_[3] = SegHead<S>::make(store_, "decoder.seghead4", c1, c1 / 2, 4);
        fusion_ = FusionBlock<S>::make(store_, "decoder.fusion", c1);
        predict2_ = Conv2dLayer<S>::make(store_, "decoder.predict2", c2, cfg_.num_classes, 1);
        predict3_ = Conv2dLayer<S>::make(store_, "decoder.predict3", c1, cfg_.num_classes, 1);
        predict4_ = Conv2dLayer<S>::make(store_, "decoder.predict4", c1 / 2, cfg_.num_classes, 1);
    }

    MacmdModel(const MacmdModel&) = delete;
    MacmdModel& operator=(const MacmdModel&) = delete;

    const ModelConfig& config() const { return cfg_; }
    ParamStore<S>& store() { return store_; }
    const ParamStore<S>& store() const { return store_; }
    void set_training(bool training) { store_.set_training(training); }

    FeaturePyramid<S> encode(const Tensor<S>& image) const {
        const Shape& s = image.shape();
        if (s.rank() != 4 || s[1] != 3) {
            throw std::invalid_argument("encode: expected [N,3,H,W] image, got " + s.str());
        }
        if (s[2] % 32 != 0 || s[3] % 32 != 0) {
            throw std::invalid_argument("encode: input " + std::to_string(s[2]) + "x" +
                                        std::to_string(s[3]) +
                                        " must be a multiple of 32 in both extents");
        }
        FeaturePyramid<S> pyr;
        Tensor<S> t = image;
        for (int i = 0; i < 4; ++i) {
            t = stages_[static_cast<std::size_t>(i)](t);
            pyr.x[static_cast<std::size_t>(i)] = t;
        }
        return pyr;
    }

    /// Decodes the pyramid into three class-logit maps at the original
    /// image resolution: the final full-resolution map first, then the
    /// stage-3 and stage-2 deep-supervision taps.
    std::array<Tensor<S>, 3> decode(const FeaturePyramid<S>& pyr) const {
        const auto& X = pyr.x;
        const Index img_h = X[0].shape()[2] * 4, img_w = X[0].shape()[3] * 4;

        std::array<Tensor<S>, 4> G;
        for (int i = 0; i < 4; ++i) {
            G[static_cast<std::size_t>(i)] =
                cfg_.use_mcag_apm
                    ? mcag_forward(X[static_cast<std::size_t>(i)],
                                   *mcag_[static_cast<std::size_t>(i)])
                    : X[static_cast<std::size_t>(i)];
        }
        Tensor<S> context;
        if (cfg_.use_mcag_apm) {
            context = apm_forward(std::vector<Tensor<S>>{G[0], G[1], G[2], G[3]}, *apm_);
        }
        std::array<Tensor<S>, 3> skips{X[0], X[1], X[2]};
        if (cfg_.use_msccm) skips = msccm_forward(X[0], X[1], X[2], *msccm_);

        Tensor<S> d4 = cfg_.use_meab ? meab_forward(G[3], *meab_) : G[3];
        Tensor<S> d3 = seghead_[0](d4);
        Tensor<S> d2 = seghead_[1](concat_channels<S>({d3, skips[2]}));
        Tensor<S> p_stage2 = predict2_(d2);
        Tensor<S> d1 = seghead_[2](concat_channels<S>({d2, skips[1]}));
        if (cfg_.use_mcag_apm) d1 = add(d1, context);  // cross-scale context joins here
        Tensor<S> p_stage3 = predict3_(d1);
        Tensor<S> fused = fusion_(concat_channels<S>({d1, skips[0]}));
        Tensor<S> p_final = predict4_(seghead_[3](fused));

        auto to_full = [&](Tensor<S> p) {
            return (p.shape()[2] == img_h && p.shape()[3] == img_w)
                       ? p
                       : bilinear_upsample(p, img_h, img_w);
        };
        return {to_full(p_final), to_full(p_stage3), to_full(p_stage2)};
    }

    std::array<Tensor<S>, 3> operator()(const Tensor<S>& image) const {
        return decode(encode(image));
    }

private:
    ModelConfig cfg_;
    ParamStore<S> store_;
    std::array<EncoderStage<S>, 4> stages_;
    std::array<std::optional<McagBlock<S>>, 4> mcag_;
    std::optional<ApmBlock<S>> apm_;
    std::optional<MsccmBlock<S>> msccm_;
    std::optional<MeabBlock<S>> meab_;
    std::array<SegHead<S>, 4> seghead_;
    FusionBlock<S> fusion_;
    Conv2dLayer<S> predict2_, predict3_, predict4_;
};

}  // namespace macmd
