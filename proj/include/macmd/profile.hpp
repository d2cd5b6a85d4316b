#pragma once

#include <cstdio>
#include <string>
#include <vector>

#include "macmd/apm.hpp"
#include "macmd/mcag.hpp"
#include "macmd/meab.hpp"
#include "macmd/model.hpp"
#include "macmd/msccm.hpp"

namespace macmd {

struct ProfileRow {
    std::string name;    // short module label
    std::string prefix;  // parameter-name prefix covering the module
    Index params = 0;
    Index macs = 0;  // per sample (N = 1)
};

namespace detail {

inline Index conv_params(Index cin, Index cout, Index k, Index groups = 1, bool bias = true) {
    return cout * (cin / groups) * k * k + (bias ? cout : 0);
}
inline Index conv_macs(Index cin, Index cout, Index k, Index groups, Index hw) {
    return cout * (cin / groups) * k * k * hw;
}
inline Index seghead_params(Index cin, Index cout) {
    return (cin * cin + cin) + (cin * cout + cout) + (81 * cout + cout);
}
inline Index seghead_macs(Index cin, Index cout, Index out_hw) {
    // point-op, pointwise, and depthwise all run at the post-upsample grid.
    return cin * cin * out_hw + cin * cout * out_hw + 81 * cout * out_hw;
}

}  // namespace detail

/// Analytic per-module parameter and MAC counts for one sample. Convolution
/// MACs are Cout*(Cin/groups)*kh*kw*H'*W', linear MACs are T*Din*Dout;
/// normalization, activations, and resampling count zero. The params column
/// equals the instantiated store's element counts under each row's prefix.
inline std::vector<ProfileRow> profile_rows(const ModelConfig& cfg, Index in_h, Index in_w) {
    cfg.validate();
    if (in_h % 32 != 0 || in_w % 32 != 0) {
        throw std::invalid_argument("profile_rows: input size must be a multiple of 32");
    }
    const Index c1 = cfg.channels[0], c2 = cfg.channels[1], c3 = cfg.channels[2],
                c4 = cfg.channels[3];
    const Index hw0 = in_h * in_w;
    const Index hw1 = hw0 / 16, hw2 = hw0 / 64, hw3 = hw0 / 256, hw4 = hw0 / 1024;
    const Index hw_half = hw0 / 4;
    const Index K = cfg.num_classes;
    using detail::conv_macs;
    using detail::conv_params;

    std::vector<ProfileRow> rows;

    {
        ProfileRow r{"encoder", "encoder.", 0, 0};
        const Index cs[5] = {3, c1, c2, c3, c4};
        const Index grids[5] = {hw0, hw1, hw2, hw3, hw4};  // stage output grids
        // Stage 1's first conv lands on the half-resolution grid; every
        // other conv runs at its stage's output grid.
        r.params += conv_params(3, c1, 3) + 2 * c1 + conv_params(c1, c1, 3) + 2 * c1;
        r.macs += conv_macs(3, c1, 3, 1, hw_half) + conv_macs(c1, c1, 3, 1, hw1);
        for (int s = 2; s <= 4; ++s) {
            const Index ci = cs[s - 1], co = cs[s], hw = grids[s];
            r.params += conv_params(ci, co, 3) + 2 * co + conv_params(co, co, 3) + 2 * co;
            r.macs += conv_macs(ci, co, 3, 1, hw) + conv_macs(co, co, 3, 1, hw);
        }
        rows.push_back(r);
    }

    if (cfg.use_mcag_apm) {
        const Index stage_c[4] = {c1, c2, c3, c4};
        const Index stage_hw[4] = {hw1, hw2, hw3, hw4};
        for (int i = 0; i < 4; ++i) {
            ProfileRow r{"mcag" + std::to_string(i + 1),
                         "decoder.mcag" + std::to_string(i + 1) + ".", 0, 0};
            r.params = mcag_param_count(stage_c[i]);
            r.macs = 9 * stage_c[i] * stage_c[i] * stage_hw[i] + stage_c[i] * stage_hw[i];
            rows.push_back(r);
        }
        ProfileRow r{"apm", "decoder.apm.", 0, 0};
        r.params = apm_param_count({c1, c2, c3, c4}, c1);
        for (int i = 0; i < 4; ++i) r.macs += stage_c[i] * c1 * stage_hw[i];  // align projections
        r.macs += 4 * (c1 * (c1 / 8) + (c1 / 8)) * hw1;                       // fuse scoring
        r.macs += 4 * c1 * c1 * hw1;                                          // modulation conv
        rows.push_back(r);
    }

    if (cfg.use_msccm) {
        ProfileRow r{"msccm", "decoder.msccm.", 0, 0};
        r.params = msccm_param_count(c1, c2, c3);
        const Index d = 3 * c1;
        r.macs += (c1 + c2 + c3) * c1 * hw1;      // inbound projections at the shared grid
        r.macs += hw1 * (d * d + 2 * d * 2 * d);  // receptance, key, value linear maps
        r.macs += (c1 + c2 + c3) * c1 * hw1;      // outbound projections before resampling
        rows.push_back(r);
    }

    if (cfg.use_meab) {
        ProfileRow r{"meab", "decoder.meab.", 0, 0};
        const Index hidden = c4 / cfg.meab_reduction;
        r.params = meab_param_count(c4, cfg.meab_reduction);
        r.macs = 2 * 9 * c4 * c4 * hw4 + 2 * c4 * hidden + 2 * 49 * hw4;
        rows.push_back(r);
    }

    const Index head_cin[4] = {c4, 2 * c3, 2 * c2, c1};
    const Index head_cout[4] = {c3, c2, c1, c1 / 2};
    const Index head_hw[4] = {hw3, hw2, hw1, hw0};
    for (int i = 0; i < 4; ++i) {
        rows.push_back({"seghead" + std::to_string(i + 1),
                        "decoder.seghead" + std::to_string(i + 1) + ".",
                        detail::seghead_params(head_cin[i], head_cout[i]),
                        detail::seghead_macs(head_cin[i], head_cout[i], head_hw[i])});
    }

    {
        ProfileRow r{"fusion", "decoder.fusion.", 0, 0};
        r.params = conv_params(2 * c1, c1, 1) + 2 * c1 + conv_params(c1, c1, 3) + 2 * c1;
        r.macs = conv_macs(2 * c1, c1, 1, 1, hw1) + conv_macs(c1, c1, 3, 1, hw1);
        rows.push_back(r);
    }
    {
        ProfileRow r{"predict", "decoder.predict", 0, 0};
        r.params = (c2 + 1) * K + (c1 + 1) * K + (c1 / 2 + 1) * K;
        r.macs = c2 * K * hw2 + c1 * K * hw1 + (c1 / 2) * K * hw0;
        rows.push_back(r);
    }
    return rows;
}

/// Tab-separated table: module, params, MACs, and each column's share of
/// the total (two decimals), ending with the totals row.
inline std::string profile_text(const std::vector<ProfileRow>& rows) {
    Index tp = 0, tm = 0;
    for (const auto& r : rows) {
        tp += r.params;
        tm += r.macs;
    }
    std::string out = "module\tparams\tmacs\tparams_pct\tmacs_pct\n";
    char line[256];
    for (const auto& r : rows) {
        std::snprintf(line, sizeof(line), "%s\t%lld\t%lld\t%.2f\t%.2f\n", r.name.c_str(),
                      static_cast<long long>(r.params), static_cast<long long>(r.macs),
                      tp ? 100.0 * static_cast<double>(r.params) / static_cast<double>(tp) : 0.0,
                      tm ? 100.0 * static_cast<double>(r.macs) / static_cast<double>(tm) : 0.0);
        out += line;
    }
    std::snprintf(line, sizeof(line), "total\t%lld\t%lld\t100.00\t100.00\n",
                  static_cast<long long>(tp), static_cast<long long>(tm));
    out += line;
    return out;
}

}  // namespace macmd
