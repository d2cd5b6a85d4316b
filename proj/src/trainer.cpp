#include "macmd/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>

#include "macmd/errors.hpp"
#include "macmd/loss.hpp"
#include "macmd/optim.hpp"
#include "macmd/rng.hpp"

namespace macmd {

void TrainConfig::validate() const {
    if (epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("train: batch size must be >= 1");
    if (lr <= 0) throw std::invalid_argument("train: learning rate must be positive");
    if (lr_min < 0 || lr_min > lr) throw std::invalid_argument("train: bad minimum learning rate");
    if (weight_decay < 0) throw std::invalid_argument("train: negative weight decay");
    if ((alpha && *alpha < 0) || (beta && *beta < 0))
        throw std::invalid_argument("train: loss weights must be nonnegative");
    if (val_fraction < 0 || val_fraction >= 1)
        throw std::invalid_argument("train: validation fraction must lie in [0,1)");
}

namespace {

/// Pooled per-class overlap tallies for a foreground-mean DSC.
struct DscTally {
    std::vector<double> inter, pred, truth;

    explicit DscTally(Index K)
        : inter(static_cast<std::size_t>(K), 0.0),
          pred(static_cast<std::size_t>(K), 0.0),
          truth(static_cast<std::size_t>(K), 0.0) {}

    void add(const MaskBatch& p, const MaskBatch& y) {
        for (std::size_t i = 0; i < p.labels.size(); ++i) {
            const int pc = p.labels[i], yc = y.labels[i];
            pred[static_cast<std::size_t>(pc)] += 1.0;
            truth[static_cast<std::size_t>(yc)] += 1.0;
            if (pc == yc) inter[static_cast<std::size_t>(pc)] += 1.0;
        }
    }

    /// Mean DSC over classes 1..K-1 (a class absent from both sides scores 1).
    double foreground_mean() const {
        double sum = 0.0;
        for (std::size_t c = 1; c < inter.size(); ++c) {
            const double denom = pred[c] + truth[c];
            sum += denom == 0.0 ? 1.0 : 2.0 * inter[c] / denom;
        }
        return inter.size() > 1 ? sum / static_cast<double>(inter.size() - 1) : 0.0;
    }
};

void shuffle_indices(std::vector<Index>& ids, CounterRng& rng) {
    for (std::size_t i = ids.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.next_below(static_cast<std::uint64_t>(i)));
        std::swap(ids[i - 1], ids[j]);
    }
}

}  // namespace

TrainResult train_model(const TrainConfig& cfg, const Dataset& ds, std::ostream& log) {
    cfg.validate();
    if (ds.count() == 0) throw DataError("train: empty dataset");
    if (cfg.expect_classes > 0 && cfg.expect_classes != ds.num_classes)
        throw DataError("train: dataset has " + std::to_string(ds.num_classes) +
                        " classes, configuration expects " + std::to_string(cfg.expect_classes));
    if (cfg.expect_size > 0 && (ds.h != cfg.expect_size || ds.w != cfg.expect_size))
        throw DataError("train: dataset images are " + std::to_string(ds.h) + "x" +
                        std::to_string(ds.w) + ", configuration expects " +
                        std::to_string(cfg.expect_size));
    if (ds.h % 32 != 0 || ds.w % 32 != 0)
        throw DataError("train: image extents must be multiples of 32, got " +
                        std::to_string(ds.h) + "x" + std::to_string(ds.w));

    const Index K = ds.num_classes;
    LossWeights weights{cfg.alpha.value_or(K <= 2 ? 1.0 : 0.4),
                        cfg.beta.value_or(K <= 2 ? 1.0 : 0.6)};
    weights.validate();

    ModelConfig mc;
    mc.channels = cfg.channels;
    mc.num_classes = K;
    mc.meab_reduction = cfg.meab_reduction;
    MacmdModel<float> model(mc, cfg.seed);

    // Held-out split: a one-time seeded shuffle, validation head, training tail.
    std::vector<Index> all_ids(static_cast<std::size_t>(ds.count()));
    for (Index i = 0; i < ds.count(); ++i) all_ids[static_cast<std::size_t>(i)] = i;
    CounterRng loop_rng(cfg.seed + 1);  // distinct stream from weight init
    std::vector<Index> val_ids;
    if (cfg.val_fraction > 0) {
        shuffle_indices(all_ids, loop_rng);
        const auto n_val = static_cast<std::size_t>(
            std::floor(cfg.val_fraction * static_cast<double>(ds.count())));
        val_ids.assign(all_ids.begin(), all_ids.begin() + static_cast<std::ptrdiff_t>(n_val));
        all_ids.erase(all_ids.begin(), all_ids.begin() + static_cast<std::ptrdiff_t>(n_val));
    }
    if (all_ids.empty()) throw DataError("train: validation split leaves no training samples");
    std::vector<Index> train_ids = all_ids;

    const Index steps_per_epoch =
        (static_cast<Index>(train_ids.size()) + cfg.batch_size - 1) / cfg.batch_size;
    const Index total_steps = cfg.epochs * steps_per_epoch;
    AdamWConfig oc;
    oc.lr = cfg.lr;
    oc.weight_decay = cfg.weight_decay;
    AdamW<float> opt(model.store(), oc);

    TrainResult result;
    Index global_step = 0;
    for (Index epoch = 1; epoch <= cfg.epochs; ++epoch) {
        model.set_training(true);
        shuffle_indices(train_ids, loop_rng);
        std::vector<bool> flips(train_ids.size(), false);
        if (cfg.flip) {
            for (auto&& f : flips) f = loop_rng.next_below(2) == 1;
        }

        double loss_sum = 0.0;
        Index sample_count = 0;
        DscTally tally(K);
        for (Index start = 0; start < static_cast<Index>(train_ids.size());
             start += cfg.batch_size) {
            const Index stop =
                std::min<Index>(start + cfg.batch_size, static_cast<Index>(train_ids.size()));
            std::vector<Index> batch_ids(train_ids.begin() + start, train_ids.begin() + stop);
            std::vector<bool> batch_flips(flips.begin() + start, flips.begin() + stop);

            Tensor<float> x = image_batch(ds, batch_ids, batch_flips);
            MaskBatch y = mask_batch(ds, batch_ids, batch_flips);
            y.validate(K);

            model.store().zero_grads();
            auto maps = model(x);
            Tensor<float> loss = total_loss(maps[0], maps[1], maps[2], y, weights);
            backward(loss);
            const double lr = cosine_lr(cfg.lr, cfg.lr_min, global_step, total_steps);
            opt.step(global_step + 1, lr);
            ++global_step;

            const Index n_b = stop - start;
            loss_sum += static_cast<double>(loss.item()) * static_cast<double>(n_b);
            sample_count += n_b;
            tally.add(argmax_labels(maps[0]), y);
        }

        const double epoch_loss = loss_sum / static_cast<double>(sample_count);
        const double train_dsc = tally.foreground_mean();
        result.final_epoch_loss = epoch_loss;
        result.final_train_dsc = train_dsc;

        double selection_dsc = train_dsc;
        std::ostringstream line;
        line << "epoch " << epoch << "/" << cfg.epochs << std::setprecision(6) << std::fixed
             << "  loss " << epoch_loss << "  train-dsc " << train_dsc;
        if (!val_ids.empty()) {
            Dataset val;  // borrow the samples by value; cheap at desk scale
            val.h = ds.h;
            val.w = ds.w;
            val.num_classes = ds.num_classes;
            for (Index id : val_ids) val.samples.push_back(ds.samples[static_cast<std::size_t>(id)]);
            EvalResult ev = evaluate_model(model, val, cfg.batch_size);
            selection_dsc = ev.aggregate.mean_dsc;
            line << "  val-dsc " << selection_dsc;
            model.set_training(true);
        }
        log << line.str() << "\n";

        if (selection_dsc > result.best_dsc) {
            result.best_dsc = selection_dsc;
            result.best_epoch = epoch;
            if (!cfg.checkpoint_path.empty()) save_checkpoint(model.store(), cfg.checkpoint_path);
        }
    }
    return result;
}

EvalResult evaluate_model(MacmdModel<float>& model, const Dataset& ds, Index batch_size) {
    if (ds.count() == 0) throw DataError("eval: empty dataset");
    if (batch_size < 1) throw std::invalid_argument("eval: batch size must be >= 1");
    const Index K = model.config().num_classes;
    if (K > 1 && ds.num_classes != K)
        throw DataError("eval: dataset has " + std::to_string(ds.num_classes) +
                        " classes, model predicts " + std::to_string(K));

    model.set_training(false);
    NoGradGuard eval_scope;

    const Index report_classes = K == 1 ? 2 : K;
    std::vector<double> dsc_sum(static_cast<std::size_t>(report_classes), 0.0);
    std::vector<double> hd_sum(static_cast<std::size_t>(report_classes), 0.0);
    std::vector<Index> hd_count(static_cast<std::size_t>(report_classes), 0);
    double match_total = 0.0;

    for (Index start = 0; start < ds.count(); start += batch_size) {
        const Index stop = std::min<Index>(start + batch_size, ds.count());
        std::vector<Index> ids;
        for (Index i = start; i < stop; ++i) ids.push_back(i);
        Tensor<float> x = image_batch(ds, ids);
        auto maps = model(x);
        MaskBatch pred = argmax_labels(maps[0]);
        MaskBatch truth = mask_batch(ds, ids);

        for (Index b = 0; b < stop - start; ++b) {
            MaskBatch p1{1, pred.h, pred.w, {}}, y1{1, truth.h, truth.w, {}};
            const auto plane = static_cast<std::size_t>(pred.h * pred.w);
            p1.labels.assign(pred.labels.begin() + static_cast<std::ptrdiff_t>(b * plane),
                             pred.labels.begin() + static_cast<std::ptrdiff_t>((b + 1) * plane));
            y1.labels.assign(truth.labels.begin() + static_cast<std::ptrdiff_t>(b * plane),
                             truth.labels.begin() + static_cast<std::ptrdiff_t>((b + 1) * plane));
            MetricsReport per_image = compute_metrics(p1, y1, K);
            for (Index c = 0; c < report_classes; ++c) {
                dsc_sum[static_cast<std::size_t>(c)] += per_image.dsc[static_cast<std::size_t>(c)];
                const double hd = per_image.hd95[static_cast<std::size_t>(c)];
                if (!std::isnan(hd)) {
                    hd_sum[static_cast<std::size_t>(c)] += hd;
                    ++hd_count[static_cast<std::size_t>(c)];
                }
            }
            match_total += per_image.acc * static_cast<double>(plane);
        }
    }

    EvalResult out;
    const auto n_images = static_cast<double>(ds.count());
    out.aggregate.dsc.resize(static_cast<std::size_t>(report_classes));
    out.aggregate.hd95.resize(static_cast<std::size_t>(report_classes));
    for (Index c = 0; c < report_classes; ++c) {
        out.aggregate.dsc[static_cast<std::size_t>(c)] = dsc_sum[static_cast<std::size_t>(c)] / n_images;
        out.aggregate.hd95[static_cast<std::size_t>(c)] =
            hd_count[static_cast<std::size_t>(c)] > 0
                ? hd_sum[static_cast<std::size_t>(c)] /
                      static_cast<double>(hd_count[static_cast<std::size_t>(c)])
                : std::numeric_limits<double>::quiet_NaN();
    }
    double fg = 0.0;
    for (Index c = 1; c < report_classes; ++c) fg += out.aggregate.dsc[static_cast<std::size_t>(c)];
    out.aggregate.mean_dsc =
        report_classes > 1 ? fg / static_cast<double>(report_classes - 1) : out.aggregate.dsc[0];
    out.aggregate.acc = match_total / (n_images * static_cast<double>(ds.h * ds.w));

    std::ostringstream tsv;
    tsv << "class\tdsc\thd95\n" << std::setprecision(6) << std::fixed;
    for (Index c = 0; c < report_classes; ++c) {
        tsv << c << "\t" << out.aggregate.dsc[static_cast<std::size_t>(c)] << "\t"
            << out.aggregate.hd95[static_cast<std::size_t>(c)] << "\n";
    }
    tsv << "mean\t" << out.aggregate.mean_dsc << "\t" << out.aggregate.acc << "\n";
    out.report_tsv = tsv.str();
    return out;
}

ModelConfig infer_model_config(const std::vector<CheckpointRecord>& records) {
    auto find = [&](const std::string& name) -> const CheckpointRecord* {
        for (const auto& r : records)
            if (r.name == name) return &r;
        return nullptr;
    };
    auto require = [&](const std::string& name) -> const CheckpointRecord& {
        const auto* r = find(name);
        if (!r)
            throw CheckpointError("checkpoint: missing record \"" + name +
                                  "\"; not a model checkpoint");
        return *r;
    };
    auto any_prefix = [&](const std::string& prefix) {
        for (const auto& r : records)
            if (r.name.rfind(prefix, 0) == 0) return true;
        return false;
    };

    ModelConfig mc;
    for (int i = 0; i < 4; ++i) {
        const auto& rec = require("encoder.stage" + std::to_string(i + 1) + ".conv1.weight");
        mc.channels[static_cast<std::size_t>(i)] = static_cast<Index>(rec.dims.at(0));
    }
    mc.num_classes = static_cast<Index>(require("decoder.predict4.weight").dims.at(0));
    mc.use_mcag_apm = any_prefix("decoder.mcag1.");
    mc.use_msccm = any_prefix("decoder.msccm.");
    mc.use_meab = any_prefix("decoder.meab.");
    if (mc.use_meab) {
        const auto& ca1 = require("decoder.meab.ca1.weight");
        const Index hidden = static_cast<Index>(ca1.dims.at(0));
        if (hidden <= 0 || mc.channels[3] % hidden != 0)
            throw CheckpointError("checkpoint: channel-attention extents are inconsistent");
        mc.meab_reduction = mc.channels[3] / hidden;
    }
    try {
        mc.validate();
    } catch (const std::exception& e) {
        throw CheckpointError(std::string("checkpoint: implausible architecture: ") + e.what());
    }
    return mc;
}

}  // namespace macmd
