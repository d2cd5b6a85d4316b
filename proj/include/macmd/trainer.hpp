#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "macmd/checkpoint.hpp"
#include "macmd/dataset.hpp"
#include "macmd/metrics.hpp"
#include "macmd/model.hpp"

namespace macmd {

struct TrainConfig {
    std::uint64_t seed = 7;
    Index epochs = 1;
    Index batch_size = 8;
    double lr = 1e-3;
    double lr_min = 1e-6;
    double weight_decay = 1e-4;
    std::optional<double> alpha;  // unset: 1 for K<=2, 0.4 otherwise
    std::optional<double> beta;   // unset: 1 for K<=2, 0.6 otherwise
    std::array<Index, 4> channels{32, 64, 128, 256};
    Index meab_reduction = 16;
    Index expect_classes = 0;  // 0: take the dataset's class count
    Index expect_size = 0;     // 0: accept the dataset's image size
    double val_fraction = 0.0;
    bool flip = false;  // horizontal-flip augmentation
    std::string checkpoint_path;

    void validate() const;
};

struct TrainResult {
    double final_epoch_loss = 0.0;  // sample-weighted mean loss of the last epoch
    double final_train_dsc = 0.0;   // pooled foreground DSC of the last epoch
    double best_dsc = -1.0;         // best selection DSC seen
    Index best_epoch = 0;           // 1-based epoch of the best checkpoint
};

/// Seeded, single-threaded training loop: shuffled batches, composite loss
/// over the three prediction maps, decoupled-decay Adam on a cosine schedule,
/// one log line per epoch, best-DSC checkpointing.
TrainResult train_model(const TrainConfig& cfg, const Dataset& ds, std::ostream& log);

struct EvalResult {
    MetricsReport aggregate;  // per-class means over images; pooled accuracy
    std::string report_tsv;   // class/dsc/hd95 rows plus the mean/acc summary
};

/// Eval-mode inference over the whole set: final prediction map only, hard
/// labels, per-image metrics averaged per class (undefined distances
/// skipped), pooled pixel accuracy.
EvalResult evaluate_model(MacmdModel<float>& model, const Dataset& ds, Index batch_size = 8);

/// Reconstructs the architecture a checkpoint was saved from by inspecting
/// record names and extents.
ModelConfig infer_model_config(const std::vector<CheckpointRecord>& records);

}  // namespace macmd
