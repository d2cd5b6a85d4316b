#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "macmd/mask.hpp"
#include "macmd/pgm.hpp"
#include "macmd/tensor.hpp"

namespace macmd {

/// Recipe for a deterministic synthetic segmentation set: ellipses and
/// rectangles in per-class intensity bands on a noisy dark background.
struct SyntheticSpec {
    Index count = 16;
    Index size = 64;        // square images
    Index num_classes = 3;  // label values 0..K-1, 0 = background
    Index min_shapes = 1;
    Index max_shapes = 3;
    Index noise = 8;  // max per-pixel intensity perturbation
    std::uint64_t seed = 7;

    void validate() const;
};

/// Writes img_%05d.pgm / msk_%05d.pgm pairs plus manifest.tsv into dir and
/// returns the manifest path. Output bytes depend only on the spec.
std::string gen_dataset(const SyntheticSpec& spec, const std::string& dir);

struct LoadedSample {
    PgmImage image;
    PgmImage mask;
};

struct Dataset {
    Index h = 0;
    Index w = 0;
    Index num_classes = 0;
    std::vector<LoadedSample> samples;

    Index count() const { return static_cast<Index>(samples.size()); }
};

/// Reads manifest.tsv in dir; class count is inferred from its count columns.
Dataset load_dataset(const std::string& dir);

/// Mirrors an image about its vertical axis.
PgmImage hflip(const PgmImage& img);

/// Stacks the chosen samples into a [N,3,H,W] batch: pixel/255 replicated to
/// three channels. flip[i] mirrors sample i.
Tensor<float> image_batch(const Dataset& ds, const std::vector<Index>& ids,
                          const std::vector<bool>& flip = {});

/// Stacks the chosen samples' masks; flip[i] mirrors sample i.
MaskBatch mask_batch(const Dataset& ds, const std::vector<Index>& ids,
                     const std::vector<bool>& flip = {});

}  // namespace macmd
