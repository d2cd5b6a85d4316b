#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "macmd/shape.hpp"

namespace macmd {

/// Integer class labels for a batch of masks, row-major [N,H,W].
struct MaskBatch {
    Index n = 0, h = 0, w = 0;
    std::vector<int> labels;

    Index size() const { return n * h * w; }

    void validate(Index num_classes) const {
        if (static_cast<Index>(labels.size()) != size()) {
            throw std::invalid_argument("MaskBatch: " + std::to_string(labels.size()) +
                                        " labels for a " + std::to_string(n) + "x" +
                                        std::to_string(h) + "x" + std::to_string(w) + " batch");
        }
        const int limit = static_cast<int>(num_classes == 1 ? 2 : num_classes);
        for (int v : labels) {
            if (v < 0 || v >= limit) {
                throw std::invalid_argument("MaskBatch: label value " + std::to_string(v) +
                                            " out of range for " + std::to_string(num_classes) +
                                            " classes");
            }
        }
    }
};

}  // namespace macmd
