#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "macmd/shape.hpp"

namespace macmd {

/// 8-bit grayscale raster, rows top to bottom.
struct PgmImage {
    Index width = 0;
    Index height = 0;
    std::vector<std::uint8_t> pixels;  // height*width bytes, row-major

    std::uint8_t at(Index h, Index w) const {
        return pixels[static_cast<std::size_t>(h * width + w)];
    }
    std::uint8_t& at(Index h, Index w) {
        return pixels[static_cast<std::size_t>(h * width + w)];
    }
};

/// Reads a binary (P5) PGM with maxval <= 255; '#' comments allowed in the header.
PgmImage read_pgm(const std::string& path);

/// Writes a binary (P5) PGM with maxval 255.
void write_pgm(const std::string& path, const PgmImage& img);

}  // namespace macmd
