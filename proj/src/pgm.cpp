#include "macmd/pgm.hpp"

#include <cctype>
#include <fstream>

#include "macmd/errors.hpp"

namespace macmd {

namespace {

/// Next header token, skipping whitespace and '#' comments.
std::string next_token(std::istream& in, const std::string& path) {
    int c = in.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = in.get();
        } else if (std::isspace(c)) {
            c = in.get();
        } else {
            break;
        }
    }
    if (c == EOF) throw DataError("pgm: truncated header in " + path);
    std::string tok;
    while (c != EOF && !std::isspace(c) && c != '#') {
        tok.push_back(static_cast<char>(c));
        c = in.get();
    }
    if (c != EOF) in.unget();  // the terminator is not part of the token
    return tok;
}

Index parse_dim(const std::string& tok, const std::string& axis, const std::string& path) {
    Index value = 0;
    for (char ch : tok) {
        if (ch < '0' || ch > '9')
            throw DataError("pgm: non-numeric " + axis + " '" + tok + "' in " + path);
        value = value * 10 + (ch - '0');
        if (value > (Index{1} << 30)) throw DataError("pgm: " + axis + " too large in " + path);
    }
    if (tok.empty() || value <= 0) throw DataError("pgm: bad " + axis + " in " + path);
    return value;
}

}  // namespace

PgmImage read_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("pgm: cannot open " + path);

    if (next_token(in, path) != "P5") throw DataError("pgm: not a binary P5 file: " + path);
    PgmImage img;
    img.width = parse_dim(next_token(in, path), "width", path);
    img.height = parse_dim(next_token(in, path), "height", path);
    const Index maxval = parse_dim(next_token(in, path), "maxval", path);
    if (maxval > 255) throw DataError("pgm: maxval " + std::to_string(maxval) +
                                      " exceeds single-byte range in " + path);
    // Exactly one whitespace byte separates the header from the raster.
    const int sep = in.get();
    if (sep == EOF || !std::isspace(sep)) throw DataError("pgm: malformed raster separator in " + path);

    img.pixels.resize(static_cast<std::size_t>(img.width * img.height));
    in.read(reinterpret_cast<char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
    if (in.gcount() != static_cast<std::streamsize>(img.pixels.size()))
        throw DataError("pgm: truncated raster in " + path);
    return img;
}

void write_pgm(const std::string& path, const PgmImage& img) {
    if (img.width <= 0 || img.height <= 0 ||
        img.pixels.size() != static_cast<std::size_t>(img.width * img.height))
        throw DataError("pgm: inconsistent image dimensions for " + path);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("pgm: cannot write " + path);
    out << "P5\n" << img.width << " " << img.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.pixels.data()),
              static_cast<std::streamsize>(img.pixels.size()));
    if (!out) throw DataError("pgm: write failed for " + path);
}

}  // namespace macmd
