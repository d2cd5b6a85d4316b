#include "macmd/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "macmd/errors.hpp"
#include "macmd/rng.hpp"

namespace macmd {

namespace fs = std::filesystem;

void SyntheticSpec::validate() const {
    if (count < 1) throw DataError("synthetic spec: count must be >= 1");
    if (size < 16) throw DataError("synthetic spec: size must be >= 16");
    if (num_classes < 2) throw DataError("synthetic spec: need >= 2 classes (background + 1)");
    if (num_classes > 255)
        throw DataError("synthetic spec: class count exceeds the 8-bit mask range");
    if (min_shapes < 1 || max_shapes < min_shapes)
        throw DataError("synthetic spec: bad shapes-per-image range");
    if (noise < 0 || noise > 100) throw DataError("synthetic spec: noise out of range");
}

namespace {

std::uint8_t clamp_byte(Index v) {
    return static_cast<std::uint8_t>(std::clamp<Index>(v, 0, 255));
}

std::string numbered(const char* stem, Index i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s_%05lld.pgm", stem, static_cast<long long>(i));
    return buf;
}

}  // namespace

std::string gen_dataset(const SyntheticSpec& spec, const std::string& dir) {
    spec.validate();
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw DataError("gen-data: cannot create directory " + dir);

    const Index S = spec.size;
    const Index K = spec.num_classes;
    CounterRng rng(spec.seed);

    std::ostringstream manifest;
    manifest << "index\timage\tmask";
    for (Index c = 0; c < K; ++c) manifest << "\tcount_" << c;
    manifest << "\n";

    PgmImage img{S, S, std::vector<std::uint8_t>(static_cast<std::size_t>(S * S))};
    PgmImage msk = img;
    for (Index i = 0; i < spec.count; ++i) {
        std::fill(img.pixels.begin(), img.pixels.end(), std::uint8_t{30});
        std::fill(msk.pixels.begin(), msk.pixels.end(), std::uint8_t{0});

        const Index n_shapes =
            spec.min_shapes + static_cast<Index>(rng.next_below(
                                  static_cast<std::uint64_t>(spec.max_shapes - spec.min_shapes + 1)));
        for (Index s = 0; s < n_shapes; ++s) {
            const Index cls = 1 + static_cast<Index>(rng.next_below(static_cast<std::uint64_t>(K - 1)));
            const bool ellipse = rng.next_below(2) == 0;
            const Index span = S / 4 - S / 8 + 1;  // half-axes in [S/8, S/4]
            const Index a = S / 8 + static_cast<Index>(rng.next_below(static_cast<std::uint64_t>(span)));
            const Index b = S / 8 + static_cast<Index>(rng.next_below(static_cast<std::uint64_t>(span)));
            const Index cy = static_cast<Index>(rng.next_below(static_cast<std::uint64_t>(S)));
            const Index cx = static_cast<Index>(rng.next_below(static_cast<std::uint64_t>(S)));
            const Index jitter = static_cast<Index>(rng.next_below(21)) - 10;
            const Index base = 30 + (cls * 200) / (K - 1);
            const std::uint8_t shade = clamp_byte(base + jitter);

            const Index h0 = std::max<Index>(0, cy - b), h1 = std::min<Index>(S - 1, cy + b);
            const Index w0 = std::max<Index>(0, cx - a), w1 = std::min<Index>(S - 1, cx + a);
            for (Index h = h0; h <= h1; ++h)
                for (Index w = w0; w <= w1; ++w) {
                    const Index dy = h - cy, dx = w - cx;
                    if (ellipse && dx * dx * b * b + dy * dy * a * a > a * a * b * b) continue;
                    img.at(h, w) = shade;
                    msk.at(h, w) = static_cast<std::uint8_t>(cls);
                }
        }
        if (spec.noise > 0) {
            for (auto& px : img.pixels) {
                const Index delta =
                    static_cast<Index>(rng.next_below(static_cast<std::uint64_t>(2 * spec.noise + 1))) -
                    spec.noise;
                px = clamp_byte(static_cast<Index>(px) + delta);
            }
        }

        const std::string img_name = numbered("img", i);
        const std::string msk_name = numbered("msk", i);
        write_pgm((fs::path(dir) / img_name).string(), img);
        write_pgm((fs::path(dir) / msk_name).string(), msk);

        std::vector<Index> counts(static_cast<std::size_t>(K), 0);
        for (auto px : msk.pixels) ++counts[px];
        manifest << i << "\t" << img_name << "\t" << msk_name;
        for (Index c = 0; c < K; ++c) manifest << "\t" << counts[static_cast<std::size_t>(c)];
        manifest << "\n";
    }

    const std::string manifest_path = (fs::path(dir) / "manifest.tsv").string();
    std::ofstream out(manifest_path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("gen-data: cannot write " + manifest_path);
    out << manifest.str();
    if (!out) throw DataError("gen-data: write failed for " + manifest_path);
    return manifest_path;
}

Dataset load_dataset(const std::string& dir) {
    const std::string manifest_path = (fs::path(dir) / "manifest.tsv").string();
    std::ifstream in(manifest_path, std::ios::binary);
    if (!in) throw DataError("dataset: cannot open " + manifest_path);

    std::string line;
    if (!std::getline(in, line)) throw DataError("dataset: empty manifest " + manifest_path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> cols;
    {
        std::istringstream hdr(line);
        std::string col;
        while (std::getline(hdr, col, '\t')) cols.push_back(col);
    }
    if (cols.size() < 4 || cols[0] != "index" || cols[1] != "image" || cols[2] != "mask")
        throw DataError("dataset: unexpected manifest header in " + manifest_path);
    for (std::size_t c = 3; c < cols.size(); ++c) {
        if (cols[c] != "count_" + std::to_string(c - 3))
            throw DataError("dataset: unexpected manifest column '" + cols[c] + "'");
    }

    Dataset ds;
    ds.num_classes = static_cast<Index>(cols.size() - 3);
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string index_s, img_rel, msk_rel;
        if (!std::getline(row, index_s, '\t') || !std::getline(row, img_rel, '\t') ||
            !std::getline(row, msk_rel, '\t'))
            throw DataError("dataset: short manifest row '" + line + "'");

        LoadedSample sample;
        sample.image = read_pgm((fs::path(dir) / img_rel).string());
        sample.mask = read_pgm((fs::path(dir) / msk_rel).string());
        if (sample.image.width != sample.mask.width || sample.image.height != sample.mask.height)
            throw DataError("dataset: image/mask size mismatch for " + img_rel);
        if (ds.samples.empty()) {
            ds.h = sample.image.height;
            ds.w = sample.image.width;
        } else if (sample.image.height != ds.h || sample.image.width != ds.w) {
            throw DataError("dataset: inconsistent image sizes at " + img_rel);
        }
        for (auto px : sample.mask.pixels) {
            if (px >= ds.num_classes)
                throw DataError("dataset: mask label " + std::to_string(int(px)) +
                                " out of range in " + msk_rel);
        }
        ds.samples.push_back(std::move(sample));
    }
    if (ds.samples.empty()) throw DataError("dataset: no samples listed in " + manifest_path);
    return ds;
}

PgmImage hflip(const PgmImage& img) {
    PgmImage out = img;
    for (Index h = 0; h < img.height; ++h)
        for (Index w = 0; w < img.width; ++w) out.at(h, w) = img.at(h, img.width - 1 - w);
    return out;
}

Tensor<float> image_batch(const Dataset& ds, const std::vector<Index>& ids,
                          const std::vector<bool>& flip) {
    const Index N = static_cast<Index>(ids.size());
    if (N == 0) throw DataError("dataset: empty batch requested");
    auto x = Tensor<float>::zeros(Shape{N, 3, ds.h, ds.w});
    float* out = x.data();
    const Index plane = ds.h * ds.w;
    for (Index n = 0; n < N; ++n) {
        const auto& raw = ds.samples.at(static_cast<std::size_t>(ids[static_cast<std::size_t>(n)])).image;
        const bool mirrored = n < static_cast<Index>(flip.size()) && flip[static_cast<std::size_t>(n)];
        const PgmImage img = mirrored ? hflip(raw) : raw;
        for (Index i = 0; i < plane; ++i) {
            const float v = static_cast<float>(img.pixels[static_cast<std::size_t>(i)]) / 255.0f;
            out[(n * 3 + 0) * plane + i] = v;
            out[(n * 3 + 1) * plane + i] = v;
            out[(n * 3 + 2) * plane + i] = v;
        }
    }
    return x;
}

MaskBatch mask_batch(const Dataset& ds, const std::vector<Index>& ids,
                     const std::vector<bool>& flip) {
    const Index N = static_cast<Index>(ids.size());
    if (N == 0) throw DataError("dataset: empty batch requested");
    MaskBatch mb;
    mb.n = N;
    mb.h = ds.h;
    mb.w = ds.w;
    mb.labels.resize(static_cast<std::size_t>(N * ds.h * ds.w));
    const Index plane = ds.h * ds.w;
    for (Index n = 0; n < N; ++n) {
        const auto& raw = ds.samples.at(static_cast<std::size_t>(ids[static_cast<std::size_t>(n)])).mask;
        const bool mirrored = n < static_cast<Index>(flip.size()) && flip[static_cast<std::size_t>(n)];
        const PgmImage msk = mirrored ? hflip(raw) : raw;
        for (Index i = 0; i < plane; ++i)
            mb.labels[static_cast<std::size_t>(n * plane + i)] =
                static_cast<int>(msk.pixels[static_cast<std::size_t>(i)]);
    }
    return mb;
}

}  // namespace macmd
