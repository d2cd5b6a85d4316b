#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "macmd/errors.hpp"
#include "macmd/param_store.hpp"

namespace macmd {

/// One named tensor in a checkpoint file.
struct CheckpointRecord {
    std::string name;
    std::vector<std::uint32_t> dims;  // 1..4 extents
    std::vector<float> data;
};

inline constexpr char kCheckpointMagic[8] = {'M', 'A', 'C', 'M', 'D', 'C', 'K', '1'};

namespace detail {

inline void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
}

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f32(std::string& out, float v) {
    put_u32(out, std::bit_cast<std::uint32_t>(v));
}

/// Sequential little-endian reader over a whole file image.
struct ByteReader {
    const std::string& bytes;
    std::size_t pos = 0;

    bool exhausted() const { return pos >= bytes.size(); }

    void need(std::size_t n, const char* what) {
        if (bytes.size() - pos < n)
            throw CheckpointError(std::string("checkpoint: truncated file while reading ") + what);
    }
    std::uint8_t u8(const char* what) {
        need(1, what);
        return static_cast<std::uint8_t>(bytes[pos++]);
    }
    std::uint16_t u16(const char* what) {
        need(2, what);
        const auto lo = static_cast<std::uint8_t>(bytes[pos]);
        const auto hi = static_cast<std::uint8_t>(bytes[pos + 1]);
        pos += 2;
        return static_cast<std::uint16_t>(lo | (hi << 8));
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(bytes[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }
    float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
};

}  // namespace detail

/// Serializes records in order: magic, count, then per record the name
/// (u16 length prefix), rank (u8), extents (u32 each), and raw 32-bit
/// little-endian values.
inline void write_checkpoint(const std::string& path,
                             const std::vector<CheckpointRecord>& records) {
    std::string out;
    out.append(kCheckpointMagic, sizeof kCheckpointMagic);
    detail::put_u32(out, static_cast<std::uint32_t>(records.size()));
    std::unordered_set<std::string> seen;
    for (const auto& rec : records) {
        if (rec.name.empty() || rec.name.size() > 0xffff)
            throw CheckpointError("checkpoint: bad record name length for \"" + rec.name + "\"");
        if (!seen.insert(rec.name).second)
            throw CheckpointError("checkpoint: duplicate record \"" + rec.name + "\"");
        if (rec.dims.empty() || rec.dims.size() > 4)
            throw CheckpointError("checkpoint: record \"" + rec.name + "\" has unsupported rank " +
                                  std::to_string(rec.dims.size()));
        std::size_t count = 1;
        for (auto d : rec.dims) count *= d;
        if (count != rec.data.size())
            throw CheckpointError("checkpoint: record \"" + rec.name + "\" extents disagree with " +
                                  std::to_string(rec.data.size()) + " values");
        detail::put_u16(out, static_cast<std::uint16_t>(rec.name.size()));
        out.append(rec.name);
        out.push_back(static_cast<char>(rec.dims.size()));
        for (auto d : rec.dims) detail::put_u32(out, d);
        for (float v : rec.data) detail::put_f32(out, v);
    }
    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) throw CheckpointError("checkpoint: cannot write " + path);
    file.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!file) throw CheckpointError("checkpoint: write failed for " + path);
}

inline std::vector<CheckpointRecord> read_checkpoint(const std::string& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) throw CheckpointError("checkpoint: cannot open " + path);
    std::string bytes((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());

    detail::ByteReader r{bytes};
    r.need(sizeof kCheckpointMagic, "magic");
    if (bytes.compare(0, sizeof kCheckpointMagic, kCheckpointMagic, sizeof kCheckpointMagic) != 0)
        throw CheckpointError("checkpoint: bad magic in " + path);
    r.pos = sizeof kCheckpointMagic;

    const std::uint32_t count = r.u32("record count");
    std::vector<CheckpointRecord> records;
    records.reserve(count);
    std::unordered_set<std::string> seen;
    for (std::uint32_t i = 0; i < count; ++i) {
        CheckpointRecord rec;
        const auto name_len = r.u16("name length");
        r.need(name_len, "record name");
        rec.name = bytes.substr(r.pos, name_len);
        r.pos += name_len;
        if (!seen.insert(rec.name).second)
            throw CheckpointError("checkpoint: duplicate record \"" + rec.name + "\"");
        const auto rank = r.u8("rank");
        if (rank < 1 || rank > 4)
            throw CheckpointError("checkpoint: record \"" + rec.name + "\" has unsupported rank " +
                                  std::to_string(int(rank)));
        std::size_t value_count = 1;
        for (int d = 0; d < rank; ++d) {
            rec.dims.push_back(r.u32("extent"));
            value_count *= rec.dims.back();
        }
        rec.data.resize(value_count);
        for (auto& v : rec.data) v = r.f32("tensor values");
        records.push_back(std::move(rec));
    }
    if (!r.exhausted())
        throw CheckpointError("checkpoint: trailing bytes after last record in " + path);
    return records;
}

namespace detail {

inline std::vector<std::uint32_t> dims_of(const Shape& s) {
    std::vector<std::uint32_t> dims;
    for (Index i = 0; i < s.rank(); ++i) dims.push_back(static_cast<std::uint32_t>(s[i]));
    return dims;
}

/// The canonical record sequence for a store: every parameter in
/// registration order, then each norm layer's running mean and variance.
template <typename S>
std::vector<CheckpointRecord> store_records(const ParamStore<S>& store) {
    std::vector<CheckpointRecord> records;
    for (const auto& p : store.parameters()) {
        CheckpointRecord rec;
        rec.name = p.name;
        rec.dims = dims_of(p.value.shape());
        const S* v = p.value.data();
        rec.data.assign(v, v + p.value.size());
        records.push_back(std::move(rec));
    }
    for (Index i = 0; i < store.norm_state_count(); ++i) {
        const auto& st = store.norm_state(i);
        CheckpointRecord mean{store.norm_state_name(i) + ".running_mean",
                             {static_cast<std::uint32_t>(st.running_mean.size())},
                             std::vector<float>(st.running_mean.begin(), st.running_mean.end())};
        CheckpointRecord var{store.norm_state_name(i) + ".running_var",
                            {static_cast<std::uint32_t>(st.running_var.size())},
                            std::vector<float>(st.running_var.begin(), st.running_var.end())};
        records.push_back(std::move(mean));
        records.push_back(std::move(var));
    }
    return records;
}

}  // namespace detail

template <typename S>
void save_checkpoint(const ParamStore<S>& store, const std::string& path) {
    write_checkpoint(path, detail::store_records(store));
}

/// Strict load: the file must carry exactly the store's record sequence;
/// the first name or extent mismatch is reported by name.
template <typename S>
void load_checkpoint(ParamStore<S>& store, const std::string& path) {
    const auto records = read_checkpoint(path);
    const auto expected = detail::store_records(store);
    if (records.size() != expected.size())
        throw CheckpointError("checkpoint: file holds " + std::to_string(records.size()) +
                              " records, the model expects " + std::to_string(expected.size()));
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (records[i].name != expected[i].name)
            throw CheckpointError("checkpoint: expected record \"" + expected[i].name +
                                  "\" but found \"" + records[i].name + "\"");
        if (records[i].dims != expected[i].dims)
            throw CheckpointError("checkpoint: record \"" + records[i].name +
                                  "\" has mismatching extents");
    }
    // All names and extents agree; copy values in.
    std::size_t i = 0;
    for (auto& p : store.parameters()) {
        S* v = p.value.data();
        for (std::size_t k = 0; k < records[i].data.size(); ++k) v[k] = S(records[i].data[k]);
        ++i;
    }
    for (Index n = 0; n < store.norm_state_count(); ++n) {
        auto& st = store.norm_state(n);
        for (std::size_t k = 0; k < st.running_mean.size(); ++k)
            st.running_mean[k] = S(records[i].data[k]);
        ++i;
        for (std::size_t k = 0; k < st.running_var.size(); ++k)
            st.running_var[k] = S(records[i].data[k]);
        ++i;
    }
}

}  // namespace macmd
