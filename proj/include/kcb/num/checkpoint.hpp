#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kcb/binary_io.hpp"
#include "kcb/num/tensor.hpp"

namespace kcb::num {

inline constexpr char kCheckpointMagic[4] = {'K', 'C', 'W', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedBlock {
    std::string name;
    Shape shape;
    std::vector<float> values;

    friend bool operator==(const NamedBlock&, const NamedBlock&) = default;
};

// Layout: "KCWT", version u32, block count u64, then per block: name (u16
// length + UTF-8), dtype u8 (0 = f32), rank u8, extents u64 x rank, values
// as little-endian f32.
inline std::string encode_checkpoint(const std::vector<NamedBlock>& blocks) {
    ByteWriter w;
    w.raw(kCheckpointMagic, 4);
    w.u32(kCheckpointVersion);
    w.u64(blocks.size());
    for (const auto& b : blocks) {
        if (numel(b.shape) != b.values.size()) {
            throw ShapeError("checkpoint block '" + b.name + "' has shape " + shape_str(b.shape) + " but " +
                             std::to_string(b.values.size()) + " values");
        }
        if (b.shape.size() > 0xFF) throw FormatError("checkpoint block '" + b.name + "' rank too large");
        w.short_string(b.name, "block name");
        w.u8(0);
        w.u8(static_cast<std::uint8_t>(b.shape.size()));
        for (auto e : b.shape) w.u64(e);
        w.raw(b.values.data(), b.values.size() * sizeof(float));
    }
    return w.buffer();
}

inline std::vector<NamedBlock> decode_checkpoint(std::string bytes) {
    ByteReader r(std::move(bytes), [](const std::string& where) {
        throw FormatError("truncated checkpoint (" + where + ")");
    });
    if (r.bytes(4) != std::string(kCheckpointMagic, 4)) throw FormatError("bad checkpoint magic");
    const auto version = r.u32();
    if (version != kCheckpointVersion) {
        throw FormatError("checkpoint version " + std::to_string(version) + " unsupported (supported: " +
                          std::to_string(kCheckpointVersion) + ")");
    }
    const auto count = r.u64();
    std::vector<NamedBlock> blocks;
    for (std::uint64_t i = 0; i < count; ++i) {
        NamedBlock b;
        b.name = r.short_string();
        if (const auto dtype = r.u8(); dtype != 0) {
            throw FormatError("checkpoint block '" + b.name + "': unsupported dtype " + std::to_string(dtype));
        }
        const auto rank = r.u8();
        std::uint64_t total = 1;
        for (int k = 0; k < rank; ++k) {
            const auto e = r.u64();
            if (e != 0 && total > r.remaining() / e) throw FormatError("truncated checkpoint (block extents)");
            total *= e;
            b.shape.push_back(static_cast<std::size_t>(e));
        }
        b.values.resize(total);
        r.floats(b.values.data(), total);
        blocks.push_back(std::move(b));
    }
    if (r.remaining() != 0) throw FormatError("trailing bytes after checkpoint");
    return blocks;
}

inline void save_checkpoint(const std::string& path, const std::vector<NamedBlock>& blocks) {
    ByteWriter w;
    w.bytes(encode_checkpoint(blocks));
    w.write_file(path);
}

inline std::vector<NamedBlock> load_checkpoint(const std::string& path) {
    return decode_checkpoint(ByteReader::slurp(path));
}

}  // namespace kcb::num
