#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <string_view>

#include "kcb/error.hpp"

namespace kcb {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

class ByteWriter {
public:
    void u8(std::uint8_t v) { raw(&v, 1); }
    void u16(std::uint16_t v) { raw(&v, 2); }
    void u32(std::uint32_t v) { raw(&v, 4); }
    void u64(std::uint64_t v) { raw(&v, 8); }
    void f32(float v) { raw(&v, 4); }
    void bytes(std::string_view s) { buf_.append(s); }
    void raw(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }

    // Length-prefixed (u16) UTF-8 string.
    void short_string(std::string_view s, const char* what) {
        if (s.size() > 0xFFFF) throw FormatError(std::string(what) + " longer than 65535 bytes");
        u16(static_cast<std::uint16_t>(s.size()));
        bytes(s);
    }

    const std::string& buffer() const { return buf_; }

    void write_file(const std::string& path) const {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw FormatError("cannot open '" + path + "' for writing");
        out.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
        if (!out) throw FormatError("failed writing '" + path + "'");
    }

private:
    std::string buf_;
};

// Bounds-checked reader; running past the end calls `on_truncated`, which
// must throw.
class ByteReader {
public:
    using TruncatedFn = std::function<void(const std::string&)>;

    ByteReader(std::string data, TruncatedFn on_truncated)
        : data_(std::move(data)), on_truncated_(std::move(on_truncated)) {}

    static std::string slurp(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw FormatError("cannot open '" + path + "'");
        std::stringstream ss;
        ss << in.rdbuf();
        return ss.str();
    }

    std::uint8_t u8() { return pod<std::uint8_t>(); }
    std::uint16_t u16() { return pod<std::uint16_t>(); }
    std::uint32_t u32() { return pod<std::uint32_t>(); }
    std::uint64_t u64() { return pod<std::uint64_t>(); }
    float f32() { return pod<float>(); }

    std::string bytes(std::size_t n) {
        need(n);
        std::string s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    std::string short_string() { return bytes(u16()); }

    void floats(float* dst, std::size_t count) {
        if (count > (data_.size() - pos_) / sizeof(float)) on_truncated_("float payload");
        std::memcpy(dst, data_.data() + pos_, count * sizeof(float));
        pos_ += count * sizeof(float);
    }

    std::size_t remaining() const { return data_.size() - pos_; }
    std::size_t position() const { return pos_; }

private:
    void need(std::size_t n) {
        if (n > data_.size() - pos_) on_truncated_("need " + std::to_string(n) + " bytes at offset " +
                                                   std::to_string(pos_));
    }

    template <class Pod>
    Pod pod() {
        need(sizeof(Pod));
        Pod v;
        std::memcpy(&v, data_.data() + pos_, sizeof(Pod));
        pos_ += sizeof(Pod);
        return v;
    }

    std::string data_;
    std::size_t pos_ = 0;
    TruncatedFn on_truncated_;
};

}  // namespace kcb
