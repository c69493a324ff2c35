#pragma once

#include <bit>
#include <cstring>
#include <filesystem>
#include <string>
#include <type_traits>

#include "ekila/common.hpp"

namespace ekila::binio {

/// Little-endian append-only byte buffer.
class Writer {
public:
    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u32(std::uint32_t v) { put(v); }
    void u64(std::uint64_t v) { put(v); }
    void i32(std::int32_t v) { put(static_cast<std::uint32_t>(v)); }
    void f32(float v) { put(std::bit_cast<std::uint32_t>(v)); }
    void f64(double v) { put(std::bit_cast<std::uint64_t>(v)); }
    void raw(ByteView bytes) { buf_.insert(buf_.end(), bytes.begin(), bytes.end()); }
    void magic(std::string_view m) { raw(ByteView(reinterpret_cast<const std::uint8_t*>(m.data()), m.size())); }
    /// u32 length prefix followed by UTF-8 bytes.
    void str(std::string_view s) {
        u32(static_cast<std::uint32_t>(s.size()));
        magic(s);
    }
    template <class T>
    void floats(std::span<const T> values) {
        for (T v : values) {
            if constexpr (std::is_same_v<T, float>) f32(v);
            else f32(static_cast<float>(v));
        }
    }

    const Bytes& bytes() const { return buf_; }
    Bytes take() { return std::move(buf_); }

private:
    template <class U>
    void put(U v) {
        for (std::size_t i = 0; i < sizeof(U); ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    Bytes buf_;
};

class Reader {
public:
    explicit Reader(ByteView data) : data_(data) {}

    std::uint8_t u8() { need(1); return data_[pos_++]; }
    std::uint32_t u32() { return get<std::uint32_t>(); }
    std::uint64_t u64() { return get<std::uint64_t>(); }
    std::int32_t i32() { return static_cast<std::int32_t>(get<std::uint32_t>()); }
    float f32() { return std::bit_cast<float>(get<std::uint32_t>()); }
    double f64() { return std::bit_cast<double>(get<std::uint64_t>()); }
    ByteView raw(std::size_t n) {
        need(n);
        ByteView out = data_.subspan(pos_, n);
        pos_ += n;
        return out;
    }
    std::string str() {
        std::uint32_t n = u32();
        ByteView b = raw(n);
        return std::string(b.begin(), b.end());
    }
    void expectMagic(std::string_view m) {
        ByteView b = raw(m.size());
        if (std::memcmp(b.data(), m.data(), m.size()) != 0)
            fail(ErrorCode::Format, "bad magic, expected '" + std::string(m) + "'");
    }

    std::size_t position() const { return pos_; }
    std::size_t remaining() const { return data_.size() - pos_; }
    bool atEnd() const { return pos_ == data_.size(); }

private:
    void need(std::size_t n) const {
        if (data_.size() - pos_ < n) fail(ErrorCode::Format, "truncated binary data");
    }
    template <class U>
    U get() {
        need(sizeof(U));
        U v = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(data_[pos_ + i]) << (8 * i);
        pos_ += sizeof(U);
        return v;
    }
    ByteView data_;
    std::size_t pos_ = 0;
};

Bytes readFile(const std::filesystem::path& path);
void writeFile(const std::filesystem::path& path, ByteView data);
std::string readText(const std::filesystem::path& path);
void writeText(const std::filesystem::path& path, std::string_view text);

}  // namespace ekila::binio
