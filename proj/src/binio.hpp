#pragma once

// Little-endian byte packing shared by the histogram and weight file formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "skinseg/error.hpp"

namespace skinseg::detail {

class ByteWriter {
public:
    void raw(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }

    template <class U>
    void uint(U v)
    {
        for (std::size_t i = 0; i < sizeof(U); ++i)
            buf_.push_back(std::uint8_t((v >> (8 * i)) & 0xff));
    }

    void f32(float v) { uint(std::bit_cast<std::uint32_t>(v)); }

    std::vector<std::uint8_t> take() { return std::move(buf_); }

private:
    std::vector<std::uint8_t> buf_;
};

class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    bool has(std::size_t n) const { return bytes_.size() - pos_ >= n; }
    std::size_t remaining() const { return bytes_.size() - pos_; }

    std::string raw(std::size_t n, const std::string& what)
    {
        need(n, what);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }

    template <class U>
    U uint(const std::string& what)
    {
        need(sizeof(U), what);
        U v = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i)
            v |= U(bytes_[pos_ + i]) << (8 * i);
        pos_ += sizeof(U);
        return v;
    }

    float f32(const std::string& what) { return std::bit_cast<float>(uint<std::uint32_t>(what)); }

private:
    void need(std::size_t n, const std::string& what) const
    {
        if (!has(n))
            throw ParseError(ParseErrorKind::Truncated, "truncated while reading " + what);
    }

    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

}  // namespace skinseg::detail
