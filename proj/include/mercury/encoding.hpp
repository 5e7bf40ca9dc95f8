#pragma once

#include <cstddef>
#include <string>
#include <string_view>

#include "mercury/common.hpp"

namespace mercury {

struct DecodeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Canonical message encoding: every field is a 4-byte big-endian length
/// followed by its bytes, in declaration order. Integers are 8-byte
/// big-endian. Nested structures are encoded as a single bytes field.
class Encoder {
public:
    Encoder& u64(std::uint64_t value);
    Encoder& boolean(bool value) { return u64(value ? 1 : 0); }
    Encoder& bytes(ByteView data);
    Encoder& str(std::string_view text);
    Encoder& address(const Address& addr) { return bytes(addr.bytes); }
    template <std::size_t N>
    Encoder& fixed(const std::array<std::uint8_t, N>& data) {
        return bytes(ByteView(data.data(), N));
    }

    const Bytes& view() const { return out_; }
    Bytes take() { return std::move(out_); }

private:
    void length(std::size_t n);

    Bytes out_;
};

class Decoder {
public:
    explicit Decoder(ByteView data) : data_(data) {}

    std::uint64_t u64();
    bool boolean() { return u64() != 0; }
    Bytes bytes();
    std::string str();
    Address address();
    template <std::size_t N>
    std::array<std::uint8_t, N> fixed() {
        ByteView field = next();
        if (field.size() != N) {
            throw DecodeError("fixed-width field has wrong length");
        }
        std::array<std::uint8_t, N> out{};
        std::copy(field.begin(), field.end(), out.begin());
        return out;
    }

    bool done() const { return pos_ == data_.size(); }
    void expect_done() const {
        if (!done()) throw DecodeError("trailing bytes after message");
    }

private:
    ByteView next();

    ByteView data_;
    std::size_t pos_ = 0;
};

}  // namespace mercury
