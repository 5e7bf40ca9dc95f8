#include "mercury/encoding.hpp"

namespace mercury {

void Encoder::length(std::size_t n) {
    if (n > 0xffffffffu) throw InvalidArgument("field too large for canonical encoding");
    for (int shift = 24; shift >= 0; shift -= 8) {
        out_.push_back(static_cast<std::uint8_t>(n >> shift));
    }
}

Encoder& Encoder::u64(std::uint64_t value) {
    length(8);
    for (int shift = 56; shift >= 0; shift -= 8) {
        out_.push_back(static_cast<std::uint8_t>(value >> shift));
    }
    return *this;
}

Encoder& Encoder::bytes(ByteView data) {
    length(data.size());
    out_.insert(out_.end(), data.begin(), data.end());
    return *this;
}

Encoder& Encoder::str(std::string_view text) {
    return bytes(ByteView(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

ByteView Decoder::next() {
    if (data_.size() - pos_ < 4) throw DecodeError("truncated length prefix");
    std::size_t n = 0;
    for (int i = 0; i < 4; ++i) n = (n << 8) | data_[pos_ + i];
    pos_ += 4;
    if (data_.size() - pos_ < n) throw DecodeError("truncated field");
    ByteView field = data_.subspan(pos_, n);
    pos_ += n;
    return field;
}

std::uint64_t Decoder::u64() {
    ByteView field = next();
    if (field.size() != 8) throw DecodeError("integer field must be 8 bytes");
    std::uint64_t v = 0;
    for (auto b : field) v = (v << 8) | b;
    return v;
}

Bytes Decoder::bytes() {
    ByteView field = next();
    return Bytes(field.begin(), field.end());
}

std::string Decoder::str() {
    ByteView field = next();
    return std::string(field.begin(), field.end());
}

Address Decoder::address() { return Address{fixed<20>()}; }

}  // namespace mercury
