#include "mercury/common.hpp"

#include <charconv>
#include <sodium.h>

namespace mercury {

std::string to_hex(ByteView data) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out;
    out.reserve(data.size() * 2);
    for (std::uint8_t b : data) {
        out.push_back(digits[b >> 4]);
        out.push_back(digits[b & 0x0f]);
    }
    return out;
}

Address Address::from_label(std::string_view label) {
    std::array<std::uint8_t, crypto_hash_sha256_BYTES> digest{};
    crypto_hash_sha256_state st;
    crypto_hash_sha256_init(&st);
    static constexpr std::string_view tag = "mercury/address-label";
    crypto_hash_sha256_update(&st, reinterpret_cast<const unsigned char*>(tag.data()), tag.size());
    crypto_hash_sha256_update(&st, reinterpret_cast<const unsigned char*>(label.data()), label.size());
    crypto_hash_sha256_final(&st, digest.data());
    Address addr;
    std::copy_n(digest.begin(), addr.bytes.size(), addr.bytes.begin());
    return addr;
}

bool Address::is_zero() const {
    for (auto b : bytes) {
        if (b != 0) return false;
    }
    return true;
}

Rational Rational::parse(std::string_view text) {
    auto parse_u64 = [&](std::string_view part) {
        std::uint64_t v = 0;
        auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
        if (ec != std::errc{} || ptr != part.data() + part.size()) {
            throw InvalidArgument("malformed rational: " + std::string(text));
        }
        return v;
    };
    Rational r;
    if (auto slash = text.find('/'); slash != std::string_view::npos) {
        r.num = parse_u64(text.substr(0, slash));
        r.den = parse_u64(text.substr(slash + 1));
    } else if (auto dot = text.find('.'); dot != std::string_view::npos) {
        auto frac = text.substr(dot + 1);
        if (frac.size() > 12) throw InvalidArgument("too many decimal places: " + std::string(text));
        r.den = 1;
        for (std::size_t i = 0; i < frac.size(); ++i) r.den *= 10;
        r.num = parse_u64(text.substr(0, dot)) * r.den + (frac.empty() ? 0 : parse_u64(frac));
    } else {
        r.num = parse_u64(text);
        r.den = 1;
    }
    if (r.den == 0) throw InvalidArgument("rational with zero denominator");
    return r;
}

std::uint64_t Rational::ceil_mul(std::uint64_t value) const {
    auto p = static_cast<unsigned __int128>(value) * num;
    return static_cast<std::uint64_t>((p + den - 1) / den);
}

std::uint64_t Rational::floor_mul(std::uint64_t value) const {
    auto p = static_cast<unsigned __int128>(value) * num;
    return static_cast<std::uint64_t>(p / den);
}

std::string Rational::str() const { return std::to_string(num) + "/" + std::to_string(den); }

}  // namespace mercury
