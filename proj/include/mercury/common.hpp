#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mercury {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

/// Logical simulation time shared by both chains and the operator network.
using Tick = std::uint64_t;

/// Currency amount in smallest units.
using Amount = std::uint64_t;

std::string to_hex(ByteView data);

/// 20-byte opaque account address.
struct Address {
    std::array<std::uint8_t, 20> bytes{};

    /// Deterministic address for a human-readable label ("alice", "vault:S").
    static Address from_label(std::string_view label);

    std::string hex() const { return to_hex(bytes); }
    bool is_zero() const;

    auto operator<=>(const Address&) const = default;
};

/// Non-negative rational used for fee fractions and committee thresholds.
struct Rational {
    std::uint64_t num = 0;
    std::uint64_t den = 1;

    static Rational parse(std::string_view text);

    /// ceil(value * num / den)
    std::uint64_t ceil_mul(std::uint64_t value) const;
    /// floor(value * num / den)
    std::uint64_t floor_mul(std::uint64_t value) const;

    bool operator==(const Rational& other) const {
        return static_cast<unsigned __int128>(num) * other.den ==
               static_cast<unsigned __int128>(other.num) * den;
    }
    std::string str() const;
};

struct InvalidArgument : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

}  // namespace mercury
