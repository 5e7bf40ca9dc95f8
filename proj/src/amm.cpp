#include "mercury/amm.hpp"

#include <limits>

namespace mercury::amm {

std::string_view reject_name(Reject r) {
    switch (r) {
        case Reject::zero_input: return "zero_input";
        case Reject::empty_pool: return "empty_pool";
        case Reject::dust: return "dust";
        case Reject::drains_pool: return "drains_pool";
        case Reject::overflow: return "overflow";
    }
    return "unknown";
}

AmmError::AmmError(Reject r) : std::runtime_error("amm trade rejected: " + std::string(reject_name(r))), reason(r) {}

std::optional<Amount> quote_out(Amount in_reserve, Amount out_reserve, Amount in, Reject* why) {
    auto fail = [&](Reject r) -> std::optional<Amount> {
        if (why) *why = r;
        return std::nullopt;
    };
    if (in == 0) return fail(Reject::zero_input);
    if (in_reserve == 0 || out_reserve == 0) return fail(Reject::empty_pool);
    if (in > std::numeric_limits<Amount>::max() - in_reserve) return fail(Reject::overflow);

    u128 k = static_cast<u128>(in_reserve) * out_reserve;
    u128 new_in = static_cast<u128>(in_reserve) + in;
    u128 new_out = (k + new_in - 1) / new_in;  // ceil keeps the product from shrinking
    if (new_out == 0) return fail(Reject::drains_pool);
    u128 out = static_cast<u128>(out_reserve) - new_out;
    if (out == 0) return fail(Reject::dust);
    if (out >= out_reserve) return fail(Reject::drains_pool);
    return static_cast<Amount>(out);
}

Amount Pool::exchange(Amount x) {
    Reject why{};
    auto y = quote(x, &why);
    if (!y) throw AmmError(why);
    reserve_x_ += x;
    reserve_y_ -= *y;
    invariant_k_ = product();
    return *y;
}

Amount Pool::exchange_reverse(Amount y) {
    Reject why{};
    auto x = quote_out(reserve_y_, reserve_x_, y, &why);
    if (!x) throw AmmError(why);
    reserve_y_ += y;
    reserve_x_ -= *x;
    invariant_k_ = product();
    return *x;
}

Amount Pool::add_liquidity(const Address& lp, Amount x, Amount y) {
    if (x == 0 || y == 0) throw InvalidArgument("liquidity contribution must be positive in both currencies");
    Amount minted = 0;
    if (total_shares_ == 0) {
        minted = x;
    } else {
        // |x*Y - y*X| <= X  <=>  y is within one unit of x*Y/X
        u128 lhs = static_cast<u128>(x) * reserve_y_;
        u128 rhs = static_cast<u128>(y) * reserve_x_;
        u128 diff = lhs > rhs ? lhs - rhs : rhs - lhs;
        if (diff > reserve_x_) throw InvalidArgument("liquidity contribution is off the reserve ratio");
        minted = static_cast<Amount>(static_cast<u128>(x) * total_shares_ / reserve_x_);
        if (minted == 0) throw InvalidArgument("liquidity contribution too small to mint shares");
    }
    reserve_x_ += x;
    reserve_y_ += y;
    invariant_k_ = product();
    lp_shares_[lp] += minted;
    total_shares_ += minted;
    return minted;
}

crypto::Digest Pool::digest() const {
    Encoder enc;
    enc.str("mercury/pool");
    enc.u64(reserve_x_);
    enc.u64(reserve_y_);
    enc.u64(total_shares_);
    for (const auto& [lp, s] : lp_shares_) {
        enc.address(lp);
        enc.u64(s);
    }
    return crypto::hash(enc);
}

Amount lp_reward(Amount fee, Amount liquidity, Amount total_liquidity, Rational r) {
    if (total_liquidity == 0) return 0;
    if (liquidity > total_liquidity) throw InvalidArgument("LP liquidity exceeds total liquidity");
    if (r.num > r.den) throw InvalidArgument("reward fraction must lie in [0, 1]");
    u128 num = static_cast<u128>(fee) * r.num * liquidity;
    u128 den = static_cast<u128>(r.den) * total_liquidity;
    return static_cast<Amount>(num / den);
}

Amount operator_reward(Amount fee, std::uint32_t signers, Rational r) {
    if (signers == 0) throw InvalidArgument("operator reward needs at least one signer");
    if (r.num > r.den) throw InvalidArgument("reward fraction must lie in [0, 1]");
    u128 num = static_cast<u128>(fee) * (r.den - r.num);
    u128 den = static_cast<u128>(r.den) * signers;
    return static_cast<Amount>(num / den);
}

Payout RewardLedger::distribute(Amount fee, const std::map<Address, Amount>& lp_shares,
                                const std::vector<crypto::PublicKey>& signers, Rational r) {
    Payout p;
    Amount total = 0;
    for (const auto& [lp, s] : lp_shares) total += s;
    if (total > 0) {
        for (const auto& [lp, s] : lp_shares) {
            Amount a = lp_reward(fee, s, total, r);
            lp_accrued_[lp] += a;
            p.to_lps += a;
            p.payees++;
        }
    }
    if (!signers.empty()) {
        Amount each = operator_reward(fee, static_cast<std::uint32_t>(signers.size()), r);
        for (const auto& k : signers) {
            operator_accrued_[k] += each;
            p.to_operators += each;
            p.payees++;
        }
    }
    p.dust = fee - p.to_lps - p.to_operators;
    dust_ += p.dust;
    return p;
}

}  // namespace mercury::amm
