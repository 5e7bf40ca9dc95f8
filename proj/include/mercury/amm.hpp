#pragma once

#include <map>
#include <optional>
#include <vector>

#include "mercury/crypto.hpp"

namespace mercury::amm {

using u128 = unsigned __int128;

enum class Reject { zero_input, empty_pool, dust, drains_pool, overflow };

std::string_view reject_name(Reject r);

struct AmmError : std::runtime_error {
    explicit AmmError(Reject r);
    Reject reason;
};

/// Constant-product output for selling `in` into a pool holding
/// (in_reserve, out_reserve): floor(out - k / (in_reserve + in)) with
/// k = in_reserve * out_reserve. Rounding always favors the pool.
std::optional<Amount> quote_out(Amount in_reserve, Amount out_reserve, Amount in, Reject* why = nullptr);

/// Constant-product pool. X is the source-currency reserve, Y the
/// target-currency reserve.
class Pool {
public:
    Pool() = default;
    Pool(Rational fee_param, Amount fee_per_tx) : fee_param_(fee_param), fee_per_tx_(fee_per_tx) {}

    Amount reserve_x() const { return reserve_x_; }
    Amount reserve_y() const { return reserve_y_; }
    u128 invariant_k() const { return invariant_k_; }
    u128 product() const { return static_cast<u128>(reserve_x_) * reserve_y_; }
    Rational fee_param() const { return fee_param_; }
    Amount fee_per_tx() const { return fee_per_tx_; }

    const std::map<Address, Amount>& lp_shares() const { return lp_shares_; }
    Amount total_shares() const { return total_shares_; }

    /// y for selling x of the source currency, without mutating the pool.
    std::optional<Amount> quote(Amount x, Reject* why = nullptr) const {
        return quote_out(reserve_x_, reserve_y_, x, why);
    }

    /// Sells x of the source currency; returns y of the target currency.
    /// Throws AmmError on dust/zero/overflow trades.
    Amount exchange(Amount x);
    /// Reverse direction: sells y of the target currency for the source.
    Amount exchange_reverse(Amount y);

    /// Mints LP shares for a contribution in the current reserve ratio
    /// (within one smallest unit). The first LP's shares equal its X side.
    Amount add_liquidity(const Address& lp, Amount x, Amount y);

    crypto::Digest digest() const;

private:
    Amount reserve_x_ = 0;
    Amount reserve_y_ = 0;
    u128 invariant_k_ = 0;
    std::map<Address, Amount> lp_shares_;
    Amount total_shares_ = 0;
    Rational fee_param_{0, 1};
    Amount fee_per_tx_ = 0;

};

/// floor(F * r * L / T); zero when T is zero.
Amount lp_reward(Amount fee, Amount liquidity, Amount total_liquidity, Rational r);

/// floor(F * (1 - r) / m), paid to each of the m signers.
Amount operator_reward(Amount fee, std::uint32_t signers, Rational r);

struct Payout {
    Amount to_lps = 0;
    Amount to_operators = 0;
    Amount dust = 0;
    std::size_t payees = 0;
};

/// Accrued fee rewards for LPs and operators; rounding dust stays with the vault.
class RewardLedger {
public:
    Payout distribute(Amount fee, const std::map<Address, Amount>& lp_shares,
                      const std::vector<crypto::PublicKey>& signers, Rational r);

    const std::map<Address, Amount>& lp_accrued() const { return lp_accrued_; }
    const std::map<crypto::PublicKey, Amount>& operator_accrued() const { return operator_accrued_; }
    Amount dust() const { return dust_; }

private:
    std::map<Address, Amount> lp_accrued_;
    std::map<crypto::PublicKey, Amount> operator_accrued_;
    Amount dust_ = 0;
};

}  // namespace mercury::amm
