#pragma once

#include <map>
#include <optional>
#include <set>
#include <vector>

#include "mercury/amm.hpp"
#include "mercury/chain.hpp"

namespace mercury::vault {

using crypto::Digest;
using crypto::MultiSignature;
using crypto::PublicKey;

struct VaultConfig {
    std::string chain_id;
    Digest program_digest;
    PublicKey manufacturer_root;
    /// Registration proofs must reference one of the latest k finalized headers.
    std::uint64_t registration_lag = 32;
    Tick challenge_window = 120;
    Rational pledge_fraction{1, 100};
    Amount pledge_floor = 10;
    /// Fee F per executed transfer, split between LPs and signing operators.
    Amount fee_per_tx = 0;
    Rational lp_fraction{0, 1};
    std::map<Address, Amount> lp_shares;
};

struct Operator {
    PublicKey key;
    Tick registered_at = 0;
    Amount stake = 0;
};

struct DepositRecord {
    Digest id;
    Address sender;
    Amount value = 0;
    Tick deposited_at = 0;
    bool under_challenge = false;
    std::optional<Tick> challenge_started_at;
    bool confirmed = false;
};

struct Pledge {
    Address challenger;
    Amount amount = 0;
};

struct TransferItem {
    Address receiver;
    Amount amount = 0;
    Digest source_deposit;
    /// Last target-chain tick at which the item may execute.
    Tick deadline = 0;
};

struct TransferBatchBody {
    std::string target_chain;
    std::uint64_t sequence = 0;
    std::vector<TransferItem> transfers;

    Digest digest() const;
};

struct TransferBatch {
    TransferBatchBody body;
    MultiSignature multisig;
};

/// Header digest at `height` signed by the registering enclave key.
struct BlockProof {
    std::uint64_t height = 0;
    Digest header_digest;
    crypto::Signature signature;
};

Digest deposit_id(const Address& sender, Amount value, Tick timestamp);
Digest confirm_digest(std::string_view chain_id, const std::vector<Digest>& ids);
Digest challenge_digest(std::string_view chain_id, const Digest& id);
Digest checkpoint_digest(std::string_view chain_id, const std::vector<Digest>& ids);
Digest block_proof_message(std::string_view chain_id, std::uint64_t height, const Digest& header_digest);

void encode(Encoder& enc, const TransferBatchBody& body);
TransferBatchBody decode_batch_body(Decoder& dec);
void encode(Encoder& enc, const TransferBatch& batch);
TransferBatch decode_batch(Decoder& dec);

/// Call builders for the simulator contract ABI.
namespace calls {
chain::ContractCall fund(const Address& vault);
chain::ContractCall register_operator(const Address& vault, const crypto::AttestationQuote& quote,
                                      const BlockProof& proof, const PublicKey& key);
chain::ContractCall deposit(const Address& vault);
chain::ContractCall transfer(const Address& vault, const TransferBatch& batch);
chain::ContractCall confirm(const Address& vault, const std::vector<Digest>& ids, const MultiSignature& ms);
chain::ContractCall start_challenge(const Address& vault, const Digest& id, Amount value);
chain::ContractCall resolve_challenge(const Address& vault, const Digest& id);
chain::ContractCall respond_challenge(const Address& vault, const Digest& id, const MultiSignature& ms);
chain::ContractCall update_checkpoint(const Address& vault, const std::vector<Digest>& ids, const MultiSignature& ms);
}  // namespace calls

/// Running totals behind the balance-conservation invariant.
struct Accounting {
    Amount liquidity_in = 0;
    Amount deposits_in = 0;
    Amount forfeited_in = 0;
    Amount transfers_out = 0;
    Amount refunds_out = 0;
    Amount pledges_escrowed = 0;

    /// initial liquidity + deposits + forfeited pledges - transfers - refunds
    Amount expected_balance() const {
        return liquidity_in + deposits_in + forfeited_in - transfers_out - refunds_out;
    }
};

class Vault : public chain::Contract {
public:
    explicit Vault(VaultConfig config);

    void execute(chain::CallContext& ctx, std::string_view method, ByteView args) override;
    Digest state_digest() const override;
    std::string label() const override { return "vault:" + config_.chain_id; }

    const VaultConfig& config() const { return config_; }
    const std::vector<Operator>& operators() const { return operators_; }
    std::vector<PublicKey> operator_keys() const;
    std::uint32_t threshold() const { return threshold_; }

    const std::map<Digest, DepositRecord>& deposits() const { return deposits_; }
    const DepositRecord* find_deposit(const Digest& id) const;
    const std::map<Digest, Pledge>& pledges() const { return pledges_; }
    bool paid(const Digest& source_deposit) const { return paid_.contains(source_deposit); }
    bool batch_executed(const Digest& batch_digest) const { return executed_batches_.contains(batch_digest); }

    /// Liquidity balance; escrowed pledges are held separately.
    Amount balance() const { return balance_; }
    const Accounting& accounting() const { return accounting_; }
    const amm::RewardLedger& rewards() const { return rewards_; }

    /// Pledge_C for a deposit of `value`: max(floor, fraction of value).
    Amount pledge_requirement(Amount value) const;

private:
    void do_fund(chain::CallContext& ctx);
    void do_register(chain::CallContext& ctx, Decoder& args);
    void do_deposit(chain::CallContext& ctx);
    void do_transfer(chain::CallContext& ctx, Decoder& args);
    void do_confirm(chain::CallContext& ctx, Decoder& args);
    void do_start_challenge(chain::CallContext& ctx, Decoder& args);
    void do_resolve_challenge(chain::CallContext& ctx, Decoder& args);
    void do_respond_challenge(chain::CallContext& ctx, Decoder& args);
    void do_update_checkpoint(chain::CallContext& ctx, Decoder& args);

    /// Meters one predicate evaluation and reverts below threshold.
    void require_multisig(chain::CallContext& ctx, const MultiSignature& ms, const Digest& expected) const;

    VaultConfig config_;
    std::vector<Operator> operators_;
    std::uint32_t threshold_ = 0;
    std::map<Digest, DepositRecord> deposits_;
    std::map<Digest, Pledge> pledges_;
    std::set<Digest> paid_;
    std::set<Digest> executed_batches_;
    Amount balance_ = 0;
    Accounting accounting_;
    amm::RewardLedger rewards_;
};

}  // namespace mercury::vault
