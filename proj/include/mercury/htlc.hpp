#pragma once

#include <map>

#include "mercury/chain.hpp"
#include "mercury/consensus.hpp"

namespace mercury::htlc {

using crypto::Digest;

struct HtlcLock {
    Digest id;
    Digest hashlock;
    /// Claims need tick < timelock; refunds need tick >= timelock.
    Tick timelock = 0;
    Address refund_address;
    Address claim_address;
    Amount amount = 0;
    enum class State { locked, claimed, refunded } state = State::locked;
};

Digest lock_id(const Address& refund, const Address& claim, const Digest& hashlock, Tick timelock, Amount amount);

/// Preimage for a request, derived from a secret shared by the enclave group.
Digest derive_preimage(const Digest& group_secret, const Digest& request);
Digest hashlock_of(const Digest& preimage);

/// Script-level lock/claim/refund; the only contract a script-only chain hosts.
class HtlcScript : public chain::Contract {
public:
    explicit HtlcScript(std::string chain_id) : chain_id_(std::move(chain_id)) {}

    void execute(chain::CallContext& ctx, std::string_view method, ByteView args) override;
    Digest state_digest() const override;
    std::string label() const override { return "htlc:" + chain_id_; }
    bool script() const override { return true; }

    const HtlcLock* find(const Digest& id) const;
    const std::map<Digest, HtlcLock>& locks() const { return locks_; }
    Amount locked_total() const;

private:
    std::string chain_id_;
    std::map<Digest, HtlcLock> locks_;
};

namespace calls {
chain::ContractCall lock(const Address& script, const Digest& hashlock, Tick timelock, const Address& claim_address);
chain::ContractCall claim(const Address& script, const Digest& id, const Digest& preimage);
chain::ContractCall refund(const Address& script, const Digest& id);
}  // namespace calls

/// The pair an enclave group agrees on for one request: the lock clients
/// create on the source chain and the transfer intent paid on the target.
struct HtlcPair {
    HtlcLock lock;
    consensus::TransferIntent transfer;
};

HtlcPair build_pair(const consensus::HtlcPairPayload& agreed, const Digest& group_secret, const Address& claim_address,
                    const std::string& target_chain, Amount amount_out, Tick margin);

}  // namespace mercury::htlc
