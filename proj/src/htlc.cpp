#include "mercury/htlc.hpp"

namespace mercury::htlc {

using chain::CallContext;
using chain::Event;
using chain::Revert;

Digest lock_id(const Address& refund, const Address& claim, const Digest& hashlock, Tick timelock, Amount amount) {
    Encoder enc;
    enc.str("HTLC");
    enc.address(refund);
    enc.address(claim);
    crypto::encode(enc, hashlock);
    enc.u64(timelock);
    enc.u64(amount);
    return crypto::hash(enc);
}

Digest derive_preimage(const Digest& group_secret, const Digest& request) {
    Encoder enc;
    enc.str("mercury/htlc-preimage");
    crypto::encode(enc, group_secret);
    crypto::encode(enc, request);
    return crypto::hash(enc);
}

Digest hashlock_of(const Digest& preimage) { return crypto::hash(preimage.bytes); }

namespace calls {

chain::ContractCall lock(const Address& script, const Digest& hashlock, Tick timelock, const Address& claim_address) {
    Encoder enc;
    crypto::encode(enc, hashlock);
    enc.u64(timelock);
    enc.address(claim_address);
    return {script, "lock", enc.take()};
}

chain::ContractCall claim(const Address& script, const Digest& id, const Digest& preimage) {
    Encoder enc;
    crypto::encode(enc, id);
    crypto::encode(enc, preimage);
    return {script, "claim", enc.take()};
}

chain::ContractCall refund(const Address& script, const Digest& id) {
    Encoder enc;
    crypto::encode(enc, id);
    return {script, "refund", enc.take()};
}

}  // namespace calls

void HtlcScript::execute(CallContext& ctx, std::string_view method, ByteView raw) {
    Decoder args(raw);
    try {
        if (method == "lock") {
            Digest hashlock = crypto::decode_digest(args);
            Tick timelock = args.u64();
            Address claim = args.address();
            args.expect_done();
            if (ctx.value() == 0) throw Revert("lock amount must be positive");
            if (timelock <= ctx.timestamp()) throw Revert("timelock already passed");
            ctx.meter().hash_ops++;
            Digest id = lock_id(ctx.sender(), claim, hashlock, timelock, ctx.value());
            if (locks_.contains(id)) throw Revert("lock already exists");
            locks_.emplace(id, HtlcLock{id, hashlock, timelock, ctx.sender(), claim, ctx.value(), HtlcLock::State::locked});
            ctx.meter().storage_writes++;
            ctx.emit(Event{"Locked", {}}
                         .with("id", id)
                         .with("hashlock", hashlock)
                         .with("timelock", timelock)
                         .with("sender", ctx.sender())
                         .with("claim", claim)
                         .with("amount", ctx.value()));
        } else if (method == "claim") {
            Digest id = crypto::decode_digest(args);
            Digest preimage = crypto::decode_digest(args);
            args.expect_done();
            auto it = locks_.find(id);
            if (it == locks_.end()) throw Revert("unknown lock");
            HtlcLock& l = it->second;
            if (l.state != HtlcLock::State::locked) throw Revert("lock already spent");
            if (ctx.timestamp() >= l.timelock) throw Revert("claim window closed");
            ctx.meter().hash_ops++;
            if (hashlock_of(preimage) != l.hashlock) throw Revert("wrong preimage");
            ctx.pay(l.claim_address, l.amount);
            l.state = HtlcLock::State::claimed;
            ctx.meter().storage_writes++;
            ctx.emit(Event{"Claimed", {}}.with("id", id).with("preimage", preimage));
        } else if (method == "refund") {
            Digest id = crypto::decode_digest(args);
            args.expect_done();
            auto it = locks_.find(id);
            if (it == locks_.end()) throw Revert("unknown lock");
            HtlcLock& l = it->second;
            if (l.state != HtlcLock::State::locked) throw Revert("lock already spent");
            if (ctx.timestamp() < l.timelock) throw Revert("timelock not reached");
            ctx.pay(l.refund_address, l.amount);
            l.state = HtlcLock::State::refunded;
            ctx.meter().storage_writes++;
            ctx.emit(Event{"HtlcRefunded", {}}.with("id", id).with("amount", l.amount));
        } else {
            throw Revert("unknown htlc method " + std::string(method));
        }
    } catch (const DecodeError& e) {
        throw Revert(std::string("malformed arguments: ") + e.what());
    }
}

const HtlcLock* HtlcScript::find(const Digest& id) const {
    auto it = locks_.find(id);
    return it == locks_.end() ? nullptr : &it->second;
}

Amount HtlcScript::locked_total() const {
    Amount total = 0;
    for (const auto& [id, l] : locks_) {
        if (l.state == HtlcLock::State::locked) total += l.amount;
    }
    return total;
}

Digest HtlcScript::state_digest() const {
    Encoder enc;
    enc.str("mercury/htlc");
    for (const auto& [id, l] : locks_) {
        crypto::encode(enc, id);
        enc.u64(static_cast<std::uint64_t>(l.state));
    }
    return crypto::hash(enc);
}

HtlcPair build_pair(const consensus::HtlcPairPayload& agreed, const Digest& group_secret, const Address& claim_address,
                    const std::string& target_chain, Amount amount_out, Tick margin) {
    if (agreed.timelock < margin) throw InvalidArgument("timelock shorter than the claim margin");
    Digest preimage = derive_preimage(group_secret, agreed.request);
    if (hashlock_of(preimage) != agreed.hashlock) throw InvalidArgument("agreed hashlock does not match the group secret");
    HtlcPair p;
    p.lock.hashlock = agreed.hashlock;
    p.lock.timelock = agreed.timelock;
    p.lock.refund_address = agreed.sender;
    p.lock.claim_address = claim_address;
    p.lock.amount = agreed.amount;
    p.lock.id = lock_id(agreed.sender, claim_address, agreed.hashlock, agreed.timelock, agreed.amount);
    p.transfer.deposit = p.lock.id;
    p.transfer.target_chain = target_chain;
    p.transfer.amount = amount_out;
    p.transfer.receiver = agreed.receiver;
    p.transfer.source_value = agreed.amount;
    p.transfer.deadline = agreed.timelock - margin;
    return p;
}

}  // namespace mercury::htlc
