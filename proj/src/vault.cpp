#include "mercury/vault.hpp"

#include <algorithm>

namespace mercury::vault {

using chain::CallContext;
using chain::Event;
using chain::Revert;

namespace {

void encode_ids(Encoder& enc, const std::vector<Digest>& ids) {
    enc.u64(ids.size());
    for (const auto& id : ids) crypto::encode(enc, id);
}

std::vector<Digest> decode_ids(Decoder& dec) {
    auto n = dec.u64();
    if (n > 100000) throw DecodeError("too many ids");
    std::vector<Digest> ids;
    ids.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) ids.push_back(crypto::decode_digest(dec));
    return ids;
}

Digest tagged_ids(std::string_view tag, std::string_view chain_id, const std::vector<Digest>& ids) {
    Encoder enc;
    enc.str(tag);
    enc.str(chain_id);
    encode_ids(enc, ids);
    return crypto::hash(enc);
}

chain::ContractCall make(const Address& vault, std::string method, Encoder&& enc) {
    return chain::ContractCall{vault, std::move(method), enc.take()};
}

Digest key_digest(const PublicKey& k) { return Digest{k.bytes}; }

}  // namespace

Digest TransferBatchBody::digest() const {
    Encoder enc;
    enc.str("TRANSFER");
    encode(enc, *this);
    return crypto::hash(enc);
}

Digest deposit_id(const Address& sender, Amount value, Tick timestamp) {
    Encoder enc;
    enc.address(sender);
    enc.u64(value);
    enc.u64(timestamp);
    return crypto::hash(enc);
}

Digest confirm_digest(std::string_view chain_id, const std::vector<Digest>& ids) {
    return tagged_ids("CONFIRM", chain_id, ids);
}

Digest challenge_digest(std::string_view chain_id, const Digest& id) {
    Encoder enc;
    enc.str("CHALLENGE");
    enc.str(chain_id);
    crypto::encode(enc, id);
    return crypto::hash(enc);
}

Digest checkpoint_digest(std::string_view chain_id, const std::vector<Digest>& ids) {
    return tagged_ids("CHECKPOINT", chain_id, ids);
}

Digest block_proof_message(std::string_view chain_id, std::uint64_t height, const Digest& header_digest) {
    Encoder enc;
    enc.str("mercury/block-proof");
    enc.str(chain_id);
    enc.u64(height);
    crypto::encode(enc, header_digest);
    return crypto::hash(enc);
}

void encode(Encoder& enc, const TransferBatchBody& body) {
    enc.str(body.target_chain);
    enc.u64(body.sequence);
    enc.u64(body.transfers.size());
    for (const auto& t : body.transfers) {
        enc.address(t.receiver);
        enc.u64(t.amount);
        crypto::encode(enc, t.source_deposit);
        enc.u64(t.deadline);
    }
}

TransferBatchBody decode_batch_body(Decoder& dec) {
    TransferBatchBody b;
    b.target_chain = dec.str();
    b.sequence = dec.u64();
    auto n = dec.u64();
    if (n > 100000) throw DecodeError("transfer batch too long");
    for (std::uint64_t i = 0; i < n; ++i) {
        TransferItem t;
        t.receiver = dec.address();
        t.amount = dec.u64();
        t.source_deposit = crypto::decode_digest(dec);
        t.deadline = dec.u64();
        b.transfers.push_back(t);
    }
    return b;
}

void encode(Encoder& enc, const TransferBatch& batch) {
    encode(enc, batch.body);
    crypto::encode(enc, batch.multisig);
}

TransferBatch decode_batch(Decoder& dec) {
    TransferBatch b;
    b.body = decode_batch_body(dec);
    b.multisig = crypto::decode_multisig(dec);
    return b;
}

namespace calls {

chain::ContractCall fund(const Address& vault) { return make(vault, "fund", Encoder{}); }

chain::ContractCall register_operator(const Address& vault, const crypto::AttestationQuote& quote,
                                      const BlockProof& proof, const PublicKey& key) {
    Encoder enc;
    crypto::encode(enc, quote);
    enc.u64(proof.height);
    crypto::encode(enc, proof.header_digest);
    crypto::encode(enc, proof.signature);
    crypto::encode(enc, key);
    return make(vault, "register", std::move(enc));
}

chain::ContractCall deposit(const Address& vault) { return make(vault, "deposit", Encoder{}); }

chain::ContractCall transfer(const Address& vault, const TransferBatch& batch) {
    Encoder enc;
    encode(enc, batch);
    return make(vault, "transfer", std::move(enc));
}

chain::ContractCall confirm(const Address& vault, const std::vector<Digest>& ids, const MultiSignature& ms) {
    Encoder enc;
    encode_ids(enc, ids);
    crypto::encode(enc, ms);
    return make(vault, "confirm", std::move(enc));
}

chain::ContractCall start_challenge(const Address& vault, const Digest& id, Amount value) {
    Encoder enc;
    crypto::encode(enc, id);
    enc.u64(value);
    return make(vault, "start_challenge", std::move(enc));
}

chain::ContractCall resolve_challenge(const Address& vault, const Digest& id) {
    Encoder enc;
    crypto::encode(enc, id);
    return make(vault, "resolve_challenge", std::move(enc));
}

chain::ContractCall respond_challenge(const Address& vault, const Digest& id, const MultiSignature& ms) {
    Encoder enc;
    crypto::encode(enc, id);
    crypto::encode(enc, ms);
    return make(vault, "respond_challenge", std::move(enc));
}

chain::ContractCall update_checkpoint(const Address& vault, const std::vector<Digest>& ids, const MultiSignature& ms) {
    Encoder enc;
    encode_ids(enc, ids);
    crypto::encode(enc, ms);
    return make(vault, "update_checkpoint", std::move(enc));
}

}  // namespace calls

Vault::Vault(VaultConfig config) : config_(std::move(config)) {
    if (config_.chain_id.empty()) throw InvalidArgument("vault needs a chain id");
    if (config_.challenge_window == 0) throw InvalidArgument("challenge window must be positive");
    if (config_.pledge_fraction.den == 0 || config_.lp_fraction.den == 0 ||
        config_.lp_fraction.num > config_.lp_fraction.den) {
        throw InvalidArgument("vault fractions must be well-formed");
    }
}

std::vector<PublicKey> Vault::operator_keys() const {
    std::vector<PublicKey> keys;
    keys.reserve(operators_.size());
    for (const auto& op : operators_) keys.push_back(op.key);
    return keys;
}

const DepositRecord* Vault::find_deposit(const Digest& id) const {
    auto it = deposits_.find(id);
    return it == deposits_.end() ? nullptr : &it->second;
}

Amount Vault::pledge_requirement(Amount value) const {
    return std::max(config_.pledge_floor, config_.pledge_fraction.ceil_mul(value));
}

void Vault::execute(CallContext& ctx, std::string_view method, ByteView raw) {
    Decoder args(raw);
    try {
        if (method == "fund") {
            do_fund(ctx);
        } else if (method == "register") {
            do_register(ctx, args);
        } else if (method == "deposit") {
            do_deposit(ctx);
        } else if (method == "transfer") {
            do_transfer(ctx, args);
        } else if (method == "confirm") {
            do_confirm(ctx, args);
        } else if (method == "start_challenge") {
            do_start_challenge(ctx, args);
        } else if (method == "resolve_challenge") {
            do_resolve_challenge(ctx, args);
        } else if (method == "respond_challenge") {
            do_respond_challenge(ctx, args);
        } else if (method == "update_checkpoint") {
            do_update_checkpoint(ctx, args);
        } else {
            throw Revert("unknown vault method " + std::string(method));
        }
    } catch (const DecodeError& e) {
        throw Revert(std::string("malformed arguments: ") + e.what());
    }
}

void Vault::require_multisig(CallContext& ctx, const MultiSignature& ms, const Digest& expected) const {
    if (ms.message_digest != expected) throw Revert("multisig covers a different message");
    ctx.meter().sig_verifications++;
    ctx.meter().signature_checks += ms.signatures.size();
    if (!crypto::multisig_verify(ms, operator_keys(), threshold_)) throw Revert("multisig below threshold");
}

void Vault::do_fund(CallContext& ctx) {
    if (ctx.value() == 0) throw Revert("funding must be positive");
    balance_ += ctx.value();
    accounting_.liquidity_in += ctx.value();
    ctx.meter().storage_writes++;
    ctx.emit(Event{"Funded", {}}.with("from", ctx.sender()).with("amount", ctx.value()));
}

void Vault::do_register(CallContext& ctx, Decoder& args) {
    auto quote = crypto::decode_quote(args);
    BlockProof proof;
    proof.height = args.u64();
    proof.header_digest = crypto::decode_digest(args);
    proof.signature = crypto::decode_signature(args);
    auto key = crypto::decode_public_key(args);
    args.expect_done();
    if (ctx.value() != 0) throw Revert("registration carries no value");

    ctx.meter().sig_verifications += 2;
    ctx.meter().signature_checks += 2;
    if (!crypto::verify_quote(quote, config_.manufacturer_root)) throw Revert("invalid attestation quote");
    if (quote.program_digest != config_.program_digest) throw Revert("attested program is not the exchange program");
    if (quote.enclave_public_key != key) throw Revert("quote is for a different key");
    for (const auto& op : operators_) {
        if (op.key == key) throw Revert("operator already registered");
    }

    std::uint64_t tip = ctx.finalized_tip();
    if (proof.height > tip || tip - proof.height >= config_.registration_lag) throw Revert("stale block proof");
    auto digest = ctx.recent_block_digest(proof.height);
    if (!digest || *digest != proof.header_digest) throw Revert("block proof names an unknown header");
    ctx.meter().hash_ops++;
    Digest msg = block_proof_message(config_.chain_id, proof.height, proof.header_digest);
    if (proof.signature.signer != key || !crypto::verify(msg, proof.signature, key)) {
        throw Revert("block proof not signed by the registering key");
    }

    operators_.push_back(Operator{key, ctx.timestamp(), 0});
    threshold_ = static_cast<std::uint32_t>(operators_.size() / 2 + 1);
    ctx.meter().storage_writes += 2;
    ctx.emit(Event{"OperatorRegistered", {}}
                 .with("key", key_digest(key))
                 .with("index", operators_.size() - 1)
                 .with("threshold", threshold_));
}

void Vault::do_deposit(CallContext& ctx) {
    if (ctx.value() == 0) throw Revert("deposit value must be positive");
    ctx.meter().hash_ops++;
    Digest id = deposit_id(ctx.sender(), ctx.value(), ctx.timestamp());
    if (deposits_.contains(id)) throw Revert("deposit id collision in this block");

    deposits_.emplace(id, DepositRecord{id, ctx.sender(), ctx.value(), ctx.timestamp(), false, std::nullopt, false});
    balance_ += ctx.value();
    accounting_.deposits_in += ctx.value();
    ctx.meter().storage_writes += 2;
    ctx.emit(Event{"Deposit", {}}
                 .with("id", id)
                 .with("sender", ctx.sender())
                 .with("value", ctx.value())
                 .with("timestamp", ctx.timestamp()));
}

void Vault::do_transfer(CallContext& ctx, Decoder& args) {
    auto batch = decode_batch(args);
    args.expect_done();
    if (batch.body.target_chain != config_.chain_id) throw Revert("batch targets another chain");
    ctx.meter().hash_ops++;
    Digest digest = batch.body.digest();
    if (executed_batches_.contains(digest)) throw Revert("batch already executed");
    require_multisig(ctx, batch.multisig, digest);

    enum class Fate { pay, expired, already_paid };
    std::vector<Fate> fate;
    fate.reserve(batch.body.transfers.size());
    std::set<Digest> in_batch;
    Amount total = 0;
    for (const auto& t : batch.body.transfers) {
        if (t.deadline < ctx.timestamp()) {
            fate.push_back(Fate::expired);
        } else if (paid_.contains(t.source_deposit) || !in_batch.insert(t.source_deposit).second) {
            fate.push_back(Fate::already_paid);
        } else {
            fate.push_back(Fate::pay);
            total += t.amount;
        }
    }
    if (total > balance_) throw Revert("vault balance insufficient for batch");

    // Validation done; mutate.
    std::vector<PublicKey> signers;
    if (config_.fee_per_tx > 0) {
        signers = crypto::valid_signers(batch.multisig, operator_keys());
        std::sort(signers.begin(), signers.end());
        signers.resize(std::min<std::size_t>(signers.size(), threshold_));
    }
    executed_batches_.insert(digest);
    balance_ -= total;
    accounting_.transfers_out += total;
    ctx.meter().storage_writes += 2;
    std::uint64_t executed = 0;
    for (std::size_t i = 0; i < batch.body.transfers.size(); ++i) {
        const auto& t = batch.body.transfers[i];
        if (fate[i] == Fate::expired) {
            ctx.emit(Event{"TransferExpired", {}}.with("deposit", t.source_deposit).with("batch", digest));
            continue;
        }
        if (fate[i] == Fate::already_paid) {
            ctx.emit(Event{"TransferSkipped", {}}.with("deposit", t.source_deposit).with("batch", digest));
            continue;
        }
        paid_.insert(t.source_deposit);
        ctx.pay(t.receiver, t.amount);
        ctx.meter().storage_writes += 2;
        executed++;
        if (config_.fee_per_tx > 0) {
            rewards_.distribute(config_.fee_per_tx, config_.lp_shares, signers, config_.lp_fraction);
        }
        ctx.emit(Event{"Transfer", {}}
                     .with("deposit", t.source_deposit)
                     .with("receiver", t.receiver)
                     .with("amount", t.amount)
                     .with("batch", digest)
                     .with("sequence", batch.body.sequence));
    }
    ctx.emit(Event{"BatchExecuted", {}}
                 .with("batch", digest)
                 .with("sequence", batch.body.sequence)
                 .with("executed", executed)
                 .with("skipped", batch.body.transfers.size() - executed));
}

void Vault::do_confirm(CallContext& ctx, Decoder& args) {
    auto ids = decode_ids(args);
    auto ms = crypto::decode_multisig(args);
    args.expect_done();
    ctx.meter().hash_ops++;
    require_multisig(ctx, ms, confirm_digest(config_.chain_id, ids));

    for (const auto& id : ids) {
        auto it = deposits_.find(id);
        if (it == deposits_.end() || it->second.confirmed) continue;
        DepositRecord& rec = it->second;
        if (rec.under_challenge) {
            // Confirm wins the race; the challenger acted in good faith.
            auto p = pledges_.find(id);
            ctx.pay(p->second.challenger, p->second.amount);
            accounting_.pledges_escrowed -= p->second.amount;
            ctx.emit(Event{"ChallengeVoided", {}}
                         .with("id", id)
                         .with("challenger", p->second.challenger)
                         .with("pledge", p->second.amount));
            pledges_.erase(p);
            rec.under_challenge = false;
            rec.challenge_started_at.reset();
            ctx.meter().storage_deletes++;
        }
        rec.confirmed = true;
        ctx.meter().storage_writes++;
        ctx.emit(Event{"Confirmed", {}}.with("id", id));
    }
}

void Vault::do_start_challenge(CallContext& ctx, Decoder& args) {
    Digest id = crypto::decode_digest(args);
    Amount value = args.u64();
    args.expect_done();
    auto it = deposits_.find(id);
    if (it == deposits_.end()) throw Revert("no pending deposit with this id");
    DepositRecord& rec = it->second;
    if (rec.confirmed) throw Revert("deposit already confirmed");
    if (rec.under_challenge) throw Revert("deposit already under challenge");
    if (value != rec.value) throw Revert("challenge value does not match the deposit");
    if (ctx.value() < pledge_requirement(rec.value)) throw Revert("pledge below requirement");

    rec.under_challenge = true;
    rec.challenge_started_at = ctx.timestamp();
    pledges_[id] = Pledge{ctx.sender(), ctx.value()};
    accounting_.pledges_escrowed += ctx.value();
    ctx.meter().storage_writes += 2;
    ctx.emit(Event{"Challenge", {}}
                 .with("id", id)
                 .with("challenger", ctx.sender())
                 .with("pledge", ctx.value())
                 .with("started_at", ctx.timestamp()));
}

void Vault::do_resolve_challenge(CallContext& ctx, Decoder& args) {
    Digest id = crypto::decode_digest(args);
    args.expect_done();
    if (ctx.value() != 0) throw Revert("resolution carries no value");
    auto it = deposits_.find(id);
    if (it == deposits_.end() || !it->second.under_challenge) throw Revert("deposit is not under challenge");
    DepositRecord rec = it->second;
    if (ctx.timestamp() - *rec.challenge_started_at <= config_.challenge_window) {
        throw Revert("challenge window has not elapsed");
    }
    auto p = pledges_.find(id);
    Pledge pledge = p->second;

    ctx.pay(rec.sender, rec.value);
    ctx.pay(pledge.challenger, pledge.amount);
    balance_ -= rec.value;
    accounting_.refunds_out += rec.value;
    accounting_.pledges_escrowed -= pledge.amount;
    pledges_.erase(p);
    deposits_.erase(it);
    ctx.meter().storage_deletes += 2;
    ctx.meter().storage_writes++;
    ctx.emit(Event{"Refund", {}}.with("id", id).with("sender", rec.sender).with("value", rec.value));
    ctx.emit(Event{"PledgeReturned", {}}.with("id", id).with("challenger", pledge.challenger).with("pledge", pledge.amount));
}

void Vault::do_respond_challenge(CallContext& ctx, Decoder& args) {
    Digest id = crypto::decode_digest(args);
    auto ms = crypto::decode_multisig(args);
    args.expect_done();
    ctx.meter().hash_ops++;
    require_multisig(ctx, ms, challenge_digest(config_.chain_id, id));
    auto it = deposits_.find(id);
    if (it == deposits_.end() || !it->second.under_challenge) throw Revert("deposit is not under challenge");

    auto p = pledges_.find(id);
    Amount forfeited = p->second.amount;
    accounting_.pledges_escrowed -= forfeited;
    accounting_.forfeited_in += forfeited;
    balance_ += forfeited;
    pledges_.erase(p);
    deposits_.erase(it);
    ctx.meter().storage_deletes += 2;
    ctx.meter().storage_writes++;
    ctx.emit(Event{"ChallengeResponded", {}}.with("id", id).with("forfeited", forfeited));
}

void Vault::do_update_checkpoint(CallContext& ctx, Decoder& args) {
    auto ids = decode_ids(args);
    auto ms = crypto::decode_multisig(args);
    args.expect_done();
    ctx.meter().hash_ops++;
    require_multisig(ctx, ms, checkpoint_digest(config_.chain_id, ids));

    std::uint64_t removed = 0;
    std::uint64_t skipped = 0;
    for (const auto& id : ids) {
        auto it = deposits_.find(id);
        if (it == deposits_.end()) continue;
        if (it->second.under_challenge) {
            skipped++;
            ctx.emit(Event{"CheckpointSkipped", {}}.with("id", id));
            continue;
        }
        deposits_.erase(it);
        ctx.meter().storage_deletes++;
        removed++;
        ctx.emit(Event{"Checkpointed", {}}.with("id", id));
    }
    ctx.emit(Event{"Checkpoint", {}}.with("removed", removed).with("skipped", skipped));
}

Digest Vault::state_digest() const {
    Encoder enc;
    enc.str("mercury/vault");
    enc.str(config_.chain_id);
    enc.u64(operators_.size());
    for (const auto& op : operators_) crypto::encode(enc, op.key);
    enc.u64(threshold_);
    enc.u64(balance_);
    enc.u64(accounting_.pledges_escrowed);
    enc.u64(deposits_.size());
    for (const auto& [id, rec] : deposits_) {
        crypto::encode(enc, id);
        enc.u64(rec.value);
        enc.boolean(rec.under_challenge);
        enc.u64(rec.challenge_started_at.value_or(0));
        enc.boolean(rec.confirmed);
    }
    enc.u64(paid_.size());
    enc.u64(executed_batches_.size());
    return crypto::hash(enc);
}

}  // namespace mercury::vault
