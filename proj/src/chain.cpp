#include "mercury/chain.hpp"

#include <algorithm>
#include <json.hpp>
#include <random>

namespace mercury::chain {

void ChainConfig::validate() const {
    if (finality_delay < 1) throw InvalidArgument("finality delay must be at least one tick");
    if (committee_size < 1) throw InvalidArgument("committee size must be positive");
    if (rotation_period < 1) throw InvalidArgument("rotation period must be positive");
    // threshold in (1/2, 1]
    if (committee_threshold.den == 0 || committee_threshold.num * 2 <= committee_threshold.den ||
        committee_threshold.num > committee_threshold.den) {
        throw InvalidArgument("committee threshold must lie in (1/2, 1]");
    }
    if (chain_id.empty()) throw InvalidArgument("chain id must not be empty");
}

Digest SyncCommittee::commitment() const {
    Encoder enc;
    enc.str("mercury/committee");
    enc.u64(epoch);
    enc.u64(validator_keys.size());
    for (const auto& k : validator_keys) crypto::encode(enc, k);
    return crypto::hash(enc);
}

Digest BlockHeader::signing_root() const {
    Encoder enc;
    enc.str("mercury/header");
    enc.u64(height);
    crypto::encode(enc, parent_digest);
    crypto::encode(enc, state_digest);
    crypto::encode(enc, tx_root);
    enc.u64(timestamp);
    crypto::encode(enc, next_committee_commitment);
    return crypto::hash(enc);
}

void encode(Encoder& enc, const BlockHeader& h) {
    enc.u64(h.height);
    crypto::encode(enc, h.parent_digest);
    crypto::encode(enc, h.state_digest);
    crypto::encode(enc, h.tx_root);
    enc.u64(h.timestamp);
    crypto::encode(enc, h.next_committee_commitment);
    enc.u64(h.committee_signatures.size());
    for (const auto& s : h.committee_signatures) crypto::encode(enc, s);
}

BlockHeader decode_header(Decoder& dec) {
    BlockHeader h;
    h.height = dec.u64();
    h.parent_digest = crypto::decode_digest(dec);
    h.state_digest = crypto::decode_digest(dec);
    h.tx_root = crypto::decode_digest(dec);
    h.timestamp = dec.u64();
    h.next_committee_commitment = crypto::decode_digest(dec);
    auto n = dec.u64();
    if (n > 100000) throw DecodeError("too many committee signatures");
    for (std::uint64_t i = 0; i < n; ++i) h.committee_signatures.push_back(crypto::decode_signature(dec));
    return h;
}

void encode(Encoder& enc, const SyncCommittee& c) {
    enc.u64(c.epoch);
    enc.u64(c.validator_keys.size());
    for (const auto& k : c.validator_keys) crypto::encode(enc, k);
}

SyncCommittee decode_committee(Decoder& dec) {
    SyncCommittee c;
    c.epoch = dec.u64();
    auto n = dec.u64();
    if (n > 100000) throw DecodeError("committee too large");
    for (std::uint64_t i = 0; i < n; ++i) c.validator_keys.push_back(crypto::decode_public_key(dec));
    return c;
}

const FieldValue* Event::find(std::string_view name) const {
    for (const auto& f : fields) {
        if (f.name == name) return &f.value;
    }
    return nullptr;
}

void encode(Encoder& enc, const Event& event) {
    enc.str(event.kind);
    enc.u64(event.fields.size());
    for (const auto& f : event.fields) {
        enc.str(f.name);
        enc.u64(f.value.index());
        std::visit(
            [&](const auto& v) {
                using T = std::decay_t<decltype(v)>;
                if constexpr (std::is_same_v<T, std::uint64_t>) {
                    enc.u64(v);
                } else if constexpr (std::is_same_v<T, Digest>) {
                    crypto::encode(enc, v);
                } else if constexpr (std::is_same_v<T, Address>) {
                    enc.address(v);
                } else {
                    enc.str(v);
                }
            },
            f.value);
    }
}

Event decode_event(Decoder& dec) {
    Event e;
    e.kind = dec.str();
    auto n = dec.u64();
    if (n > 1024) throw DecodeError("too many event fields");
    for (std::uint64_t i = 0; i < n; ++i) {
        EventField f;
        f.name = dec.str();
        switch (dec.u64()) {
            case 0: f.value = dec.u64(); break;
            case 1: f.value = crypto::decode_digest(dec); break;
            case 2: f.value = dec.address(); break;
            case 3: f.value = dec.str(); break;
            default: throw DecodeError("unknown event field type");
        }
        e.fields.push_back(std::move(f));
    }
    return e;
}

namespace {

void encode_call(Encoder& enc, const Call& call) {
    if (const auto* p = std::get_if<PlainTransfer>(&call)) {
        enc.u64(0);
        enc.address(p->to);
    } else {
        const auto& c = std::get<ContractCall>(call);
        enc.u64(1);
        enc.address(c.contract);
        enc.str(c.method);
        enc.bytes(c.args);
    }
}

Call decode_call(Decoder& dec) {
    switch (dec.u64()) {
        case 0: return PlainTransfer{dec.address()};
        case 1: {
            ContractCall c;
            c.contract = dec.address();
            c.method = dec.str();
            c.args = dec.bytes();
            return c;
        }
        default: throw DecodeError("unknown call kind");
    }
}

}  // namespace

void encode(Encoder& enc, const ChainTx& tx) {
    crypto::encode(enc, tx.id);
    enc.address(tx.sender);
    encode_call(enc, tx.call);
    enc.u64(tx.value);
    enc.u64(tx.submitted_at);
    enc.boolean(tx.finalized_at.has_value());
    enc.u64(tx.finalized_at.value_or(0));
    enc.boolean(tx.dedup_key.has_value());
    crypto::encode(enc, tx.dedup_key.value_or(Digest{}));
}

ChainTx decode_tx(Decoder& dec) {
    ChainTx tx;
    tx.id = crypto::decode_digest(dec);
    tx.sender = dec.address();
    tx.call = decode_call(dec);
    tx.value = dec.u64();
    tx.submitted_at = dec.u64();
    bool has_final = dec.boolean();
    auto final_at = dec.u64();
    if (has_final) tx.finalized_at = final_at;
    bool has_key = dec.boolean();
    auto key = crypto::decode_digest(dec);
    if (has_key) tx.dedup_key = key;
    return tx;
}

CostMeter& CostMeter::operator+=(const CostMeter& o) {
    storage_writes += o.storage_writes;
    storage_deletes += o.storage_deletes;
    sig_verifications += o.sig_verifications;
    signature_checks += o.signature_checks;
    hash_ops += o.hash_ops;
    return *this;
}

namespace {

void encode_receipt_body(Encoder& enc, const Receipt& r) {
    crypto::encode(enc, r.tx_id);
    enc.u64(r.height);
    enc.boolean(r.success);
    enc.str(r.revert_reason);
    enc.u64(r.events.size());
    for (const auto& e : r.events) encode(enc, e);
}

}  // namespace

Digest receipt_leaf(const ChainTx& tx, const Receipt& receipt) {
    Encoder enc;
    enc.str("mercury/tx-leaf");
    Encoder tx_enc;
    encode(tx_enc, tx);
    enc.bytes(tx_enc.view());
    Encoder r_enc;
    encode_receipt_body(r_enc, receipt);
    enc.bytes(r_enc.view());
    return crypto::hash(enc);
}

void encode(Encoder& enc, const Receipt& r) {
    encode_receipt_body(enc, r);
    crypto::encode(enc, r.leaf);
}

Receipt decode_receipt(Decoder& dec) {
    Receipt r;
    r.tx_id = crypto::decode_digest(dec);
    r.height = dec.u64();
    r.success = dec.boolean();
    r.revert_reason = dec.str();
    auto n = dec.u64();
    if (n > 100000) throw DecodeError("too many events");
    for (std::uint64_t i = 0; i < n; ++i) r.events.push_back(decode_event(dec));
    r.leaf = crypto::decode_digest(dec);
    return r;
}

void encode(Encoder& enc, const InclusionProof& p) {
    crypto::encode(enc, p.tx_id);
    enc.u64(p.height);
    crypto::encode(enc, p.leaf);
    enc.u64(p.path.size());
    for (const auto& s : p.path) {
        crypto::encode(enc, s.sibling);
        enc.boolean(s.sibling_on_left);
    }
}

InclusionProof decode_inclusion_proof(Decoder& dec) {
    InclusionProof p;
    p.tx_id = crypto::decode_digest(dec);
    p.height = dec.u64();
    p.leaf = crypto::decode_digest(dec);
    auto n = dec.u64();
    if (n > 64) throw DecodeError("merkle path too long");
    for (std::uint64_t i = 0; i < n; ++i) {
        merkle::PathStep s;
        s.sibling = crypto::decode_digest(dec);
        s.sibling_on_left = dec.boolean();
        p.path.push_back(s);
    }
    return p;
}

CallContext::CallContext(Chain& chain, Address self, Address sender, Amount value, Tick timestamp,
                         std::uint64_t height)
    : chain_(chain), self_(self), sender_(sender), value_(value), timestamp_(timestamp), height_(height) {}

Amount CallContext::self_balance() const { return chain_.balance(self_) + value_ - paid_out_; }

void CallContext::pay(const Address& to, Amount amount) {
    if (amount > self_balance()) throw Revert("contract balance insufficient for payment");
    paid_out_ += amount;
    payments_.emplace_back(to, amount);
}

std::optional<Digest> CallContext::recent_block_digest(std::uint64_t height) const {
    std::uint64_t tip = finalized_tip();
    if (height > tip || tip - height >= chain_.config_.recent_hash_window) return std::nullopt;
    return chain_.header(height).digest();
}

std::uint64_t CallContext::finalized_tip() const { return chain_.tip_height(); }

std::string_view tamper_name(Tamper t) {
    switch (t) {
        case Tamper::bad_parent: return "bad_parent";
        case Tamper::height_gap: return "height_gap";
        case Tamper::timestamp_regression: return "timestamp_regression";
        case Tamper::insufficient_signatures: return "insufficient_signatures";
        case Tamper::invalid_signatures: return "invalid_signatures";
        case Tamper::duplicate_signer: return "duplicate_signer";
        case Tamper::fabricated_committee: return "fabricated_committee";
        case Tamper::stale_committee: return "stale_committee";
        case Tamper::tampered_body: return "tampered_body";
        case Tamper::wrong_next_commitment: return "wrong_next_commitment";
        case Tamper::forged_handoff: return "forged_handoff";
    }
    return "unknown";
}

const std::vector<Tamper>& all_tampers() {
    static const std::vector<Tamper> all = {
        Tamper::bad_parent,           Tamper::height_gap,         Tamper::timestamp_regression,
        Tamper::insufficient_signatures, Tamper::invalid_signatures, Tamper::duplicate_signer,
        Tamper::fabricated_committee, Tamper::stale_committee,    Tamper::tampered_body,
        Tamper::wrong_next_commitment, Tamper::forged_handoff,
    };
    return all;
}

Chain::Chain(ChainConfig config) : config_(std::move(config)) {
    config_.validate();
    Block genesis;
    genesis.header.height = 0;
    genesis.header.timestamp = 0;
    genesis.header.tx_root = merkle::empty_root();
    genesis.header.state_digest = compute_state_digest();
    genesis.header.next_committee_commitment = committee(1).commitment();
    sign_header(genesis.header);
    blocks_.push_back(std::move(genesis));
}

void Chain::mint(const Address& to, Amount amount) {
    balances_[to] += amount;
    minted_ += amount;
}

Amount Chain::balance(const Address& who) const {
    auto it = balances_.find(who);
    return it == balances_.end() ? 0 : it->second;
}

Amount Chain::spendable(const Address& who) const {
    auto it = reserved_.find(who);
    Amount reserved = it == reserved_.end() ? 0 : it->second;
    Amount bal = balance(who);
    return bal > reserved ? bal - reserved : 0;
}

Amount Chain::total_balances() const {
    Amount total = 0;
    for (const auto& [addr, bal] : balances_) total += bal;
    return total;
}

void Chain::deploy(const Address& at, std::shared_ptr<Contract> contract) {
    if (config_.script_only && !contract->script()) {
        throw InvalidArgument("script-only chain " + config_.chain_id + " cannot host " + contract->label());
    }
    if (contracts_.contains(at)) throw InvalidArgument("address already hosts a contract");
    contracts_.emplace(at, std::move(contract));
}

Contract* Chain::contract(const Address& at) const {
    auto it = contracts_.find(at);
    return it == contracts_.end() ? nullptr : it->second.get();
}

SubmitResult Chain::submit_tx(const Address& sender, Amount value, Call call, Tick now,
                              std::optional<Digest> dedup_key) {
    if (const auto* c = std::get_if<ContractCall>(&call)) {
        Contract* target = contract(c->contract);
        if (target == nullptr) return {false, {}, "no contract at call target"};
        if (config_.script_only && !target->script()) return {false, {}, "script-only chain"};
    }
    if (spendable(sender) < value) return {false, {}, "insufficient balance"};
    if (dedup_key && (pending_dedup_.contains(*dedup_key) || executed_dedup_.contains(*dedup_key))) {
        return {false, {}, "duplicate submission"};
    }

    ChainTx tx;
    tx.sender = sender;
    tx.call = std::move(call);
    tx.value = value;
    tx.submitted_at = now;
    tx.dedup_key = dedup_key;
    Encoder enc;
    enc.str("mercury/txid");
    enc.str(config_.chain_id);
    enc.u64(nonce_++);
    enc.address(sender);
    enc.u64(value);
    enc.u64(now);
    encode_call(enc, tx.call);
    tx.id = crypto::hash(enc);

    reserved_[sender] += value;
    if (dedup_key) pending_dedup_.insert(*dedup_key);
    Digest id = tx.id;
    mempool_.push_back(PendingTx{std::move(tx)});
    return {true, id, {}};
}

Receipt Chain::execute(ChainTx& tx, std::uint64_t height, Tick now) {
    Receipt receipt;
    receipt.tx_id = tx.id;
    receipt.height = height;
    tx.finalized_at = now;

    reserved_[tx.sender] -= tx.value;
    if (reserved_[tx.sender] == 0) reserved_.erase(tx.sender);
    if (tx.dedup_key) pending_dedup_.erase(*tx.dedup_key);

    if (balance(tx.sender) < tx.value) {
        receipt.success = false;
        receipt.revert_reason = "insufficient balance at execution";
        return receipt;
    }

    if (const auto* p = std::get_if<PlainTransfer>(&tx.call)) {
        balances_[tx.sender] -= tx.value;
        balances_[p->to] += tx.value;
        receipt.success = true;
    } else {
        const auto& call = std::get<ContractCall>(tx.call);
        Contract* target = contract(call.contract);
        std::string stat_key = (target ? target->label() : std::string("missing")) + "." + call.method;
        auto& stats = call_stats_[stat_key];
        stats.calls++;
        CallContext ctx(*this, call.contract, tx.sender, tx.value, now, height);
        try {
            if (target == nullptr) throw Revert("no contract at call target");
            target->execute(ctx, call.method, call.args);
            balances_[tx.sender] -= tx.value;
            balances_[call.contract] += tx.value;
            for (const auto& [to, amount] : ctx.payments()) {
                balances_[call.contract] -= amount;
                balances_[to] += amount;
            }
            receipt.success = true;
            receipt.events = std::move(ctx.events());
        } catch (const Revert& r) {
            stats.reverts++;
            receipt.success = false;
            receipt.revert_reason = r.what();
        }
        receipt.cost = ctx.meter();
        stats.cost += ctx.meter();
    }
    if (receipt.success && tx.dedup_key) executed_dedup_.insert(*tx.dedup_key);
    return receipt;
}

const BlockHeader& Chain::advance_tick(Tick now) {
    const BlockHeader& parent = blocks_.back().header;
    if (now <= parent.timestamp) throw InvalidArgument("chain time must advance");

    Block block;
    std::uint64_t height = parent.height + 1;
    while (!mempool_.empty() && mempool_.front().tx.submitted_at + config_.finality_delay <= now) {
        ChainTx tx = std::move(mempool_.front().tx);
        mempool_.pop_front();
        Receipt r = execute(tx, height, now);
        r.leaf = receipt_leaf(tx, r);
        block.txs.push_back(std::move(tx));
        block.receipts.push_back(std::move(r));
    }

    std::vector<Digest> leaves;
    leaves.reserve(block.receipts.size());
    for (const auto& r : block.receipts) leaves.push_back(r.leaf);

    block.header.height = height;
    block.header.parent_digest = parent.digest();
    block.header.tx_root = merkle::root(leaves);
    block.header.timestamp = now;
    block.header.state_digest = compute_state_digest();
    block.header.next_committee_commitment = committee(epoch_of(height) + 1).commitment();
    sign_header(block.header);

    for (std::size_t i = 0; i < block.txs.size(); ++i) {
        tx_index_[block.txs[i].id] = {height, i};
        const auto& r = block.receipts[i];
        if (!r.success) continue;
        std::string label = "ledger";
        if (const auto* c = std::get_if<ContractCall>(&block.txs[i].call)) {
            if (Contract* k = contract(c->contract)) label = k->label();
        }
        for (const auto& e : r.events) event_log_.push_back({config_.chain_id, height, r.tx_id, label, e});
    }
    blocks_.push_back(std::move(block));
    return blocks_.back().header;
}

Digest Chain::compute_state_digest() const {
    Encoder enc;
    enc.str("mercury/state");
    enc.u64(balances_.size());
    for (const auto& [addr, bal] : balances_) {
        enc.address(addr);
        enc.u64(bal);
    }
    for (const auto& [addr, c] : contracts_) {
        enc.address(addr);
        crypto::encode(enc, c->state_digest());
    }
    return crypto::hash(enc);
}

crypto::KeyPair Chain::validator_key(std::uint64_t epoch, std::uint32_t seat) const {
    auto it = committee_cache_.find(epoch);
    if (it == committee_cache_.end()) {
        std::vector<crypto::KeyPair> keys;
        keys.reserve(config_.committee_size);
        for (std::uint32_t s = 0; s < config_.committee_size; ++s) {
            Encoder enc;
            enc.str("mercury/validator");
            enc.str(config_.chain_id);
            enc.u64(config_.seed);
            enc.u64(epoch);
            enc.u64(s);
            keys.push_back(crypto::KeyPair::from_seed(config_.scheme, crypto::hash(enc)));
        }
        // Only a few epochs around the tip are ever hot.
        if (committee_cache_.size() >= 8) committee_cache_.clear();
        it = committee_cache_.emplace(epoch, std::move(keys)).first;
    }
    return it->second.at(seat);
}

SyncCommittee Chain::committee(std::uint64_t epoch) const {
    SyncCommittee c;
    c.epoch = epoch;
    c.validator_keys.reserve(config_.committee_size);
    for (std::uint32_t s = 0; s < config_.committee_size; ++s) c.validator_keys.push_back(validator_key(epoch, s).public_key);
    return c;
}

std::vector<std::uint32_t> Chain::participating_seats(std::uint64_t height) const {
    std::vector<std::uint32_t> seats(config_.committee_size);
    for (std::uint32_t i = 0; i < seats.size(); ++i) seats[i] = i;
    std::uint32_t p = config_.committee_participation;
    if (p == 0 || p >= config_.committee_size) return seats;
    std::mt19937_64 rng(config_.seed * 0x9e3779b97f4a7c15ULL + height);
    std::shuffle(seats.begin(), seats.end(), rng);
    seats.resize(p);
    std::sort(seats.begin(), seats.end());
    return seats;
}

void Chain::sign_header(BlockHeader& header) const {
    Digest root = header.signing_root();
    std::uint64_t epoch = epoch_of(header.height);
    header.committee_signatures.clear();
    for (std::uint32_t seat : participating_seats(header.height)) {
        header.committee_signatures.push_back(crypto::sign(root, validator_key(epoch, seat)));
    }
}

std::vector<BlockHeader> Chain::handoff_headers(std::uint64_t through_epoch) const {
    std::vector<BlockHeader> out;
    for (std::uint64_t e = 1; e <= through_epoch; ++e) {
        std::uint64_t h = (e - 1) * config_.rotation_period;
        if (h > tip_height()) throw InvalidArgument("handoff epoch beyond chain tip");
        out.push_back(header(h));
    }
    return out;
}

std::optional<Receipt> Chain::receipt(const Digest& tx_id) const {
    auto it = tx_index_.find(tx_id);
    if (it == tx_index_.end()) return std::nullopt;
    return blocks_[it->second.first].receipts[it->second.second];
}

std::optional<ChainTx> Chain::transaction(const Digest& tx_id) const {
    auto it = tx_index_.find(tx_id);
    if (it == tx_index_.end()) return std::nullopt;
    return blocks_[it->second.first].txs[it->second.second];
}

std::optional<InclusionProof> Chain::prove_inclusion(const Digest& tx_id) const {
    auto it = tx_index_.find(tx_id);
    if (it == tx_index_.end()) return std::nullopt;
    const Block& b = blocks_[it->second.first];
    std::vector<Digest> leaves;
    for (const auto& r : b.receipts) leaves.push_back(r.leaf);
    InclusionProof p;
    p.tx_id = tx_id;
    p.height = b.header.height;
    p.leaf = leaves[it->second.second];
    p.path = merkle::path(leaves, it->second.second);
    return p;
}

std::vector<LoggedEvent> Chain::read_event_log(std::uint64_t from_height) const {
    std::vector<LoggedEvent> out;
    if (from_height > tip_height()) return out;
    auto it = std::lower_bound(event_log_.begin(), event_log_.end(), from_height,
                               [](const LoggedEvent& e, std::uint64_t h) { return e.height < h; });
    out.assign(it, event_log_.end());
    return out;
}

std::string format_event_json(const LoggedEvent& e) {
    nlohmann::ordered_json j;
    j["chain"] = e.chain_id;
    j["height"] = e.height;
    j["tx"] = e.tx_id.hex();
    j["contract"] = e.contract;
    j["kind"] = e.event.kind;
    nlohmann::ordered_json fields = nlohmann::ordered_json::object();
    for (const auto& f : e.event.fields) {
        std::visit(
            [&](const auto& v) {
                using T = std::decay_t<decltype(v)>;
                if constexpr (std::is_same_v<T, std::uint64_t>) {
                    fields[f.name] = v;
                } else if constexpr (std::is_same_v<T, std::string>) {
                    fields[f.name] = v;
                } else {
                    fields[f.name] = v.hex();
                }
            },
            f.value);
    }
    j["fields"] = std::move(fields);
    return j.dump();
}

std::string Chain::export_event_log(std::uint64_t from_height) const {
    std::string out;
    for (const auto& e : read_event_log(from_height)) {
        out += format_event_json(e);
        out += '\n';
    }
    return out;
}

BlockHeader Chain::candidate_header(Tick now) const {
    const BlockHeader& parent = blocks_.back().header;
    BlockHeader h;
    h.height = parent.height + 1;
    h.parent_digest = parent.digest();
    h.tx_root = merkle::empty_root();
    h.timestamp = now;
    h.state_digest = compute_state_digest();
    h.next_committee_commitment = committee(epoch_of(h.height) + 1).commitment();
    sign_header(h);
    return h;
}

ForgedHeader Chain::forge_header(Tamper tamper, Tick now) const {
    ForgedHeader out;
    BlockHeader h = candidate_header(now);
    std::uint64_t epoch = epoch_of(h.height);
    std::uint32_t threshold = config_.signature_threshold();

    auto fake_committee = [&](std::uint64_t ep) {
        std::vector<crypto::KeyPair> keys;
        for (std::uint32_t s = 0; s < config_.committee_size; ++s) {
            Encoder enc;
            enc.str("mercury/fabricated-validator");
            enc.str(config_.chain_id);
            enc.u64(ep);
            enc.u64(h.height);
            enc.u64(s);
            keys.push_back(crypto::KeyPair::from_seed(config_.scheme, crypto::hash(enc)));
        }
        return keys;
    };
    auto sign_with = [&](const std::vector<crypto::KeyPair>& keys) {
        h.committee_signatures.clear();
        Digest root = h.signing_root();
        for (const auto& k : keys) h.committee_signatures.push_back(crypto::sign(root, k));
    };

    switch (tamper) {
        case Tamper::bad_parent:
            h.parent_digest = crypto::hash(std::string_view("mercury/forged-parent"));
            sign_header(h);
            break;
        case Tamper::height_gap:
            h.height += 1;
            h.timestamp += 1;
            h.next_committee_commitment = committee(epoch_of(h.height) + 1).commitment();
            sign_header(h);
            break;
        case Tamper::timestamp_regression:
            h.timestamp = blocks_.back().header.timestamp;
            sign_header(h);
            break;
        case Tamper::insufficient_signatures:
            h.committee_signatures.resize(std::min<std::size_t>(h.committee_signatures.size(), threshold - 1));
            break;
        case Tamper::invalid_signatures:
            for (auto& s : h.committee_signatures) s.bytes[0] ^= 0x5a;
            break;
        case Tamper::duplicate_signer: {
            auto first = h.committee_signatures.front();
            h.committee_signatures.assign(threshold, first);
            break;
        }
        case Tamper::fabricated_committee:
            sign_with(fake_committee(epoch));
            break;
        case Tamper::stale_committee: {
            std::uint64_t other = epoch == 0 ? 1 : epoch - 1;
            h.committee_signatures.clear();
            Digest root = h.signing_root();
            for (std::uint32_t s = 0; s < config_.committee_size; ++s) {
                h.committee_signatures.push_back(crypto::sign(root, validator_key(other, s)));
            }
            out.committee = committee(other);
            out.committee->epoch = epoch;
            break;
        }
        case Tamper::tampered_body:
            h.tx_root = crypto::hash(std::string_view("mercury/forged-body"));
            break;
        case Tamper::wrong_next_commitment:
            h.next_committee_commitment = crypto::hash(std::string_view("mercury/forged-next-committee"));
            break;
        case Tamper::forged_handoff: {
            auto keys = fake_committee(epoch);
            sign_with(keys);
            SyncCommittee c;
            c.epoch = epoch;
            for (const auto& k : keys) c.validator_keys.push_back(k.public_key);
            out.committee = std::move(c);
            break;
        }
    }
    out.header = std::move(h);
    return out;
}

}  // namespace mercury::chain
