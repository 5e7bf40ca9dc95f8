#include "mercury/enclave.hpp"

#include <algorithm>

namespace mercury::enclave {

using consensus::LogEntry;
using consensus::Payload;

namespace {

constexpr std::uint64_t kChunkBits = 20;

void encode_call(Encoder& enc, const chain::ContractCall& c) {
    enc.address(c.contract);
    enc.str(c.method);
    enc.bytes(c.args);
}

Digest claim_key(const Digest& lock) {
    Encoder enc;
    enc.str("mercury/htlc-claim");
    crypto::encode(enc, lock);
    return crypto::hash(enc);
}

template <class T>
const T* event_field(const chain::Event& ev, std::string_view name) {
    const auto* v = ev.find(name);
    return v != nullptr && std::holds_alternative<T>(*v) ? &std::get<T>(*v) : nullptr;
}

}  // namespace

std::string_view class_name(MessageClass c) {
    switch (c) {
        case MessageClass::client_request: return "client_request";
        case MessageClass::consensus: return "consensus";
        case MessageClass::chain_header: return "chain_header";
        case MessageClass::chain_event: return "chain_event";
        case MessageClass::chain_submission: return "chain_submission";
        case MessageClass::client_reply: return "client_reply";
    }
    return "unknown";
}

MessageClass parse_class(std::string_view name) {
    for (std::size_t i = 0; i < kMessageClasses; ++i) {
        auto c = static_cast<MessageClass>(i);
        if (class_name(c) == name) return c;
    }
    throw InvalidArgument("unknown message class " + std::string(name));
}

std::string_view action_name(FilterAction::Kind k) {
    switch (k) {
        case FilterAction::Kind::deliver: return "deliver";
        case FilterAction::Kind::drop: return "drop";
        case FilterAction::Kind::delay: return "delay";
        case FilterAction::Kind::replay: return "replay";
    }
    return "unknown";
}

std::vector<Tick> HostFilter::route(MessageClass c, Tick now) const {
    if (suspended_) return {};
    const FilterAction& a = policy(c);
    switch (a.kind) {
        case FilterAction::Kind::deliver: return {now};
        case FilterAction::Kind::drop: return {};
        case FilterAction::Kind::delay: return {now + a.ticks};
        case FilterAction::Kind::replay: {
            std::vector<Tick> out;
            for (std::uint32_t i = 0; i <= a.count; ++i) out.push_back(now + i);
            return out;
        }
    }
    return {};
}

// ---- Messages ----------------------------------------------------------------

Digest ExchangeRequest::digest() const {
    Encoder enc;
    enc.str("mercury/request");
    crypto::encode(enc, deposit);
    enc.address(sender);
    enc.str(target_chain);
    enc.address(receiver);
    return crypto::hash(enc);
}

ClientRequest make_client_request(const ExchangeRequest& req, const crypto::KeyPair& client, const chain::ChainTx& tx,
                                  const chain::Receipt& receipt, const chain::InclusionProof& proof) {
    return ClientRequest{req, client.public_key, crypto::sign(req.digest(), client), tx, receipt, proof};
}

Digest HtlcRequest::digest() const {
    Encoder enc;
    enc.str("mercury/htlc-request");
    enc.address(sender);
    enc.address(receiver);
    enc.str(target_chain);
    enc.u64(amount);
    enc.u64(nonce);
    return crypto::hash(enc);
}

HtlcRequest make_htlc_request(const Address& receiver, const std::string& target_chain, Amount amount,
                              std::uint64_t nonce, const crypto::KeyPair& client) {
    HtlcRequest r;
    r.sender = crypto::address_of(client.public_key);
    r.receiver = receiver;
    r.target_chain = target_chain;
    r.amount = amount;
    r.nonce = nonce;
    r.client_key = client.public_key;
    r.signature = crypto::sign(r.digest(), client);
    return r;
}

void encode(Encoder& enc, const ClientRequest& r) {
    crypto::encode(enc, r.request.deposit);
    enc.address(r.request.sender);
    enc.str(r.request.target_chain);
    enc.address(r.request.receiver);
    crypto::encode(enc, r.client_key);
    crypto::encode(enc, r.signature);
    chain::encode(enc, r.tx);
    chain::encode(enc, r.receipt);
    chain::encode(enc, r.proof);
}

ClientRequest decode_client_request(Decoder& dec) {
    ClientRequest r;
    r.request.deposit = crypto::decode_digest(dec);
    r.request.sender = dec.address();
    r.request.target_chain = dec.str();
    r.request.receiver = dec.address();
    r.client_key = crypto::decode_public_key(dec);
    r.signature = crypto::decode_signature(dec);
    r.tx = chain::decode_tx(dec);
    r.receipt = chain::decode_receipt(dec);
    r.proof = chain::decode_inclusion_proof(dec);
    return r;
}

void encode(Encoder& enc, const HtlcRequest& r) {
    enc.address(r.sender);
    enc.address(r.receiver);
    enc.str(r.target_chain);
    enc.u64(r.amount);
    enc.u64(r.nonce);
    crypto::encode(enc, r.client_key);
    crypto::encode(enc, r.signature);
}

HtlcRequest decode_htlc_request(Decoder& dec) {
    HtlcRequest r;
    r.sender = dec.address();
    r.receiver = dec.address();
    r.target_chain = dec.str();
    r.amount = dec.u64();
    r.nonce = dec.u64();
    r.client_key = crypto::decode_public_key(dec);
    r.signature = crypto::decode_signature(dec);
    return r;
}

namespace {

void encode_peer_body(Encoder& enc, const PeerBody& body) {
    enc.u64(body.index());
    std::visit(
        [&](const auto& v) {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, SigShare>) {
                enc.u64(v.task);
                crypto::encode(enc, v.digest);
                crypto::encode(enc, v.signature);
            } else {
                encode(enc, v);
            }
        },
        body);
}

PeerBody decode_peer_body(Decoder& dec) {
    switch (dec.u64()) {
        case 0: return consensus::decode_raft_message(dec);
        case 1: return decode_client_request(dec);
        case 2: return decode_htlc_request(dec);
        case 3: {
            SigShare s;
            s.task = dec.u64();
            s.digest = crypto::decode_digest(dec);
            s.signature = crypto::decode_signature(dec);
            return s;
        }
    }
    throw DecodeError("unknown peer message kind");
}

}  // namespace

Digest Envelope::signing_digest() const {
    Encoder enc;
    enc.str("mercury/envelope");
    enc.u64(from);
    enc.u64(to);
    encode_peer_body(enc, body);
    return crypto::hash(enc);
}

void encode(Encoder& enc, const Envelope& e) {
    enc.u64(e.from);
    enc.u64(e.to);
    encode_peer_body(enc, e.body);
    crypto::encode(enc, e.signature);
}

Envelope decode_envelope(Decoder& dec) {
    Envelope e;
    e.from = static_cast<std::uint32_t>(dec.u64());
    e.to = static_cast<std::uint32_t>(dec.u64());
    e.body = decode_peer_body(dec);
    e.signature = crypto::decode_signature(dec);
    return e;
}

MessageClass input_class(const Input& in) {
    switch (in.index()) {
        case 0: return MessageClass::consensus;
        case 1:
        case 2: return MessageClass::client_request;
        case 3: return MessageClass::chain_header;
        default: return MessageClass::chain_event;
    }
}

Bytes encode_body(const OutputBody& body) {
    Encoder enc;
    enc.u64(body.index());
    std::visit(
        [&](const auto& v) {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, Envelope>) {
                encode(enc, v);
            } else if constexpr (std::is_same_v<T, Submission>) {
                enc.str(v.chain);
                encode_call(enc, v.call);
                enc.u64(v.value);
                crypto::encode(enc, v.dedup_key);
            } else {
                crypto::encode(enc, v.request);
                enc.boolean(v.accepted);
                enc.str(v.detail);
                enc.boolean(v.lock.has_value());
                if (v.lock) {
                    crypto::encode(enc, v.lock->lock_id);
                    crypto::encode(enc, v.lock->hashlock);
                    enc.u64(v.lock->timelock);
                    enc.address(v.lock->claim_address);
                    enc.u64(v.lock->amount);
                }
            }
        },
        body);
    return enc.take();
}

MessageClass Output::message_class() const {
    switch (body.index()) {
        case 0: return MessageClass::consensus;
        case 1: return MessageClass::chain_submission;
        default: return MessageClass::client_reply;
    }
}

Bytes Output::encoded() const {
    Encoder enc;
    enc.bytes(encode_body(body));
    crypto::encode(enc, endorsement);
    return enc.take();
}

Digest program_digest() { return crypto::hash(std::string_view("mercury/exchange-program/v1")); }

// ---- Enclave -----------------------------------------------------------------

Enclave::Enclave(ProgramConfig config, const crypto::Manufacturer& manufacturer, const Digest& eid,
                 const Digest& group_secret)
    : config_(std::move(config)),
      eid_(eid),
      master_(manufacturer.provision_key(eid)),
      group_secret_(group_secret),
      raft_(config_.raft),
      pool_(Rational{0, 1}, config_.fee) {
    master_quote_ = manufacturer.attest(eid, program_digest(), master_.public_key);
    for (const auto& chain : {config_.source_chain, config_.target_chain}) {
        Encoder enc;
        enc.str("mercury/chain-key");
        enc.bytes(master_.secret_key.encoding());
        enc.str(chain);
        auto kp = crypto::KeyPair::from_seed(master_.public_key.scheme, crypto::hash(enc));
        quotes_[chain] = manufacturer.attest(eid, program_digest(), kp.public_key);
        chain_keys_.emplace(chain, kp);
    }
    if (config_.pool_x > 0 && config_.pool_y > 0) {
        pool_.add_liquidity(Address::from_label("pool:genesis"), config_.pool_x, config_.pool_y);
    }
}

const PublicKey& Enclave::chain_key(const std::string& chain) const { return key_for(chain).public_key; }

const crypto::KeyPair& Enclave::key_for(const std::string& chain) const {
    auto it = chain_keys_.find(chain);
    if (it == chain_keys_.end()) throw InvalidArgument("enclave holds no key for chain " + chain);
    return it->second;
}

PeerInfo Enclave::peer_info() const { return PeerInfo{index(), master_quote_, quotes_}; }

std::vector<Bytes> Enclave::audit_secret_encodings() const {
    std::vector<Bytes> out{master_.secret_key.encoding()};
    for (const auto& [chain, kp] : chain_keys_) out.push_back(kp.secret_key.encoding());
    out.emplace_back(group_secret_.bytes.begin(), group_secret_.bytes.end());
    return out;
}

bool Enclave::bootstrap(const std::string& chain, const lightclient::BootstrapBundle& bundle) {
    bool source = chain == config_.source_chain;
    if (!source && chain != config_.target_chain) return false;
    auto result = lightclient::LightClient::bootstrap(source ? config_.lc_source : config_.lc_target,
                                                      source ? config_.genesis_source : config_.genesis_target, bundle);
    if (!std::holds_alternative<lightclient::LightClient>(result)) return false;
    auto& client = std::get<lightclient::LightClient>(result);
    body_cursor_[chain] = client.tip_height() + 1;
    lcs_.insert_or_assign(chain, std::move(client));
    return true;
}

std::size_t Enclave::join(const std::vector<PeerInfo>& peers) {
    std::size_t accepted = 0;
    for (const auto& p : peers) {
        const auto& mq = p.master_quote;
        if (!crypto::verify_quote(mq, config_.manufacturer_root) || mq.program_digest != program_digest()) continue;
        bool ok = true;
        for (const auto& chain : {config_.source_chain, config_.target_chain}) {
            auto it = p.chain_quotes.find(chain);
            if (it == p.chain_quotes.end() || !crypto::verify_quote(it->second, config_.manufacturer_root) ||
                it->second.program_digest != program_digest() || it->second.enclave_id != mq.enclave_id) {
                ok = false;
            }
        }
        if (!ok || p.index >= config_.raft.cluster_size) continue;
        peer_master_[p.index] = mq.enclave_public_key;
        for (const auto& [chain, q] : p.chain_quotes) peer_chain_keys_[chain][p.index] = q.enclave_public_key;
        accepted++;
    }
    return accepted;
}

Registration Enclave::registration(const std::string& chain) const {
    const auto* client = light_client(chain);
    if (client == nullptr) throw InvalidArgument("no light client for chain " + chain);
    const auto& tip = client->tip();
    vault::BlockProof proof{tip.height, tip.digest(), {}};
    proof.signature = crypto::sign(vault::block_proof_message(chain, tip.height, proof.header_digest), key_for(chain));
    return Registration{quotes_.at(chain), proof, key_for(chain).public_key};
}

const lightclient::LightClient* Enclave::light_client(const std::string& chain) const {
    auto it = lcs_.find(chain);
    return it == lcs_.end() ? nullptr : &it->second;
}

lightclient::LightClient* Enclave::lc(const std::string& chain) {
    auto it = lcs_.find(chain);
    return it == lcs_.end() ? nullptr : &it->second;
}

std::uint64_t Enclave::lc_tip(const std::string& chain) const {
    const auto* c = light_client(chain);
    return c == nullptr ? 0 : c->tip_height();
}

bool Enclave::needs_committee(const std::string& chain) const {
    const auto* c = light_client(chain);
    return c != nullptr && c->needs_committee();
}

std::uint64_t Enclave::body_cursor(const std::string& chain) const {
    auto it = body_cursor_.find(chain);
    return it == body_cursor_.end() ? 0 : it->second;
}

std::vector<PublicKey> Enclave::authorized(const std::string& chain) const {
    std::vector<PublicKey> keys;
    auto it = peer_chain_keys_.find(chain);
    if (it != peer_chain_keys_.end()) {
        for (const auto& [i, k] : it->second) keys.push_back(k);
    }
    return keys;
}

void Enclave::emit(Out& out, OutputBody body) const {
    Bytes bytes = encode_body(body);
    auto endorsement = crypto::sign(crypto::hash(bytes), master_);
    out.push_back(Output{std::move(body), endorsement});
}

void Enclave::send_peer(Out& out, std::uint32_t to, PeerBody body) const {
    Envelope env{index(), to, std::move(body), {}};
    env.signature = crypto::sign(env.signing_digest(), master_);
    emit(out, std::move(env));
}

void Enclave::broadcast(Out& out, const PeerBody& body) const {
    for (std::uint32_t i = 0; i < config_.raft.cluster_size; ++i) {
        if (i != index()) send_peer(out, i, body);
    }
}

void Enclave::reply(Out& out, const Digest& request, bool accepted, std::string detail,
                    std::optional<LockTerms> lock) const {
    emit(out, ClientReply{request, accepted, std::move(detail), std::move(lock)});
}

std::vector<Output> Enclave::resume(const Input& input, Tick now) {
    Out out;
    std::visit(
        [&](const auto& v) {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, Envelope>) {
                on_envelope(out, v, now);
            } else if constexpr (std::is_same_v<T, ClientRequest>) {
                on_client_request(out, v, now, true);
            } else if constexpr (std::is_same_v<T, HtlcRequest>) {
                on_htlc_request(out, v, now, true);
            } else if constexpr (std::is_same_v<T, HeaderInput>) {
                on_header(v);
            } else {
                on_block(out, v, now);
            }
        },
        input);
    drain_raft(out, now);
    return out;
}

std::vector<Output> Enclave::tick(Tick now) {
    Out out;
    raft_.tick(now);
    retry_parked(out, now);
    if (raft_.role() == consensus::Role::leader) lead(now);
    drain_raft(out, now);
    progress_tasks(out, now);
    progress_claims(out, now);
    forward_pending(out, now);
    return out;
}

// ---- Inputs ------------------------------------------------------------------

void Enclave::on_envelope(Out& out, const Envelope& env, Tick now) {
    auto it = peer_master_.find(env.from);
    if (env.to != index() || env.from == index() || it == peer_master_.end() || env.signature.signer != it->second ||
        !crypto::verify(env.signing_digest(), env.signature, it->second)) {
        metrics_.envelopes_rejected++;
        return;
    }
    std::visit(
        [&](const auto& v) {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, consensus::RaftMessage>) {
                raft_.on_message(env.from, v, now);
            } else if constexpr (std::is_same_v<T, ClientRequest>) {
                on_client_request(out, v, now, false);
            } else if constexpr (std::is_same_v<T, HtlcRequest>) {
                on_htlc_request(out, v, now, false);
            } else {
                on_share(v, env.from);
            }
        },
        env.body);
}

Enclave::Verdict Enclave::validate(const ClientRequest& r, std::string& why, Tick& deposit_time, Amount& value) const {
    const auto& req = r.request;
    if (config_.mode != Mode::challenge) {
        why = "deposits are not used in this mode";
        return Verdict::reject;
    }
    if (req.target_chain != config_.target_chain) {
        why = "unknown target chain";
        return Verdict::reject;
    }
    if (r.signature.signer != r.client_key || !crypto::verify(req.digest(), r.signature, r.client_key)) {
        why = "bad client signature";
        return Verdict::reject;
    }
    if (crypto::address_of(r.client_key) != req.sender) {
        why = "signer does not own the sender address";
        return Verdict::reject;
    }
    if (r.tx.id != r.proof.tx_id || r.receipt.tx_id != r.tx.id || r.receipt.height != r.proof.height ||
        chain::receipt_leaf(r.tx, r.receipt) != r.proof.leaf) {
        why = "proof does not match the transaction";
        return Verdict::reject;
    }
    const auto* client = light_client(config_.source_chain);
    switch (client->verify_inclusion(r.proof)) {
        case lightclient::Inclusion::unknown_height: why = "deposit not yet finalized"; return Verdict::park;
        case lightclient::Inclusion::not_included: why = "inclusion proof rejected"; return Verdict::reject;
        case lightclient::Inclusion::included: break;
    }
    const auto* call = std::get_if<chain::ContractCall>(&r.tx.call);
    if (!r.receipt.success || call == nullptr || call->contract != config_.vault_s || call->method != "deposit") {
        why = "transaction is not a vault deposit";
        return Verdict::reject;
    }
    for (const auto& ev : r.receipt.events) {
        if (ev.kind != "Deposit") continue;
        const auto* id = event_field<Digest>(ev, "id");
        const auto* sender = event_field<Address>(ev, "sender");
        const auto* v = event_field<std::uint64_t>(ev, "value");
        const auto* ts = event_field<std::uint64_t>(ev, "timestamp");
        if (id == nullptr || sender == nullptr || v == nullptr || ts == nullptr) continue;
        if (*id != req.deposit) continue;
        if (*sender != req.sender) {
            why = "deposit sender mismatch";
            return Verdict::reject;
        }
        if (*v <= config_.fee) {
            why = "deposit does not cover the fee";
            return Verdict::reject;
        }
        value = *v;
        deposit_time = *ts;
        return Verdict::accept;
    }
    why = "deposit id not found in receipt";
    return Verdict::reject;
}

void Enclave::on_client_request(Out& out, const ClientRequest& r, Tick now, bool from_client) {
    const Digest& id = r.request.deposit;
    if (seen_requests_.contains(id) || intent_ids_.contains(id)) {
        if (from_client) {
            metrics_.requests_rejected++;
            reply(out, r.request.digest(), false, "duplicate deposit id");
        }
        return;
    }
    std::string why;
    Tick deposit_time = 0;
    Amount value = 0;
    switch (validate(r, why, deposit_time, value)) {
        case Verdict::reject:
            metrics_.requests_rejected++;
            if (from_client) reply(out, r.request.digest(), false, why);
            return;
        case Verdict::park:
            for (const auto& p : parked_) {
                if (p.request.request.deposit == id) return;
            }
            metrics_.requests_parked++;
            parked_.push_back(Parked{r, now});
            return;
        case Verdict::accept: break;
    }
    seen_requests_.insert(id);
    metrics_.requests_accepted++;
    Pending p;
    p.deposit = id;
    p.sender = r.request.sender;
    p.receiver = r.request.receiver;
    p.value = value;
    p.deadline = deposit_time + config_.timing.tau_w - config_.timing.margin();
    p.received_at = now;
    p.request = r;
    pending_.emplace(id, std::move(p));
    pending_order_.push_back(id);
    if (from_client) reply(out, r.request.digest(), true, "accepted");
}

void Enclave::retry_parked(Out& out, Tick now) {
    if (parked_.empty()) return;
    auto parked = std::move(parked_);
    parked_.clear();
    for (auto& p : parked) {
        if (now - p.since > 2 * config_.timing.delta_s) {
            metrics_.requests_rejected++;
            reply(out, p.request.request.digest(), false, "deposit not finalized in time");
            continue;
        }
        std::string why;
        Tick ts = 0;
        Amount value = 0;
        auto verdict = validate(p.request, why, ts, value);
        if (verdict == Verdict::park) {
            parked_.push_back(std::move(p));
        } else {
            on_client_request(out, p.request, now, true);
        }
    }
}

void Enclave::on_htlc_request(Out& out, const HtlcRequest& r, Tick now, bool from_client) {
    (void)now;
    Digest d = r.digest();
    if (htlc_pending_.contains(d) || htlc_requests_committed_.contains(d)) {
        if (from_client) reply(out, d, false, "duplicate request");
        return;
    }
    std::string why;
    if (config_.mode != Mode::htlc) {
        why = "lock pairs are not used in this mode";
    } else if (r.target_chain != config_.target_chain) {
        why = "unknown target chain";
    } else if (r.signature.signer != r.client_key || !crypto::verify(d, r.signature, r.client_key) ||
               crypto::address_of(r.client_key) != r.sender) {
        why = "bad client signature";
    } else if (r.amount <= config_.fee) {
        why = "amount does not cover the fee";
    }
    if (!why.empty()) {
        metrics_.requests_rejected++;
        if (from_client) reply(out, d, false, why);
        return;
    }
    metrics_.requests_accepted++;
    htlc_pending_.emplace(d, r);
}

void Enclave::on_header(const HeaderInput& in) {
    auto* client = lc(in.chain);
    if (client == nullptr || in.header.height <= client->tip_height()) return;
    if (!client->ingest_header(in.header, in.committee).accepted) metrics_.headers_rejected++;
}

void Enclave::on_block(Out& out, const BlockInput& in, Tick now) {
    auto* client = lc(in.chain);
    if (client == nullptr || in.height != body_cursor_[in.chain]) return;
    const auto* header = client->header(in.height);
    if (header == nullptr) return;
    if (in.txs.size() != in.receipts.size()) {
        metrics_.blocks_rejected++;
        return;
    }
    std::vector<Digest> leaves;
    leaves.reserve(in.txs.size());
    for (std::size_t i = 0; i < in.txs.size(); ++i) {
        if (in.receipts[i].tx_id != in.txs[i].id) {
            metrics_.blocks_rejected++;
            return;
        }
        leaves.push_back(chain::receipt_leaf(in.txs[i], in.receipts[i]));
    }
    if (merkle::root(leaves) != header->tx_root) {
        metrics_.blocks_rejected++;
        return;
    }
    body_cursor_[in.chain]++;
    bool source = in.chain == config_.source_chain;
    for (std::size_t i = 0; i < in.txs.size(); ++i) {
        const auto& tx = in.txs[i];
        const auto& receipt = in.receipts[i];
        if (tx.dedup_key && !landed_.contains(*tx.dedup_key)) {
            landed_.insert(*tx.dedup_key);
            std::erase_if(tasks_, [&](const auto& kv) { return kv.second.dedup == *tx.dedup_key; });
        }
        const auto* call = std::get_if<chain::ContractCall>(&tx.call);
        if (!receipt.success || call == nullptr) continue;
        for (const auto& ev : receipt.events) {
            if (source && (call->contract == config_.vault_s || call->contract == config_.htlc_script)) {
                on_source_event(out, tx, ev, header->timestamp);
            } else if (!source && call->contract == config_.vault_t) {
                on_target_event(out, ev, header->timestamp);
            }
        }
    }
    (void)now;
}

void Enclave::on_source_event(Out& out, const chain::ChainTx& tx, const chain::Event& ev, Tick block_time) {
    (void)out;
    (void)tx;
    (void)block_time;
    if (config_.mode == Mode::htlc) {
        const auto* id = event_field<Digest>(ev, "id");
        if (id == nullptr) return;
        auto it = htlc_.find(*id);
        if (it == htlc_.end()) return;
        HtlcState& h = it->second;
        if (ev.kind == "Locked") {
            const auto& l = h.pair.lock;
            const auto* amount = event_field<std::uint64_t>(ev, "amount");
            const auto* sender = event_field<Address>(ev, "sender");
            if (amount == nullptr || sender == nullptr || *amount != l.amount || *sender != l.refund_address) return;
            h.locked = true;
            if (intent_ids_.contains(*id) || pending_.contains(*id)) return;
            Pending p;
            p.deposit = *id;
            p.sender = l.refund_address;
            p.receiver = h.pair.transfer.receiver;
            p.value = l.amount;
            p.deadline = h.pair.transfer.deadline;
            p.received_at = block_time;
            pending_.emplace(*id, std::move(p));
            pending_order_.push_back(*id);
        } else if (ev.kind == "Claimed" || ev.kind == "HtlcRefunded") {
            h.spent = true;
        }
        return;
    }
    const auto* id = event_field<Digest>(ev, "id");
    if (id == nullptr) return;
    if (ev.kind == "Challenge") {
        const auto* start = event_field<std::uint64_t>(ev, "started_at");
        if (start == nullptr) return;
        tracked_[*id].challenge_start = *start;
    } else if (ev.kind == "Confirmed") {
        auto& t = tracked_[*id];
        t.confirmed = true;
        t.challenge_start.reset();
    } else if (ev.kind == "Refund" || ev.kind == "ChallengeResponded" || ev.kind == "Checkpointed") {
        tracked_[*id].retired = true;
    } else if (ev.kind == "CheckpointSkipped") {
        tracked_[*id].in_checkpoint = false;
    } else {
        return;
    }
    reconsider(*id);
}

void Enclave::on_target_event(Out& out, const chain::Event& ev, Tick block_time) {
    (void)out;
    if (ev.kind != "Transfer") return;
    const auto* deposit = event_field<Digest>(ev, "deposit");
    if (deposit == nullptr) return;
    if (config_.mode == Mode::htlc) {
        auto it = htlc_.find(*deposit);
        if (it != htlc_.end()) it->second.transferred = true;
        return;
    }
    tracked_[*deposit].transfer_tick = block_time;
    reconsider(*deposit);
}

void Enclave::reconsider(const Digest& id) {
    Tracked& t = tracked_[id];
    checkpoint_ready_.erase(id);
    want_confirm_.erase(id);
    want_respond_.erase(id);
    if (t.retired || !t.transfer_tick) return;
    if (t.challenge_start) {
        // A challenge submitted before the transfer was visible is answered
        // with a confirm, which returns the pledge.
        if (*t.challenge_start < *t.transfer_tick + config_.timing.delta_s) {
            if (!t.confirm_committed) want_confirm_.insert(id);
        } else if (!t.respond_committed) {
            want_respond_.insert(id);
        }
        return;
    }
    if (!t.in_checkpoint) checkpoint_ready_.insert(id);
}

void Enclave::on_share(const SigShare& share, std::uint32_t from) {
    (void)from;
    auto it = tasks_.find(share.task);
    if (it == tasks_.end()) {
        if (share.task >> kChunkBits > applied_) {
            auto& early = early_shares_[share.task];
            if (early.size() < config_.raft.cluster_size) early.push_back(share);
        }
        return;
    }
    Task& task = it->second;
    if (share.digest != task.digest) return;
    task.shares.add(share.signature, authorized(task.chain));
}

// ---- Consensus ---------------------------------------------------------------

void Enclave::drain_raft(Out& out, Tick now) {
    for (auto& entry : raft_.take_committed()) {
        applied_ = entry.index;
        apply(out, entry, now);
    }
    for (auto& [to, msg] : raft_.take_outbox()) send_peer(out, to, std::move(msg));
}

void Enclave::apply(Out& out, const LogEntry& entry, Tick now) {
    const std::uint64_t base = entry.index << kChunkBits;
    std::visit(
        [&](const auto& p) {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, consensus::TransferBatchPayload>) {
                apply_batch(out, entry.index, p, now);
            } else if constexpr (std::is_same_v<T, consensus::ConfirmPayload>) {
                for (const auto& id : p.ids) {
                    tracked_[id].confirm_committed = true;
                    reconsider(id);
                }
                Task t;
                t.kind = TaskKind::confirm;
                t.chain = config_.source_chain;
                t.digest = vault::confirm_digest(config_.source_chain, p.ids);
                t.ids = p.ids;
                open_task(out, base, std::move(t), now);
            } else if constexpr (std::is_same_v<T, consensus::ChallengeResponsePayload>) {
                tracked_[p.id].respond_committed = true;
                reconsider(p.id);
                Task t;
                t.kind = TaskKind::respond;
                t.chain = config_.source_chain;
                t.digest = vault::challenge_digest(config_.source_chain, p.id);
                t.ids = {p.id};
                open_task(out, base, std::move(t), now);
            } else if constexpr (std::is_same_v<T, consensus::CheckpointPayload>) {
                for (const auto& id : p.ids) {
                    tracked_[id].in_checkpoint = true;
                    reconsider(id);
                }
                last_checkpoint_ = now;
                Task t;
                t.kind = TaskKind::checkpoint;
                t.chain = config_.source_chain;
                t.digest = vault::checkpoint_digest(config_.source_chain, p.ids);
                t.ids = p.ids;
                open_task(out, base, std::move(t), now);
            } else if constexpr (std::is_same_v<T, consensus::HtlcPairPayload>) {
                apply_htlc(out, p);
            }
        },
        entry.payload);
}

void Enclave::apply_batch(Out& out, std::uint64_t index, const consensus::TransferBatchPayload& p, Tick now) {
    if (p.target_chain != config_.target_chain) return;
    std::vector<vault::TransferItem> kept;
    for (const auto& item : p.items) {
        // Replay guard and price check against the replicated pool.
        if (intent_ids_.contains(item.deposit) || item.source_value <= config_.fee) continue;
        auto quote = pool_.quote(item.source_value - config_.fee);
        if (!quote || *quote != item.amount) continue;
        pool_.exchange(item.source_value - config_.fee);
        intent_ids_.insert(item.deposit);
        intents_log_.push_back(CommittedIntent{index, item});
        metrics_.intents_created++;
        pending_.erase(item.deposit);
        kept.push_back(vault::TransferItem{item.receiver, item.amount, item.deposit, item.deadline});
    }
    const std::size_t chunk = std::max<std::size_t>(config_.batching.onchain_batch, 1);
    for (std::size_t start = 0, c = 0; start < kept.size(); start += chunk, ++c) {
        Task t;
        t.kind = TaskKind::transfer;
        t.chain = config_.target_chain;
        t.body.target_chain = config_.target_chain;
        t.body.sequence = (index << kChunkBits) | c;
        t.body.transfers.assign(kept.begin() + static_cast<std::ptrdiff_t>(start),
                                kept.begin() + static_cast<std::ptrdiff_t>(std::min(kept.size(), start + chunk)));
        t.digest = t.body.digest();
        open_task(out, t.body.sequence, std::move(t), now);
    }
}

void Enclave::apply_htlc(Out& out, const consensus::HtlcPairPayload& p) {
    if (!htlc_requests_committed_.insert(p.request).second) return;
    htlc_pending_.erase(p.request);
    htlc::HtlcPair pair;
    try {
        pair = htlc::build_pair(p, group_secret_, config_.htlc_claim_address, config_.target_chain, 0,
                                config_.timing.margin());
    } catch (const InvalidArgument&) {
        return;
    }
    Digest preimage = htlc::derive_preimage(group_secret_, p.request);
    LockTerms terms{pair.lock.id, pair.lock.hashlock, pair.lock.timelock, pair.lock.claim_address, pair.lock.amount};
    htlc_.emplace(pair.lock.id, HtlcState{pair, preimage, false, false, false, std::nullopt});
    reply(out, p.request, true, "lock terms", terms);
}

void Enclave::open_task(Out& out, std::uint64_t id, Task task, Tick now) {
    Encoder key;
    key.str("mercury/task");
    key.u64(id);
    crypto::encode(key, task.digest);
    task.dedup = crypto::hash(key);
    if (landed_.contains(task.dedup) || tasks_.contains(id)) return;
    task.shares = consensus::ShareSet(task.digest, config_.raft.quorum());
    task.own = crypto::sign(task.digest, key_for(task.chain));
    metrics_.shares_signed++;
    auto keys = authorized(task.chain);
    task.shares.add(task.own, keys);
    if (auto early = early_shares_.find(id); early != early_shares_.end()) {
        for (const auto& s : early->second) {
            if (s.digest == task.digest) task.shares.add(s.signature, keys);
        }
        early_shares_.erase(early);
    }
    task.last_share = now;
    broadcast(out, SigShare{id, task.digest, task.own});
    tasks_.emplace(id, std::move(task));
}

void Enclave::progress_tasks(Out& out, Tick now) {
    const Tick period = std::max<Tick>(config_.resend_period, 1);
    for (auto& [id, task] : tasks_) {
        if (now - task.last_share >= period) {
            task.last_share = now;
            broadcast(out, SigShare{id, task.digest, task.own});
        }
        if (!task.shares.complete()) continue;
        if (task.last_submit && now - *task.last_submit < period) continue;
        task.last_submit = now;
        Submission s;
        s.chain = task.chain;
        s.dedup_key = task.dedup;
        auto ms = task.shares.multisig();
        switch (task.kind) {
            case TaskKind::transfer:
                s.call = vault::calls::transfer(config_.vault_t, vault::TransferBatch{task.body, ms});
                break;
            case TaskKind::confirm: s.call = vault::calls::confirm(config_.vault_s, task.ids, ms); break;
            case TaskKind::respond:
                s.call = vault::calls::respond_challenge(config_.vault_s, task.ids.front(), ms);
                break;
            case TaskKind::checkpoint: s.call = vault::calls::update_checkpoint(config_.vault_s, task.ids, ms); break;
        }
        metrics_.submissions++;
        emit(out, std::move(s));
    }
}

void Enclave::progress_claims(Out& out, Tick now) {
    const Tick period = std::max<Tick>(config_.resend_period, 1);
    for (auto& [id, h] : htlc_) {
        if (!h.transferred || h.spent) continue;
        if (now > h.pair.lock.timelock + config_.timing.delta_s) continue;
        if (h.last_claim && now - *h.last_claim < period) continue;
        h.last_claim = now;
        Submission s;
        s.chain = config_.source_chain;
        s.call = htlc::calls::claim(config_.htlc_script, id, h.preimage);
        s.dedup_key = claim_key(id);
        metrics_.submissions++;
        emit(out, std::move(s));
    }
}

void Enclave::forward_pending(Out& out, Tick now) {
    auto leader = raft_.leader();
    if (!leader || *leader == index() || raft_.role() == consensus::Role::leader) return;
    const Tick period = std::max<Tick>(config_.resend_period, 1);
    for (auto& [id, p] : pending_) {
        if (!p.request || (p.forwarded_at != 0 && now - p.forwarded_at < period)) continue;
        p.forwarded_at = now;
        send_peer(out, *leader, *p.request);
    }
    for (const auto& [d, r] : htlc_pending_) {
        if (now % period == index() % period) send_peer(out, *leader, r);
    }
}

bool Enclave::uncommitted_kind(std::size_t kind) const {
    const auto& log = raft_.log();
    for (std::size_t i = raft_.commit_index(); i < log.size(); ++i) {
        if (log[i].payload.index() == kind) return true;
    }
    return false;
}

std::set<Digest> Enclave::uncommitted_ids(std::size_t kind) const {
    std::set<Digest> ids;
    const auto& log = raft_.log();
    for (std::size_t i = raft_.commit_index(); i < log.size(); ++i) {
        const auto& p = log[i].payload;
        if (p.index() != kind) continue;
        if (const auto* c = std::get_if<consensus::ConfirmPayload>(&p)) ids.insert(c->ids.begin(), c->ids.end());
        if (const auto* r = std::get_if<consensus::ChallengeResponsePayload>(&p)) ids.insert(r->id);
        if (const auto* k = std::get_if<consensus::CheckpointPayload>(&p)) ids.insert(k->ids.begin(), k->ids.end());
        if (const auto* h = std::get_if<consensus::HtlcPairPayload>(&p)) ids.insert(h->request);
    }
    return ids;
}

void Enclave::lead(Tick now) {
    propose_transfers(now);
    if (config_.mode == Mode::challenge) {
        propose_actions(now);
    } else {
        propose_htlc_pairs(now);
    }
}

void Enclave::propose_transfers(Tick now) {
    constexpr std::size_t kBatch = 1;
    if (pending_.empty() || uncommitted_kind(kBatch)) return;
    std::deque<Digest> order;
    for (const auto& id : pending_order_) {
        if (pending_.contains(id)) order.push_back(id);
    }
    pending_order_ = std::move(order);

    amm::Pool scratch = pool_;
    consensus::TransferBatchPayload batch;
    batch.target_chain = config_.target_chain;
    const Tick lead_time = config_.timing.delta_e + config_.timing.delta_t;
    std::vector<Digest> expired;
    for (const auto& id : pending_order_) {
        if (batch.items.size() >= config_.batching.max_batch) break;
        const Pending& p = pending_.at(id);
        if (intent_ids_.contains(id)) {
            expired.push_back(id);
            continue;
        }
        // Intents that cannot land before their deadline are abandoned; the
        // client recovers through the challenge path.
        if (now + lead_time > p.deadline) {
            expired.push_back(id);
            continue;
        }
        auto out = scratch.quote(p.value - config_.fee);
        if (!out) {
            expired.push_back(id);
            continue;
        }
        scratch.exchange(p.value - config_.fee);
        batch.items.push_back(consensus::BatchIntent{id, p.receiver, *out, p.value, p.deadline});
    }
    for (const auto& id : expired) pending_.erase(id);
    if (!batch.items.empty()) raft_.propose(std::move(batch), now);
}

void Enclave::propose_actions(Tick now) {
    constexpr std::size_t kConfirm = 2, kRespond = 3, kCheckpoint = 4;
    if (!want_confirm_.empty()) {
        auto inflight = uncommitted_ids(kConfirm);
        consensus::ConfirmPayload c;
        for (const auto& id : want_confirm_) {
            if (!inflight.contains(id)) c.ids.push_back(id);
        }
        if (!c.ids.empty()) raft_.propose(std::move(c), now);
    }
    if (!want_respond_.empty()) {
        auto inflight = uncommitted_ids(kRespond);
        for (const auto& id : want_respond_) {
            if (!inflight.contains(id)) raft_.propose(consensus::ChallengeResponsePayload{id}, now);
        }
    }
    if (checkpoint_ready_.empty() || uncommitted_kind(kCheckpoint)) return;
    const std::size_t size = std::max<std::size_t>(config_.batching.checkpoint_batch_size, 1);
    std::vector<Digest> ready(checkpoint_ready_.begin(), checkpoint_ready_.end());
    std::size_t full = ready.size() / size;
    for (std::size_t c = 0; c < full; ++c) {
        consensus::CheckpointPayload p;
        p.ids.assign(ready.begin() + static_cast<std::ptrdiff_t>(c * size),
                     ready.begin() + static_cast<std::ptrdiff_t>((c + 1) * size));
        raft_.propose(std::move(p), now);
    }
    const Tick period = config_.batching.checkpoint_period;
    if (full == 0 && period > 0 && now >= last_checkpoint_ + period) {
        raft_.propose(consensus::CheckpointPayload{ready}, now);
    }
}

void Enclave::propose_htlc_pairs(Tick now) {
    constexpr std::size_t kPair = 5;
    if (htlc_pending_.empty()) return;
    auto inflight = uncommitted_ids(kPair);
    for (const auto& [d, r] : htlc_pending_) {
        if (inflight.contains(d)) continue;
        consensus::HtlcPairPayload p;
        p.request = d;
        p.sender = r.sender;
        p.receiver = r.receiver;
        p.amount = r.amount;
        p.timelock = now + config_.htlc_timelock;
        p.hashlock = htlc::hashlock_of(htlc::derive_preimage(group_secret_, d));
        raft_.propose(std::move(p), now);
    }
}

}  // namespace mercury::enclave
