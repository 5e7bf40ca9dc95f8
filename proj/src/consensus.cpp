#include "mercury/consensus.hpp"

#include <algorithm>

namespace mercury::consensus {

namespace {

void encode_ids(Encoder& enc, const std::vector<Digest>& ids) {
    enc.u64(ids.size());
    for (const auto& id : ids) crypto::encode(enc, id);
}

std::vector<Digest> decode_ids(Decoder& dec) {
    auto n = dec.u64();
    if (n > 100000) throw DecodeError("too many ids");
    std::vector<Digest> ids;
    for (std::uint64_t i = 0; i < n; ++i) ids.push_back(crypto::decode_digest(dec));
    return ids;
}

}  // namespace

std::string_view payload_kind(const Payload& p) {
    switch (p.index()) {
        case 0: return "noop";
        case 1: return "transfer_batch";
        case 2: return "confirm";
        case 3: return "challenge_response";
        case 4: return "checkpoint";
        case 5: return "htlc_pair";
    }
    return "unknown";
}

void encode(Encoder& enc, const Payload& p) {
    enc.u64(p.index());
    std::visit(
        [&](const auto& v) {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, TransferBatchPayload>) {
                enc.str(v.target_chain);
                enc.u64(v.items.size());
                for (const auto& it : v.items) {
                    crypto::encode(enc, it.deposit);
                    enc.address(it.receiver);
                    enc.u64(it.amount);
                    enc.u64(it.source_value);
                    enc.u64(it.deadline);
                }
            } else if constexpr (std::is_same_v<T, ConfirmPayload> || std::is_same_v<T, CheckpointPayload>) {
                encode_ids(enc, v.ids);
            } else if constexpr (std::is_same_v<T, ChallengeResponsePayload>) {
                crypto::encode(enc, v.id);
            } else if constexpr (std::is_same_v<T, HtlcPairPayload>) {
                crypto::encode(enc, v.request);
                enc.address(v.sender);
                enc.address(v.receiver);
                enc.u64(v.amount);
                enc.u64(v.timelock);
                crypto::encode(enc, v.hashlock);
            }
        },
        p);
}

Payload decode_payload(Decoder& dec) {
    switch (dec.u64()) {
        case 0: return NoOp{};
        case 1: {
            TransferBatchPayload b;
            b.target_chain = dec.str();
            auto n = dec.u64();
            if (n > 100000) throw DecodeError("batch too long");
            for (std::uint64_t i = 0; i < n; ++i) {
                BatchIntent it;
                it.deposit = crypto::decode_digest(dec);
                it.receiver = dec.address();
                it.amount = dec.u64();
                it.source_value = dec.u64();
                it.deadline = dec.u64();
                b.items.push_back(it);
            }
            return b;
        }
        case 2: return ConfirmPayload{decode_ids(dec)};
        case 3: return ChallengeResponsePayload{crypto::decode_digest(dec)};
        case 4: return CheckpointPayload{decode_ids(dec)};
        case 5: {
            HtlcPairPayload h;
            h.request = crypto::decode_digest(dec);
            h.sender = dec.address();
            h.receiver = dec.address();
            h.amount = dec.u64();
            h.timelock = dec.u64();
            h.hashlock = crypto::decode_digest(dec);
            return h;
        }
        default: throw DecodeError("unknown payload kind");
    }
}

Digest LogEntry::digest() const {
    Encoder enc;
    enc.str("mercury/log-entry");
    encode(enc, *this);
    return crypto::hash(enc);
}

void encode(Encoder& enc, const LogEntry& e) {
    enc.u64(e.term);
    enc.u64(e.index);
    encode(enc, e.payload);
}

LogEntry decode_entry(Decoder& dec) {
    LogEntry e;
    e.term = dec.u64();
    e.index = dec.u64();
    e.payload = decode_payload(dec);
    return e;
}

void encode(Encoder& enc, const RaftMessage& m) {
    enc.u64(m.index());
    std::visit(
        [&](const auto& v) {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, RequestVote>) {
                enc.u64(v.term).u64(v.last_log_index).u64(v.last_log_term);
            } else if constexpr (std::is_same_v<T, VoteReply>) {
                enc.u64(v.term).boolean(v.granted);
            } else if constexpr (std::is_same_v<T, AppendEntries>) {
                enc.u64(v.term).u64(v.prev_index).u64(v.prev_term).u64(v.leader_commit);
                enc.u64(v.entries.size());
                for (const auto& e : v.entries) encode(enc, e);
            } else {
                enc.u64(v.term).boolean(v.success).u64(v.match_index);
            }
        },
        m);
}

RaftMessage decode_raft_message(Decoder& dec) {
    switch (dec.u64()) {
        case 0: {
            RequestVote v;
            v.term = dec.u64();
            v.last_log_index = dec.u64();
            v.last_log_term = dec.u64();
            return v;
        }
        case 1: {
            VoteReply v;
            v.term = dec.u64();
            v.granted = dec.boolean();
            return v;
        }
        case 2: {
            AppendEntries a;
            a.term = dec.u64();
            a.prev_index = dec.u64();
            a.prev_term = dec.u64();
            a.leader_commit = dec.u64();
            auto n = dec.u64();
            if (n > 100000) throw DecodeError("too many entries");
            for (std::uint64_t i = 0; i < n; ++i) a.entries.push_back(decode_entry(dec));
            return a;
        }
        case 3: {
            AppendReply r;
            r.term = dec.u64();
            r.success = dec.boolean();
            r.match_index = dec.u64();
            return r;
        }
        default: throw DecodeError("unknown raft message");
    }
}

std::string_view role_name(Role r) {
    switch (r) {
        case Role::follower: return "follower";
        case Role::candidate: return "candidate";
        case Role::leader: return "leader";
    }
    return "unknown";
}

RaftNode::RaftNode(RaftConfig config) : config_(config) {
    if (config_.cluster_size == 0 || config_.self >= config_.cluster_size) {
        throw InvalidArgument("raft node index outside the cluster");
    }
    if (config_.heartbeat == 0 || config_.election_base <= config_.heartbeat) {
        throw InvalidArgument("election timeout must exceed the heartbeat interval");
    }
}

void RaftNode::send(std::uint32_t to, RaftMessage msg) {
    metrics_.messages_sent++;
    outbox_.emplace_back(to, std::move(msg));
}

std::vector<std::pair<std::uint32_t, RaftMessage>> RaftNode::take_outbox() { return std::exchange(outbox_, {}); }

std::vector<LogEntry> RaftNode::take_committed() {
    std::vector<LogEntry> out;
    while (delivered_ < commit_index_) {
        out.push_back(log_[delivered_]);
        delivered_++;
    }
    return out;
}

void RaftNode::become_follower(std::uint64_t term, Tick now) {
    if (term > term_) {
        term_ = term;
        voted_for_.reset();
        leader_.reset();
    }
    if (role_ != Role::follower) last_heard_ = now;
    role_ = Role::follower;
}

void RaftNode::become_candidate(Tick now) {
    role_ = Role::candidate;
    term_++;
    voted_for_ = config_.self;
    leader_.reset();
    votes_ = {config_.self};
    last_heard_ = now;
    metrics_.elections_started++;
    if (votes_.size() >= config_.quorum()) {
        become_leader(now);
        return;
    }
    RequestVote rv{term_, last_index(), term_at(last_index())};
    for (std::uint32_t p = 0; p < config_.cluster_size; ++p) {
        if (p != config_.self) send(p, rv);
    }
}

void RaftNode::become_leader(Tick now) {
    role_ = Role::leader;
    leader_ = config_.self;
    metrics_.terms_led++;
    next_index_.assign(config_.cluster_size, last_index() + 1);
    match_index_.assign(config_.cluster_size, 0);
    // A no-op from the new term lets earlier entries commit.
    log_.push_back(LogEntry{term_, last_index() + 1, NoOp{}});
    match_index_[config_.self] = last_index();
    advance_commit();
    broadcast_append(now);
}

std::optional<std::uint64_t> RaftNode::propose(Payload payload, Tick now) {
    if (role_ != Role::leader) return std::nullopt;
    log_.push_back(LogEntry{term_, last_index() + 1, std::move(payload)});
    match_index_[config_.self] = last_index();
    advance_commit();
    broadcast_append(now);
    return last_index();
}

void RaftNode::broadcast_append(Tick now) {
    last_heartbeat_ = now;
    for (std::uint32_t p = 0; p < config_.cluster_size; ++p) {
        if (p != config_.self) send_append(p);
    }
}

void RaftNode::send_append(std::uint32_t peer) {
    AppendEntries a;
    a.term = term_;
    a.prev_index = next_index_[peer] - 1;
    a.prev_term = term_at(a.prev_index);
    a.leader_commit = commit_index_;
    for (std::uint64_t i = next_index_[peer]; i <= last_index() && a.entries.size() < config_.max_entries_per_append;
         ++i) {
        a.entries.push_back(log_[i - 1]);
    }
    send(peer, std::move(a));
}

void RaftNode::advance_commit() {
    for (std::uint64_t n = last_index(); n > commit_index_; --n) {
        if (term_at(n) != term_) break;
        std::uint32_t count = 0;
        for (std::uint32_t p = 0; p < config_.cluster_size; ++p) {
            if (match_index_[p] >= n) count++;
        }
        if (count >= config_.quorum()) {
            metrics_.entries_committed += n - commit_index_;
            commit_index_ = n;
            break;
        }
    }
}

void RaftNode::tick(Tick now) {
    if (role_ == Role::leader) {
        if (now - last_heartbeat_ >= config_.heartbeat) broadcast_append(now);
        return;
    }
    if (now - last_heard_ >= config_.election_timeout()) become_candidate(now);
}

void RaftNode::on_message(std::uint32_t from, const RaftMessage& msg, Tick now) {
    if (from >= config_.cluster_size || from == config_.self) return;
    std::visit([&](const auto& m) { handle(from, m, now); }, msg);
}

void RaftNode::handle(std::uint32_t from, const RequestVote& m, Tick now) {
    if (m.term > term_) become_follower(m.term, now);
    bool granted = false;
    if (m.term == term_ && (!voted_for_ || *voted_for_ == from)) {
        std::uint64_t my_last_term = term_at(last_index());
        bool up_to_date = m.last_log_term > my_last_term ||
                          (m.last_log_term == my_last_term && m.last_log_index >= last_index());
        if (up_to_date) {
            granted = true;
            voted_for_ = from;
            last_heard_ = now;
        }
    }
    send(from, VoteReply{term_, granted});
}

void RaftNode::handle(std::uint32_t from, const VoteReply& m, Tick now) {
    if (m.term > term_) {
        become_follower(m.term, now);
        return;
    }
    if (role_ != Role::candidate || m.term != term_ || !m.granted) return;
    votes_.insert(from);
    if (votes_.size() >= config_.quorum()) become_leader(now);
}

void RaftNode::handle(std::uint32_t from, const AppendEntries& m, Tick now) {
    if (m.term < term_) {
        send(from, AppendReply{term_, false, last_index()});
        return;
    }
    become_follower(m.term, now);
    leader_ = from;
    last_heard_ = now;

    if (m.prev_index > last_index() || term_at(m.prev_index) != m.prev_term) {
        std::uint64_t hint = std::min(last_index(), m.prev_index == 0 ? 0 : m.prev_index - 1);
        send(from, AppendReply{term_, false, hint});
        return;
    }
    std::uint64_t idx = m.prev_index;
    for (const auto& e : m.entries) {
        idx++;
        if (idx <= last_index()) {
            if (term_at(idx) == e.term) continue;
            if (idx <= commit_index_) throw std::logic_error("raft: leader tried to overwrite a committed entry");
            log_.resize(idx - 1);
            truncations_++;
        }
        log_.push_back(e);
    }
    std::uint64_t last_new = m.prev_index + m.entries.size();
    if (m.leader_commit > commit_index_) {
        std::uint64_t c = std::min(m.leader_commit, last_new);
        if (c > commit_index_) {
            metrics_.entries_committed += c - commit_index_;
            commit_index_ = c;
        }
    }
    send(from, AppendReply{term_, true, last_new});
}

void RaftNode::handle(std::uint32_t from, const AppendReply& m, Tick now) {
    if (m.term > term_) {
        become_follower(m.term, now);
        return;
    }
    if (role_ != Role::leader || m.term != term_) return;
    if (m.success) {
        match_index_[from] = std::max(match_index_[from], m.match_index);
        next_index_[from] = match_index_[from] + 1;
        advance_commit();
        if (next_index_[from] <= last_index()) send_append(from);
    } else {
        next_index_[from] = std::max<std::uint64_t>(1, std::min(next_index_[from] - 1, m.match_index + 1));
        send_append(from);
    }
}

bool ShareSet::add(const crypto::Signature& share, const std::vector<crypto::PublicKey>& authorized) {
    if (shares_.contains(share.signer)) return false;
    if (std::find(authorized.begin(), authorized.end(), share.signer) == authorized.end()) return false;
    if (!crypto::verify(digest_, share, share.signer)) return false;
    shares_.emplace(share.signer, share);
    return true;
}

crypto::MultiSignature ShareSet::multisig() const {
    crypto::MultiSignature ms;
    ms.message_digest = digest_;
    ms.threshold = threshold_;
    for (const auto& [k, s] : shares_) ms.signatures.push_back(s);
    return ms;
}

std::vector<TransferBatchPayload> batch_transfers(const std::vector<TransferIntent>& intents, std::size_t max_batch) {
    if (max_batch == 0) throw InvalidArgument("max_batch must be positive");
    std::vector<std::string> order;
    std::map<std::string, std::vector<BatchIntent>> groups;
    for (const auto& in : intents) {
        auto [it, fresh] = groups.try_emplace(in.target_chain);
        if (fresh) order.push_back(in.target_chain);
        it->second.push_back(BatchIntent{in.deposit, in.receiver, in.amount, in.source_value, in.deadline});
    }
    std::vector<TransferBatchPayload> out;
    for (const auto& chain_id : order) {
        const auto& items = groups[chain_id];
        for (std::size_t i = 0; i < items.size(); i += max_batch) {
            TransferBatchPayload b;
            b.target_chain = chain_id;
            b.items.assign(items.begin() + static_cast<std::ptrdiff_t>(i),
                           items.begin() + static_cast<std::ptrdiff_t>(std::min(items.size(), i + max_batch)));
            out.push_back(std::move(b));
        }
    }
    return out;
}

}  // namespace mercury::consensus
