#pragma once

#include <map>
#include <optional>
#include <set>
#include <variant>
#include <vector>

#include "mercury/crypto.hpp"

namespace mercury::consensus {

using crypto::Digest;

// ---- Replicated payloads -------------------------------------------------

struct NoOp {};

/// One priced transfer as agreed by consensus. source_value lets every
/// replica re-derive the price at commit.
struct BatchIntent {
    Digest deposit;
    Address receiver;
    Amount amount = 0;
    Amount source_value = 0;
    Tick deadline = 0;
    bool operator==(const BatchIntent&) const = default;
};

struct TransferBatchPayload {
    std::string target_chain;
    std::vector<BatchIntent> items;
};

struct ConfirmPayload {
    std::vector<Digest> ids;
};

struct ChallengeResponsePayload {
    Digest id;
};

struct CheckpointPayload {
    std::vector<Digest> ids;
};

/// Hash time-lock pair agreed for a client request on a script-only chain.
struct HtlcPairPayload {
    Digest request;
    Address sender;
    Address receiver;
    Amount amount = 0;
    Tick timelock = 0;
    Digest hashlock;
};

using Payload = std::variant<NoOp, TransferBatchPayload, ConfirmPayload, ChallengeResponsePayload, CheckpointPayload,
                             HtlcPairPayload>;

std::string_view payload_kind(const Payload& p);
void encode(Encoder& enc, const Payload& p);
Payload decode_payload(Decoder& dec);

struct LogEntry {
    std::uint64_t term = 0;
    std::uint64_t index = 0;
    Payload payload;

    Digest digest() const;
};

void encode(Encoder& enc, const LogEntry& e);
LogEntry decode_entry(Decoder& dec);

// ---- Raft wire messages ----------------------------------------------------

struct RequestVote {
    std::uint64_t term = 0;
    std::uint64_t last_log_index = 0;
    std::uint64_t last_log_term = 0;
};

struct VoteReply {
    std::uint64_t term = 0;
    bool granted = false;
};

struct AppendEntries {
    std::uint64_t term = 0;
    std::uint64_t prev_index = 0;
    std::uint64_t prev_term = 0;
    std::vector<LogEntry> entries;
    std::uint64_t leader_commit = 0;
};

struct AppendReply {
    std::uint64_t term = 0;
    bool success = false;
    /// Highest index known to match on success; the follower's last index on failure.
    std::uint64_t match_index = 0;
};

using RaftMessage = std::variant<RequestVote, VoteReply, AppendEntries, AppendReply>;

void encode(Encoder& enc, const RaftMessage& m);
RaftMessage decode_raft_message(Decoder& dec);

enum class Role { follower, candidate, leader };
std::string_view role_name(Role r);

struct RaftConfig {
    std::uint32_t self = 0;
    std::uint32_t cluster_size = 3;
    /// Election timeout for node i is election_base + i * election_step.
    Tick election_base = 10;
    Tick election_step = 4;
    Tick heartbeat = 2;
    std::size_t max_entries_per_append = 64;

    Tick election_timeout() const { return election_base + self * election_step; }
    std::uint32_t quorum() const { return cluster_size / 2 + 1; }
};

struct RaftMetrics {
    std::uint64_t elections_started = 0;
    std::uint64_t terms_led = 0;
    std::uint64_t entries_committed = 0;
    std::uint64_t messages_sent = 0;
};

/// Raft core without I/O: feed it messages and ticks, drain its outbox and
/// newly committed entries. Election timeouts are deterministic per node.
class RaftNode {
public:
    explicit RaftNode(RaftConfig config);

    void on_message(std::uint32_t from, const RaftMessage& msg, Tick now);
    void tick(Tick now);
    /// Restarts the election timer, e.g. after the node was suspended.
    void reset_timer(Tick now) { last_heard_ = now; last_heartbeat_ = now; }

    /// Appends a payload when leader; returns its index.
    std::optional<std::uint64_t> propose(Payload payload, Tick now);

    std::vector<std::pair<std::uint32_t, RaftMessage>> take_outbox();
    std::vector<LogEntry> take_committed();

    Role role() const { return role_; }
    std::uint64_t term() const { return term_; }
    std::optional<std::uint32_t> leader() const { return leader_; }
    std::uint64_t commit_index() const { return commit_index_; }
    std::uint64_t last_index() const { return log_.size(); }
    std::uint64_t term_at(std::uint64_t index) const { return index == 0 ? 0 : log_.at(index - 1).term; }
    const std::vector<LogEntry>& log() const { return log_; }
    const RaftConfig& config() const { return config_; }
    const RaftMetrics& metrics() const { return metrics_; }
    /// Bumped whenever uncommitted entries are truncated.
    std::uint64_t truncations() const { return truncations_; }

private:
    void become_follower(std::uint64_t term, Tick now);
    void become_candidate(Tick now);
    void become_leader(Tick now);
    void send(std::uint32_t to, RaftMessage msg);
    void broadcast_append(Tick now);
    void send_append(std::uint32_t peer);
    void advance_commit();
    void handle(std::uint32_t from, const RequestVote& m, Tick now);
    void handle(std::uint32_t from, const VoteReply& m, Tick now);
    void handle(std::uint32_t from, const AppendEntries& m, Tick now);
    void handle(std::uint32_t from, const AppendReply& m, Tick now);

    RaftConfig config_;
    Role role_ = Role::follower;
    std::uint64_t term_ = 0;
    std::optional<std::uint32_t> voted_for_;
    std::optional<std::uint32_t> leader_;
    std::vector<LogEntry> log_;
    std::uint64_t commit_index_ = 0;
    std::uint64_t delivered_ = 0;
    Tick last_heard_ = 0;
    Tick last_heartbeat_ = 0;
    std::set<std::uint32_t> votes_;
    std::vector<std::uint64_t> next_index_;
    std::vector<std::uint64_t> match_index_;
    std::vector<std::pair<std::uint32_t, RaftMessage>> outbox_;
    RaftMetrics metrics_;
    std::uint64_t truncations_ = 0;
};

// ---- Threshold signature collection ---------------------------------------

/// Shares over one committed payload digest, keyed by signer.
class ShareSet {
public:
    ShareSet() = default;
    ShareSet(Digest digest, std::uint32_t threshold) : digest_(digest), threshold_(threshold) {}

    /// Accepts a share if it verifies under an authorized key; duplicates count once.
    bool add(const crypto::Signature& share, const std::vector<crypto::PublicKey>& authorized);
    bool complete() const { return shares_.size() >= threshold_; }
    std::size_t size() const { return shares_.size(); }
    const Digest& digest() const { return digest_; }
    /// Multisig from all collected shares, ordered by signer.
    crypto::MultiSignature multisig() const;

private:
    Digest digest_;
    std::uint32_t threshold_ = 1;
    std::map<crypto::PublicKey, crypto::Signature> shares_;
};

// ---- Batching ---------------------------------------------------------------

struct TransferIntent {
    Digest deposit;
    std::string target_chain;
    Amount amount = 0;
    Address receiver;
    Amount source_value = 0;
    Tick deadline = 0;
};

/// Groups intents by target chain (first-seen chain order), FIFO within a
/// group, at most max_batch items per batch.
std::vector<TransferBatchPayload> batch_transfers(const std::vector<TransferIntent>& intents, std::size_t max_batch);

}  // namespace mercury::consensus
