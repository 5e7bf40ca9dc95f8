#pragma once

#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "mercury/crypto.hpp"
#include "mercury/merkle.hpp"

namespace mercury::chain {

using crypto::Digest;

struct ChainConfig {
    std::string chain_id = "S";
    /// Ticks from submission to finality.
    Tick finality_delay = 3;
    std::uint32_t committee_size = 16;
    /// Ticks per sync-committee epoch.
    Tick rotation_period = 64;
    Rational committee_threshold{2, 3};
    /// Committee members signing each header; 0 means every member.
    std::uint32_t committee_participation = 0;
    /// Script-only chains host HTLC locks and plain transfers, nothing else.
    bool script_only = false;
    /// How many recent block digests contracts may read.
    std::uint32_t recent_hash_window = 256;
    crypto::Scheme scheme = crypto::Scheme::simulated;
    std::uint64_t seed = 1;

    /// ceil(threshold * committee_size)
    std::uint32_t signature_threshold() const {
        return static_cast<std::uint32_t>(committee_threshold.ceil_mul(committee_size));
    }
    void validate() const;
};

struct SyncCommittee {
    std::uint64_t epoch = 0;
    std::vector<crypto::PublicKey> validator_keys;

    Digest commitment() const;
};

struct BlockHeader {
    std::uint64_t height = 0;
    Digest parent_digest;
    Digest state_digest;
    Digest tx_root;
    Tick timestamp = 0;
    Digest next_committee_commitment;
    std::vector<crypto::Signature> committee_signatures;

    /// Digest over every field except the committee signatures; this is what
    /// the committee signs and what child headers link to.
    Digest signing_root() const;
    Digest digest() const { return signing_root(); }
};

void encode(Encoder& enc, const BlockHeader& header);
BlockHeader decode_header(Decoder& dec);
void encode(Encoder& enc, const SyncCommittee& committee);
SyncCommittee decode_committee(Decoder& dec);

/// Typed event field; the variant keeps events decodable without a
/// per-contract schema.
using FieldValue = std::variant<std::uint64_t, Digest, Address, std::string>;

struct EventField {
    std::string name;
    FieldValue value;
};

struct Event {
    std::string kind;
    std::vector<EventField> fields;

    const FieldValue* find(std::string_view name) const;
    template <class T>
    const T& get(std::string_view name) const {
        const FieldValue* v = find(name);
        if (v == nullptr || !std::holds_alternative<T>(*v)) {
            throw InvalidArgument("event " + kind + " has no field " + std::string(name));
        }
        return std::get<T>(*v);
    }
    Event& with(std::string name, FieldValue value) {
        fields.push_back({std::move(name), std::move(value)});
        return *this;
    }
};

void encode(Encoder& enc, const Event& event);
Event decode_event(Decoder& dec);

struct PlainTransfer {
    Address to;
};

/// Simulator-internal contract ABI: method name plus canonical argument bytes.
struct ContractCall {
    Address contract;
    std::string method;
    Bytes args;
};

using Call = std::variant<PlainTransfer, ContractCall>;

struct ChainTx {
    Digest id;
    Address sender;
    Call call;
    Amount value = 0;
    Tick submitted_at = 0;
    std::optional<Tick> finalized_at;
    /// Submissions sharing a key are deduplicated while pending or after success.
    std::optional<Digest> dedup_key;
};

void encode(Encoder& enc, const ChainTx& tx);
ChainTx decode_tx(Decoder& dec);

/// Operation-count proxy for on-chain execution cost, per contract call.
struct CostMeter {
    std::uint64_t storage_writes = 0;
    std::uint64_t storage_deletes = 0;
    /// Multi-signature (or single signature) verification predicates evaluated.
    std::uint64_t sig_verifications = 0;
    /// Constituent signatures checked inside those predicates.
    std::uint64_t signature_checks = 0;
    std::uint64_t hash_ops = 0;

    CostMeter& operator+=(const CostMeter& other);
    bool operator==(const CostMeter&) const = default;
};

struct Receipt {
    Digest tx_id;
    std::uint64_t height = 0;
    bool success = false;
    std::string revert_reason;
    std::vector<Event> events;
    CostMeter cost;
    /// Merkle leaf committing to the transaction and its execution result.
    Digest leaf;
};

Digest receipt_leaf(const ChainTx& tx, const Receipt& receipt);
void encode(Encoder& enc, const Receipt& receipt);
Receipt decode_receipt(Decoder& dec);

struct Block {
    BlockHeader header;
    std::vector<ChainTx> txs;
    std::vector<Receipt> receipts;
};

/// Proof that a transaction (with its receipt) is included under a header's tx_root.
struct InclusionProof {
    Digest tx_id;
    std::uint64_t height = 0;
    Digest leaf;
    std::vector<merkle::PathStep> path;
};

void encode(Encoder& enc, const InclusionProof& proof);
InclusionProof decode_inclusion_proof(Decoder& dec);

struct LoggedEvent {
    std::string chain_id;
    std::uint64_t height = 0;
    Digest tx_id;
    std::string contract;
    Event event;
};

struct Revert : std::runtime_error {
    using std::runtime_error::runtime_error;
};

class Chain;

/// Execution environment handed to a contract for one call. Ledger effects
/// and events are buffered and applied only if the call does not revert.
class CallContext {
public:
    CallContext(Chain& chain, Address self, Address sender, Amount value, Tick timestamp, std::uint64_t height);

    Address self() const { return self_; }
    Address sender() const { return sender_; }
    Amount value() const { return value_; }
    Tick timestamp() const { return timestamp_; }
    std::uint64_t height() const { return height_; }
    CostMeter& meter() { return meter_; }

    /// Contract balance including buffered effects of this call.
    Amount self_balance() const;
    void pay(const Address& to, Amount amount);
    void emit(Event event) { events_.push_back(std::move(event)); }

    /// Digest of a recent finalized header, if inside the readable window.
    std::optional<Digest> recent_block_digest(std::uint64_t height) const;
    std::uint64_t finalized_tip() const;

    std::vector<Event>& events() { return events_; }
    const std::vector<std::pair<Address, Amount>>& payments() const { return payments_; }

private:
    Chain& chain_;
    Address self_;
    Address sender_;
    Amount value_;
    Tick timestamp_;
    std::uint64_t height_;
    CostMeter meter_;
    std::vector<Event> events_;
    std::vector<std::pair<Address, Amount>> payments_;
    Amount paid_out_ = 0;
};

class Contract {
public:
    virtual ~Contract() = default;

    /// Runs one call. Contracts validate before mutating their own state and
    /// signal failure by throwing Revert.
    virtual void execute(CallContext& ctx, std::string_view method, ByteView args) = 0;
    virtual Digest state_digest() const = 0;
    virtual std::string label() const = 0;
    virtual bool script() const { return false; }
};

struct SubmitResult {
    bool accepted = false;
    Digest tx_id;
    std::string reason;
};

struct CallStats {
    std::uint64_t calls = 0;
    std::uint64_t reverts = 0;
    CostMeter cost;
};

/// Ways forge_header can corrupt a candidate next header.
enum class Tamper {
    bad_parent,
    height_gap,
    timestamp_regression,
    insufficient_signatures,
    invalid_signatures,
    duplicate_signer,
    fabricated_committee,
    stale_committee,
    tampered_body,
    wrong_next_commitment,
    forged_handoff,
};

std::string_view tamper_name(Tamper t);
const std::vector<Tamper>& all_tampers();

struct ForgedHeader {
    BlockHeader header;
    /// Committee the adversary presents alongside the header, if any.
    std::optional<SyncCommittee> committee;
};

/// A simulated blockchain with deterministic finality: one block per tick,
/// transactions finalize exactly finality_delay ticks after submission, and a
/// rotating sync committee signs every header.
class Chain {
public:
    explicit Chain(ChainConfig config);

    const ChainConfig& config() const { return config_; }
    const std::string& id() const { return config_.chain_id; }

    // Ledger.
    void mint(const Address& to, Amount amount);
    Amount balance(const Address& who) const;
    Amount spendable(const Address& who) const;
    Amount total_minted() const { return minted_; }
    Amount total_balances() const;

    void deploy(const Address& at, std::shared_ptr<Contract> contract);
    Contract* contract(const Address& at) const;
    template <class T>
    T& contract_as(const Address& at) const {
        auto* c = dynamic_cast<T*>(contract(at));
        if (c == nullptr) throw InvalidArgument("no contract of requested type at " + at.hex());
        return *c;
    }

    SubmitResult submit_tx(const Address& sender, Amount value, Call call, Tick now,
                           std::optional<Digest> dedup_key = std::nullopt);

    /// Produces and finalizes the block for tick `now` (heartbeat blocks when
    /// the mempool has nothing due). Returns its header.
    const BlockHeader& advance_tick(Tick now);

    std::uint64_t tip_height() const { return blocks_.back().header.height; }
    const Block& block(std::uint64_t height) const { return blocks_.at(height); }
    const BlockHeader& header(std::uint64_t height) const { return blocks_.at(height).header; }
    std::size_t mempool_size() const { return mempool_.size(); }

    std::uint64_t epoch_of(std::uint64_t height) const { return height / config_.rotation_period; }
    SyncCommittee committee(std::uint64_t epoch) const;

    /// Committee handoff evidence for bootstrapping a light client: for every
    /// epoch e in [1, through_epoch], a finalized header of epoch e-1 whose
    /// next_committee_commitment names committee e.
    std::vector<BlockHeader> handoff_headers(std::uint64_t through_epoch) const;

    std::optional<Receipt> receipt(const Digest& tx_id) const;
    std::optional<ChainTx> transaction(const Digest& tx_id) const;
    std::optional<InclusionProof> prove_inclusion(const Digest& tx_id) const;

    std::vector<LoggedEvent> read_event_log(std::uint64_t from_height) const;
    /// One JSON object per line: chain, height, tx, contract, kind, fields.
    std::string export_event_log(std::uint64_t from_height = 0) const;

    const std::map<std::string, CallStats>& call_stats() const { return call_stats_; }

    /// Candidate honest header for the next height (an empty block), used as
    /// the base of forgeries.
    BlockHeader candidate_header(Tick now) const;
    ForgedHeader forge_header(Tamper tamper, Tick now) const;

    /// Validator key used for committee seat `seat` in `epoch`.
    crypto::KeyPair validator_key(std::uint64_t epoch, std::uint32_t seat) const;

private:
    friend class CallContext;

    struct PendingTx {
        ChainTx tx;
    };

    Receipt execute(ChainTx& tx, std::uint64_t height, Tick now);
    Digest compute_state_digest() const;
    void sign_header(BlockHeader& header) const;
    std::vector<std::uint32_t> participating_seats(std::uint64_t height) const;

    ChainConfig config_;
    std::vector<Block> blocks_;
    std::deque<PendingTx> mempool_;
    std::map<Address, Amount> balances_;
    std::map<Address, Amount> reserved_;
    std::map<Address, std::shared_ptr<Contract>> contracts_;
    std::map<Digest, std::pair<std::uint64_t, std::size_t>> tx_index_;
    std::set<Digest> pending_dedup_;
    std::set<Digest> executed_dedup_;
    std::map<std::string, CallStats> call_stats_;
    mutable std::map<std::uint64_t, std::vector<crypto::KeyPair>> committee_cache_;
    std::vector<LoggedEvent> event_log_;
    Amount minted_ = 0;
    std::uint64_t nonce_ = 0;
};

std::string format_event_json(const LoggedEvent& e);

}  // namespace mercury::chain
