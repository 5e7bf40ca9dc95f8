#pragma once

#include <deque>
#include <map>
#include <optional>
#include <set>
#include <variant>
#include <vector>

#include "mercury/amm.hpp"
#include "mercury/chain.hpp"
#include "mercury/consensus.hpp"
#include "mercury/htlc.hpp"
#include "mercury/lightclient.hpp"
#include "mercury/vault.hpp"

namespace mercury::enclave {

using crypto::Digest;
using crypto::PublicKey;

// ---- Host-side message control -----------------------------------------------

enum class MessageClass : std::uint8_t {
    client_request,
    consensus,
    chain_header,
    chain_event,
    chain_submission,
    client_reply,
};
inline constexpr std::size_t kMessageClasses = 6;

std::string_view class_name(MessageClass c);
MessageClass parse_class(std::string_view name);

struct FilterAction {
    enum class Kind : std::uint8_t { deliver, drop, delay, replay };
    Kind kind = Kind::deliver;
    /// Extra ticks for delay.
    Tick ticks = 0;
    /// Extra copies for replay, one per following tick.
    std::uint32_t count = 0;

    static FilterAction deliver() { return {}; }
    static FilterAction drop() { return {Kind::drop, 0, 0}; }
    static FilterAction delay(Tick d) { return {Kind::delay, d, 0}; }
    static FilterAction replay(std::uint32_t n) { return {Kind::replay, 0, n}; }
};

std::string_view action_name(FilterAction::Kind k);

/// What a malicious operator can do to its own enclave's I/O. The filter only
/// schedules delivery; contents are never rewritten.
class HostFilter {
public:
    void set_policy(MessageClass c, FilterAction a) { policy_[static_cast<std::size_t>(c)] = a; }
    const FilterAction& policy(MessageClass c) const { return policy_[static_cast<std::size_t>(c)]; }
    void clear_policies() { policy_ = {}; }

    void suspend() { suspended_ = true; }
    void resume() {
        if (!crashed_) suspended_ = false;
    }
    /// Permanent suspension.
    void crash() { crashed_ = suspended_ = true; }

    bool available() const { return !suspended_; }
    bool crashed() const { return crashed_; }

    /// Ticks at which a message of class c handed over at `now` is delivered;
    /// empty when dropped. Unavailable hosts drop everything.
    std::vector<Tick> route(MessageClass c, Tick now) const;

private:
    std::array<FilterAction, kMessageClasses> policy_{};
    bool suspended_ = false;
    bool crashed_ = false;
};

// ---- Client-facing messages ---------------------------------------------------

/// Client's request to move a finalized source-chain deposit.
struct ExchangeRequest {
    Digest deposit;
    Address sender;
    std::string target_chain;
    Address receiver;

    Digest digest() const;
};

struct ClientRequest {
    ExchangeRequest request;
    PublicKey client_key;
    crypto::Signature signature;
    /// The deposit transaction, its receipt and their inclusion proof on S.
    chain::ChainTx tx;
    chain::Receipt receipt;
    chain::InclusionProof proof;
};

ClientRequest make_client_request(const ExchangeRequest& req, const crypto::KeyPair& client, const chain::ChainTx& tx,
                                  const chain::Receipt& receipt, const chain::InclusionProof& proof);

/// Request for a hash time-lock pair on a script-only source chain.
struct HtlcRequest {
    Address sender;
    Address receiver;
    std::string target_chain;
    Amount amount = 0;
    std::uint64_t nonce = 0;
    PublicKey client_key;
    crypto::Signature signature;

    Digest digest() const;
};

HtlcRequest make_htlc_request(const Address& receiver, const std::string& target_chain, Amount amount,
                              std::uint64_t nonce, const crypto::KeyPair& client);

struct LockTerms {
    Digest lock_id;
    Digest hashlock;
    Tick timelock = 0;
    Address claim_address;
    Amount amount = 0;
};

/// Best-effort notice to a client; carries no protocol obligation.
struct ClientReply {
    Digest request;
    bool accepted = false;
    std::string detail;
    std::optional<LockTerms> lock;
};

// ---- Enclave-to-enclave messages -------------------------------------------

struct SigShare {
    std::uint64_t task = 0;
    Digest digest;
    crypto::Signature signature;
};

using PeerBody = std::variant<consensus::RaftMessage, ClientRequest, HtlcRequest, SigShare>;

/// Peer message signed by the sender's master key.
struct Envelope {
    std::uint32_t from = 0;
    std::uint32_t to = 0;
    PeerBody body;
    crypto::Signature signature;

    Digest signing_digest() const;
};

void encode(Encoder& enc, const Envelope& e);
Envelope decode_envelope(Decoder& dec);
void encode(Encoder& enc, const ClientRequest& r);
ClientRequest decode_client_request(Decoder& dec);
void encode(Encoder& enc, const HtlcRequest& r);
HtlcRequest decode_htlc_request(Decoder& dec);

// ---- Host-to-enclave inputs ----------------------------------------------------

struct HeaderInput {
    std::string chain;
    chain::BlockHeader header;
    std::optional<chain::SyncCommittee> committee;
};

/// Full block body; the enclave checks it against its verified header.
struct BlockInput {
    std::string chain;
    std::uint64_t height = 0;
    std::vector<chain::ChainTx> txs;
    std::vector<chain::Receipt> receipts;
};

using Input = std::variant<Envelope, ClientRequest, HtlcRequest, HeaderInput, BlockInput>;

MessageClass input_class(const Input& in);

// ---- Enclave outputs --------------------------------------------------------

struct Submission {
    std::string chain;
    chain::ContractCall call;
    Amount value = 0;
    Digest dedup_key;
};

using OutputBody = std::variant<Envelope, Submission, ClientReply>;

struct Output {
    OutputBody body;
    /// Master-key signature over the encoded body.
    crypto::Signature endorsement;

    MessageClass message_class() const;
    Bytes encoded() const;
};

Bytes encode_body(const OutputBody& body);

// ---- Program configuration ---------------------------------------------------

enum class Mode : std::uint8_t { challenge, htlc };

struct Timing {
    Tick delta_s = 3;
    Tick delta_t = 3;
    Tick delta_e = 6;
    Tick tau_c = 21;
    Tick tau_w = 120;

    /// Ticks between a transfer landing on T and the matching confirm landing on S.
    Tick margin() const { return 2 * delta_s + delta_e + delta_t; }
};

struct Batching {
    /// Intents per consensus entry.
    std::size_t max_batch = 2000;
    /// Transfers per on-chain batch.
    std::size_t onchain_batch = 100;
    std::size_t checkpoint_batch_size = 20;
    /// Partial checkpoints after this many ticks without one; 0 disables them.
    Tick checkpoint_period = 60;
};

struct ProgramConfig {
    Mode mode = Mode::challenge;
    std::string source_chain = "S";
    std::string target_chain = "T";
    Address vault_s;
    Address vault_t;
    Address htlc_script;
    Address htlc_claim_address;
    Timing timing;
    Batching batching;
    /// Reserves the replicated pricing pool starts from.
    Amount pool_x = 0;
    Amount pool_y = 0;
    Amount fee = 0;
    Tick htlc_timelock = 141;
    consensus::RaftConfig raft;
    lightclient::LightClientConfig lc_source;
    lightclient::LightClientConfig lc_target;
    Digest genesis_source;
    Digest genesis_target;
    PublicKey manufacturer_root;
    /// Ticks between re-sends of shares, forwards and submissions.
    Tick resend_period = 4;
};

/// Digest identifying the installed exchange program.
Digest program_digest();

struct PeerInfo {
    std::uint32_t index = 0;
    crypto::AttestationQuote master_quote;
    std::map<std::string, crypto::AttestationQuote> chain_quotes;
};

struct Registration {
    crypto::AttestationQuote quote;
    vault::BlockProof proof;
    PublicKey key;
};

struct EnclaveMetrics {
    std::uint64_t requests_accepted = 0;
    std::uint64_t requests_rejected = 0;
    std::uint64_t requests_parked = 0;
    std::uint64_t headers_rejected = 0;
    std::uint64_t envelopes_rejected = 0;
    std::uint64_t blocks_rejected = 0;
    std::uint64_t intents_created = 0;
    std::uint64_t shares_signed = 0;
    std::uint64_t submissions = 0;
};

/// Replicated decision an enclave observed at commit.
struct CommittedIntent {
    std::uint64_t log_index = 0;
    consensus::BatchIntent intent;
};

/// One installed copy of the exchange program. A sequential reactor: the host
/// hands it one input at a time and collects the endorsed outputs.
class Enclave {
public:
    Enclave(ProgramConfig config, const crypto::Manufacturer& manufacturer, const Digest& eid,
            const Digest& group_secret);

    const Digest& eid() const { return eid_; }
    std::uint32_t index() const { return config_.raft.self; }
    const PublicKey& master_key() const { return master_.public_key; }
    const PublicKey& chain_key(const std::string& chain) const;
    PeerInfo peer_info() const;

    /// Initializes the light client for one chain; false if the bundle is rejected.
    bool bootstrap(const std::string& chain, const lightclient::BootstrapBundle& bundle);
    /// Admits attested peers; returns how many were accepted.
    std::size_t join(const std::vector<PeerInfo>& peers);
    /// Quote plus a signed proof of the latest verified header on `chain`.
    Registration registration(const std::string& chain) const;

    std::vector<Output> resume(const Input& input, Tick now);
    std::vector<Output> tick(Tick now);
    /// Called by the host after a suspension ends.
    void wake(Tick now) { raft_.reset_timer(now); }

    // Untrusted status the host reads to decide what to offer next.
    std::uint64_t lc_tip(const std::string& chain) const;
    bool needs_committee(const std::string& chain) const;
    /// Next block height whose body the enclave wants.
    std::uint64_t body_cursor(const std::string& chain) const;

    // Inspection for tests and the harness.
    const consensus::RaftNode& raft() const { return raft_; }
    const amm::Pool& pool() const { return pool_; }
    const std::vector<CommittedIntent>& committed_intents() const { return intents_log_; }
    const EnclaveMetrics& metrics() const { return metrics_; }
    const lightclient::LightClient* light_client(const std::string& chain) const;
    std::size_t pending_requests() const { return pending_.size(); }
    /// Canonical encodings of every secret held; used only by confinement audits.
    std::vector<Bytes> audit_secret_encodings() const;

private:
    struct Pending {
        Digest deposit;
        Address sender;
        Address receiver;
        Amount value = 0;
        Tick deadline = 0;
        Tick received_at = 0;
        Tick forwarded_at = 0;
        std::optional<ClientRequest> request;
        std::optional<HtlcRequest> htlc;
    };
    struct Parked {
        ClientRequest request;
        Tick since = 0;
    };
    struct Tracked {
        std::optional<Tick> transfer_tick;
        std::optional<Tick> challenge_start;
        bool confirmed = false;
        bool retired = false;
        bool in_checkpoint = false;
        bool confirm_committed = false;
        bool respond_committed = false;
    };
    enum class TaskKind : std::uint8_t { transfer, confirm, respond, checkpoint };
    struct Task {
        TaskKind kind = TaskKind::transfer;
        std::string chain;
        Digest digest;
        /// Submission key; distinct per task so a re-committed action can land again.
        Digest dedup;
        consensus::ShareSet shares;
        vault::TransferBatchBody body;
        std::vector<Digest> ids;
        crypto::Signature own;
        Tick last_share = 0;
        std::optional<Tick> last_submit;
    };
    struct HtlcState {
        htlc::HtlcPair pair;
        Digest preimage;
        bool locked = false;
        bool transferred = false;
        bool spent = false;
        std::optional<Tick> last_claim;
    };

    using Out = std::vector<Output>;

    void emit(Out& out, OutputBody body) const;
    void send_peer(Out& out, std::uint32_t to, PeerBody body) const;
    void broadcast(Out& out, const PeerBody& body) const;
    void reply(Out& out, const Digest& request, bool accepted, std::string detail,
               std::optional<LockTerms> lock = std::nullopt) const;

    void on_envelope(Out& out, const Envelope& env, Tick now);
    void on_client_request(Out& out, const ClientRequest& req, Tick now, bool from_client);
    void on_htlc_request(Out& out, const HtlcRequest& req, Tick now, bool from_client);
    void on_header(const HeaderInput& in);
    void on_block(Out& out, const BlockInput& in, Tick now);
    void on_source_event(Out& out, const chain::ChainTx& tx, const chain::Event& ev, Tick block_time);
    void on_target_event(Out& out, const chain::Event& ev, Tick block_time);
    void on_share(const SigShare& share, std::uint32_t from);

    enum class Verdict { accept, park, reject };
    Verdict validate(const ClientRequest& req, std::string& why, Tick& deposit_time, Amount& value) const;

    void drain_raft(Out& out, Tick now);
    void apply(Out& out, const consensus::LogEntry& entry, Tick now);
    void apply_batch(Out& out, std::uint64_t index, const consensus::TransferBatchPayload& p, Tick now);
    void apply_htlc(Out& out, const consensus::HtlcPairPayload& p);
    void open_task(Out& out, std::uint64_t id, Task task, Tick now);
    void progress_tasks(Out& out, Tick now);
    void lead(Tick now);
    void propose_transfers(Tick now);
    void propose_actions(Tick now);
    void propose_htlc_pairs(Tick now);
    void progress_claims(Out& out, Tick now);
    void forward_pending(Out& out, Tick now);
    void retry_parked(Out& out, Tick now);
    void reconsider(const Digest& id);
    std::set<Digest> uncommitted_ids(std::size_t payload_kind) const;
    bool uncommitted_kind(std::size_t payload_kind) const;

    const crypto::KeyPair& key_for(const std::string& chain) const;
    std::vector<PublicKey> authorized(const std::string& chain) const;
    lightclient::LightClient* lc(const std::string& chain);

    ProgramConfig config_;
    Digest eid_;
    crypto::KeyPair master_;
    std::map<std::string, crypto::KeyPair> chain_keys_;
    std::map<std::string, crypto::AttestationQuote> quotes_;
    crypto::AttestationQuote master_quote_;
    Digest group_secret_;
    std::map<std::uint32_t, PublicKey> peer_master_;
    std::map<std::string, std::map<std::uint32_t, PublicKey>> peer_chain_keys_;

    std::map<std::string, lightclient::LightClient> lcs_;
    std::map<std::string, std::uint64_t> body_cursor_;

    consensus::RaftNode raft_;
    amm::Pool pool_;
    std::uint64_t applied_ = 0;

    std::map<Digest, Pending> pending_;
    std::deque<Digest> pending_order_;
    std::vector<Parked> parked_;
    std::set<Digest> seen_requests_;
    std::set<Digest> intent_ids_;
    std::vector<CommittedIntent> intents_log_;

    std::map<Digest, Tracked> tracked_;
    std::set<Digest> checkpoint_ready_;
    std::set<Digest> want_confirm_;
    std::set<Digest> want_respond_;
    Tick last_checkpoint_ = 0;

    std::map<std::uint64_t, Task> tasks_;
    std::set<Digest> landed_;

    std::map<Digest, HtlcState> htlc_;
    std::map<Digest, HtlcRequest> htlc_pending_;
    std::set<Digest> htlc_requests_committed_;
    std::map<std::uint64_t, std::vector<SigShare>> early_shares_;

    EnclaveMetrics metrics_;
};

}  // namespace mercury::enclave
