#include <algorithm>
#include <functional>
#include <memory>

#include "mercury/harness.hpp"

namespace mercury::harness {

namespace {

using enclave::Enclave;
using enclave::HostFilter;
using enclave::Input;
using enclave::MessageClass;
using enclave::Output;

constexpr std::uint64_t kLagBound = 32;
/// Headers or bodies offered per chain per tick.
constexpr std::uint64_t kMaxOffer = 64;
/// Ticks without light-client progress before a host re-offers.
constexpr Tick kReoffer = 8;

Digest seeded(std::string_view label, std::uint64_t seed, std::uint64_t index = 0) {
    Encoder enc;
    enc.str("mercury/harness");
    enc.str(label);
    enc.u64(seed);
    enc.u64(index);
    return crypto::hash(enc);
}

std::uint64_t seed_u64(const Digest& d) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v = (v << 8) | d.bytes[static_cast<std::size_t>(i)];
    return v;
}

struct Offer {
    std::uint64_t sent = 0;
    std::uint64_t last_tip = 0;
    Tick progress_at = 0;
};

struct Host {
    std::unique_ptr<Enclave> enclave;
    HostFilter filter;
    Address addr;
    std::map<std::pair<Tick, std::uint64_t>, Input> inbox;
    bool was_available = true;
    std::map<std::string, Offer> headers;
    std::map<std::string, Offer> bodies;
};

struct ClientDeposit {
    Digest id;
    Amount value = 0;
    Tick deposited_at = 0;
    Digest tx;
    Tick last_request = 0;
    bool requested = false;
    std::optional<Digest> challenge_tx;
    std::optional<Digest> resolve_tx;
};

struct InFlightDeposit {
    std::size_t slot = 0;
    Amount value = 0;
    Digest tx;
};

struct HtlcAttempt {
    enclave::HtlcRequest request;
    Tick sent_at = 0;
    Tick last_send = 0;
    std::optional<enclave::LockTerms> terms;
    std::optional<Digest> lock_tx;
    bool locked = false;
    std::optional<Digest> refund_tx;
    bool done = false;
};

struct Client {
    std::string name;
    crypto::KeyPair key;
    Address addr;
    bool automatic = true;
    std::vector<ClientAction> script;
    std::size_t next_action = 0;
    Tick offline_until = 0;
    std::vector<std::optional<Digest>> slots;
    std::vector<InFlightDeposit> in_flight;
    std::map<Digest, ClientDeposit> deposits;
    std::vector<std::pair<Tick, enclave::ClientReply>> mailbox;
    std::vector<HtlcAttempt> htlc;
    std::uint64_t nonce = 0;
};

struct DepositTruth {
    DepositOutcome out;
    bool confirmed = false;
    bool refunded = false;
    bool responded = false;
    bool checkpointed = false;
    std::uint64_t transfers = 0;
};

struct LockTruth {
    LockOutcome out;
    Address sender;
    bool claimed = false;
    bool refunded = false;
    std::uint64_t transfers = 0;
};

struct QueuedSubmission {
    std::uint32_t host = 0;
    enclave::Submission sub;
};

class Simulation {
public:
    Simulation(const Scenario& sc, const RunOptions& opt) : sc_(sc), opt_(opt) {}

    RunReport run();

private:
    void setup();
    void step();
    void scan_events();
    void on_source_event(const chain::LoggedEvent& e);
    void on_target_event(const chain::LoggedEvent& e);
    void apply_faults();
    void apply_fault(const FaultSpec& f);
    void step_client(Client& c);
    void run_action(Client& c, const ClientAction& a);
    void client_challenge_mode(Client& c);
    void client_htlc_mode(Client& c);
    void send_request(Client& c, ClientDeposit& d);
    void send_htlc(HtlcAttempt& h);
    void step_host(std::uint32_t i);
    void offer_headers(Host& h, const chain::Chain& ch);
    void offer_bodies(Host& h, const chain::Chain& ch);
    void deliver(std::uint32_t i);
    void route(std::uint32_t i, std::vector<Output> outputs);
    void flush_submissions();
    void check_state();
    void check_logs();
    void check_intents();
    void check_transfer_amounts(bool final);
    bool quiescent() const;
    void violation(const std::string& property, const std::string& detail);
    void finish();

    std::optional<Digest> submit(const Address& from, Amount value, chain::ContractCall call) {
        auto res = s_->submit_tx(from, value, std::move(call), now_);
        if (!res.accepted) return std::nullopt;
        return res.tx_id;
    }
    std::string client_of(const Address& a) const {
        auto it = client_by_addr_.find(a);
        return it == client_by_addr_.end() ? a.hex().substr(0, 12) : clients_[it->second].name;
    }
    std::uint32_t crashed() const {
        std::uint32_t c = 0;
        for (const auto& h : hosts_) c += h.filter.crashed() ? 1 : 0;
        return c;
    }

    const Scenario& sc_;
    RunOptions opt_;
    Tick now_ = 0;
    Tick ready_ = 0;
    std::unique_ptr<chain::Chain> s_;
    std::unique_ptr<chain::Chain> t_;
    std::shared_ptr<vault::Vault> vault_s_;
    std::shared_ptr<vault::Vault> vault_t_;
    std::shared_ptr<htlc::HtlcScript> script_;
    Address vault_s_addr_ = Address::from_label("vault:S");
    Address vault_t_addr_ = Address::from_label("vault:T");
    Address script_addr_ = Address::from_label("htlc:S");
    Address claim_addr_ = Address::from_label("mercury:S");
    std::unique_ptr<crypto::Manufacturer> manufacturer_;

    std::vector<Host> hosts_;
    std::vector<Client> clients_;
    std::map<Address, std::size_t> client_by_addr_;
    std::vector<FaultSpec> faults_;
    std::size_t next_fault_ = 0;
    std::map<std::pair<Tick, std::uint64_t>, QueuedSubmission> submissions_;
    std::uint64_t seq_ = 0;

    std::vector<DepositTruth> deposits_;
    std::map<Digest, std::size_t> deposit_index_;
    std::vector<LockTruth> locks_;
    std::map<Digest, std::size_t> lock_index_;
    std::vector<std::pair<Digest, Amount>> transfers_;
    std::size_t transfers_checked_ = 0;

    std::map<std::uint64_t, Digest> log_digests_;
    std::vector<std::uint64_t> log_checked_;
    std::vector<enclave::CommittedIntent> intents_;
    std::map<Digest, Amount> oracle_amounts_;
    amm::u128 oracle_x_ = 0;
    amm::u128 oracle_y_ = 0;

    RunReport report_;
};

void Simulation::violation(const std::string& property, const std::string& detail) {
    report_.violations.push_back(property + ": " + detail + " (tick " + std::to_string(now_) + ")");
    report_.verdicts[property] = false;
}

// ---- Setup -------------------------------------------------------------------

void Simulation::setup() {
    const bool htlc_mode = sc_.mode == enclave::Mode::htlc;
    auto chain_cfg = [&](const std::string& id, const ChainSpec& spec, Tick delta) {
        chain::ChainConfig c;
        c.chain_id = id;
        c.finality_delay = delta;
        c.committee_size = spec.committee_size;
        c.rotation_period = spec.rotation_period;
        c.committee_threshold = spec.committee_threshold;
        c.scheme = spec.scheme;
        c.seed = seed_u64(seeded("chain:" + id, sc_.seed));
        c.script_only = htlc_mode && id == "S";
        return c;
    };
    s_ = std::make_unique<chain::Chain>(chain_cfg("S", sc_.source, sc_.timing.delta_s));
    t_ = std::make_unique<chain::Chain>(chain_cfg("T", sc_.target, sc_.timing.delta_t));
    manufacturer_ = std::make_unique<crypto::Manufacturer>(crypto::Scheme::simulated, seeded("manufacturer", sc_.seed));

    vault::VaultConfig vs;
    vs.chain_id = "S";
    vs.program_digest = enclave::program_digest();
    vs.manufacturer_root = manufacturer_->root_key();
    vs.registration_lag = sc_.registration_lag;
    vs.challenge_window = sc_.timing.tau_w;
    vault::VaultConfig vt = vs;
    vt.chain_id = "T";
    vt.fee_per_tx = sc_.pool.fee;
    vt.lp_fraction = sc_.pool.lp_fraction;
    const Address lp = Address::from_label("lp:genesis");
    vt.lp_shares = {{lp, sc_.pool.y}};
    if (htlc_mode) {
        script_ = std::make_shared<htlc::HtlcScript>("S");
        s_->deploy(script_addr_, script_);
    } else {
        vault_s_ = std::make_shared<vault::Vault>(vs);
        s_->deploy(vault_s_addr_, vault_s_);
    }
    vault_t_ = std::make_shared<vault::Vault>(vt);
    t_->deploy(vault_t_addr_, vault_t_);

    t_->mint(lp, sc_.pool.y);
    t_->submit_tx(lp, sc_.pool.y, vault::calls::fund(vault_t_addr_), now_);

    for (const auto& spec : sc_.clients) {
        for (std::uint32_t k = 0; k < spec.count; ++k) {
            Client c;
            c.name = spec.count == 1 ? spec.name : spec.name + std::to_string(k);
            c.key = crypto::KeyPair::from_seed(crypto::Scheme::simulated, seeded("client:" + c.name, sc_.seed));
            c.addr = crypto::address_of(c.key.public_key);
            c.automatic = spec.automatic;
            c.script = spec.script;
            if (client_by_addr_.contains(c.addr)) throw InvalidArgument("duplicate client name " + c.name);
            client_by_addr_[c.addr] = clients_.size();
            s_->mint(c.addr, spec.balance);
            clients_.push_back(std::move(c));
        }
    }

    auto advance = [&] {
        ++now_;
        s_->advance_tick(now_);
        t_->advance_tick(now_);
    };
    while (now_ <= sc_.timing.delta_t) advance();

    enclave::ProgramConfig base;
    base.mode = sc_.mode;
    base.vault_s = vault_s_addr_;
    base.vault_t = vault_t_addr_;
    base.htlc_script = script_addr_;
    base.htlc_claim_address = claim_addr_;
    base.timing = sc_.timing;
    base.batching = sc_.batching;
    base.pool_x = sc_.pool.x;
    base.pool_y = sc_.pool.y;
    base.fee = sc_.pool.fee;
    base.htlc_timelock = sc_.effective_timelock();
    base.raft.cluster_size = sc_.operators;
    base.raft.election_base = sc_.election_base;
    base.raft.election_step = sc_.election_step;
    base.raft.heartbeat = sc_.heartbeat;
    base.lc_source = lightclient::LightClientConfig::from_chain(s_->config(), kLagBound);
    base.lc_target = lightclient::LightClientConfig::from_chain(t_->config(), kLagBound);
    base.genesis_source = s_->committee(0).commitment();
    base.genesis_target = t_->committee(0).commitment();
    base.manufacturer_root = manufacturer_->root_key();

    const Digest group_secret = seeded("group-secret", sc_.seed);
    std::vector<enclave::PeerInfo> peers;
    for (std::uint32_t i = 0; i < sc_.operators; ++i) {
        auto cfg = base;
        cfg.raft.self = i;
        Host h;
        h.enclave = std::make_unique<Enclave>(cfg, *manufacturer_, seeded("eid", sc_.seed, i), group_secret);
        h.addr = Address::from_label("operator:" + std::to_string(i));
        for (const auto* ch : {s_.get(), t_.get()}) {
            if (!h.enclave->bootstrap(ch->id(), lightclient::make_bundle(*ch, kLagBound))) {
                throw std::runtime_error("enclave " + std::to_string(i) + " rejected the bootstrap bundle");
            }
        }
        peers.push_back(h.enclave->peer_info());
        hosts_.push_back(std::move(h));
    }
    std::vector<std::pair<chain::Chain*, Digest>> registrations;
    for (auto& h : hosts_) {
        if (h.enclave->join(peers) != peers.size()) throw std::runtime_error("enclave rejected a peer quote");
        std::vector<std::pair<chain::Chain*, Address>> targets{{t_.get(), vault_t_addr_}};
        if (!htlc_mode) targets.insert(targets.begin(), {s_.get(), vault_s_addr_});
        for (auto [ch, addr] : targets) {
            auto reg = h.enclave->registration(ch->id());
            auto res = ch->submit_tx(h.addr, 0, vault::calls::register_operator(addr, reg.quote, reg.proof, reg.key),
                                     now_);
            registrations.emplace_back(ch, res.tx_id);
        }
    }
    const Tick settle = now_ + std::max(sc_.timing.delta_s, sc_.timing.delta_t);
    while (now_ < settle) advance();
    for (const auto& [ch, id] : registrations) {
        auto r = ch->receipt(id);
        if (!r || !r->success) {
            throw std::runtime_error("operator registration failed on " + ch->id() + ": " +
                                     (r ? r->revert_reason : std::string("not finalized")));
        }
    }
    ready_ = now_;

    faults_ = sc_.faults;
    if (sc_.random_faults.enabled) {
        auto extra = fault_gen_v1(sc_.seed, sc_.operators, sc_.random_faults, sc_.timing);
        faults_.insert(faults_.end(), extra.begin(), extra.end());
    }
    std::stable_sort(faults_.begin(), faults_.end(), [](const FaultSpec& a, const FaultSpec& b) { return a.at < b.at; });

    log_checked_.assign(hosts_.size(), 0);
    oracle_x_ = sc_.pool.x;
    oracle_y_ = sc_.pool.y;
    for (const char* p : {"atomicity", "pricing", "backing", "log_safety", "conservation", "replay_guard",
                          "key_confinement", "endorsement", "htlc_exclusivity"}) {
        report_.verdicts[p] = true;
    }
}

// ---- Tick loop ---------------------------------------------------------------

void Simulation::step() {
    ++now_;
    s_->advance_tick(now_);
    t_->advance_tick(now_);
    scan_events();
    apply_faults();
    for (auto& c : clients_) step_client(c);
    for (std::uint32_t i = 0; i < hosts_.size(); ++i) step_host(i);
    flush_submissions();
    if (opt_.check_every_tick) {
        check_state();
        check_logs();
        check_intents();
        check_transfer_amounts(false);
    }
}

void Simulation::scan_events() {
    for (const auto& e : s_->read_event_log(now_)) on_source_event(e);
    for (const auto& e : t_->read_event_log(now_)) on_target_event(e);
}

void Simulation::on_source_event(const chain::LoggedEvent& le) {
    const auto& ev = le.event;
    const Tick at = le.height;
    if (ev.kind == "Deposit") {
        DepositTruth d;
        d.out.id = ev.get<Digest>("id").hex();
        d.out.client = client_of(ev.get<Address>("sender"));
        d.out.value = ev.get<std::uint64_t>("value");
        d.out.deposited_at = ev.get<std::uint64_t>("timestamp");
        deposit_index_[ev.get<Digest>("id")] = deposits_.size();
        deposits_.push_back(std::move(d));
        return;
    }
    if (ev.kind == "Locked") {
        LockTruth l;
        l.out.id = ev.get<Digest>("id").hex();
        l.sender = ev.get<Address>("sender");
        l.out.client = client_of(l.sender);
        l.out.amount = ev.get<std::uint64_t>("amount");
        l.out.timelock = ev.get<std::uint64_t>("timelock");
        lock_index_[ev.get<Digest>("id")] = locks_.size();
        locks_.push_back(std::move(l));
        return;
    }
    if (ev.kind == "Checkpoint") {
        auto removed = ev.get<std::uint64_t>("removed");
        report_.checkpoints++;
        report_.checkpoint_deletes += removed;
        report_.checkpoint_sizes.push_back(removed);
        return;
    }
    const auto* idv = ev.find("id");
    if (idv == nullptr || !std::holds_alternative<Digest>(*idv)) return;
    const Digest id = std::get<Digest>(*idv);

    if (auto it = lock_index_.find(id); it != lock_index_.end()) {
        LockTruth& l = locks_[it->second];
        if (ev.kind == "Claimed") {
            if (l.refunded || l.claimed) violation("htlc_exclusivity", "lock " + l.out.id + " spent twice");
            if (l.transfers == 0) violation("htlc_exclusivity", "lock " + l.out.id + " claimed before its transfer");
            l.claimed = true;
            l.out.spent_at = at;
        } else if (ev.kind == "HtlcRefunded") {
            if (l.refunded || l.claimed) violation("htlc_exclusivity", "lock " + l.out.id + " spent twice");
            l.refunded = true;
            l.out.spent_at = at;
        }
        return;
    }
    auto it = deposit_index_.find(id);
    if (it == deposit_index_.end()) return;
    DepositTruth& d = deposits_[it->second];
    auto settle = [&](const char* by) {
        if (!d.out.settled_at) d.out.settled_at = at;
        d.out.retired_by = by;
    };
    if (ev.kind == "Challenge") {
        d.out.challenge_started_at = ev.get<std::uint64_t>("started_at");
    } else if (ev.kind == "Confirmed") {
        if (d.transfers == 0) violation("atomicity", "deposit " + d.out.id + " confirmed without a transfer");
        d.confirmed = true;
        settle("confirm");
    } else if (ev.kind == "Refund") {
        if (d.transfers > 0) violation("atomicity", "deposit " + d.out.id + " refunded after its transfer");
        d.refunded = true;
        settle("refund");
    } else if (ev.kind == "ChallengeResponded") {
        if (d.transfers == 0) violation("atomicity", "challenge on " + d.out.id + " answered without a transfer");
        d.responded = true;
        settle("response");
    } else if (ev.kind == "Checkpointed") {
        if (d.transfers == 0) violation("atomicity", "deposit " + d.out.id + " checkpointed without a transfer");
        d.checkpointed = true;
        settle("checkpoint");
    }
}

void Simulation::on_target_event(const chain::LoggedEvent& le) {
    const auto& ev = le.event;
    if (ev.kind == "BatchExecuted") {
        report_.transfer_batches++;
        return;
    }
    if (ev.kind != "Transfer") return;
    report_.transfers_executed++;
    const Digest dep = ev.get<Digest>("deposit");
    const Amount amount = ev.get<std::uint64_t>("amount");
    transfers_.emplace_back(dep, amount);
    if (auto it = lock_index_.find(dep); it != lock_index_.end()) {
        LockTruth& l = locks_[it->second];
        if (++l.transfers > 1) violation("replay_guard", "lock " + l.out.id + " paid twice");
        if (l.refunded) violation("backing", "lock " + l.out.id + " paid after its refund");
        l.out.transfer_amount = amount;
        l.out.transfer_at = le.height;
        return;
    }
    auto it = deposit_index_.find(dep);
    if (it == deposit_index_.end()) {
        violation("backing", "transfer for unknown source " + dep.hex());
        return;
    }
    DepositTruth& d = deposits_[it->second];
    if (++d.transfers > 1) violation("replay_guard", "deposit " + d.out.id + " paid twice");
    if (d.refunded) violation("backing", "deposit " + d.out.id + " paid after its refund");
    d.out.transfer_amount = amount;
    d.out.transfer_at = le.height;
}

// ---- Faults ------------------------------------------------------------------

void Simulation::apply_faults() {
    while (next_fault_ < faults_.size() && ready_ + faults_[next_fault_].at <= now_) {
        apply_fault(faults_[next_fault_]);
        next_fault_++;
    }
}

void Simulation::apply_fault(const FaultSpec& f) {
    std::vector<std::uint32_t> targets;
    switch (f.target) {
        case FaultSpec::Target::one: targets.push_back(f.index); break;
        case FaultSpec::Target::all:
            for (std::uint32_t i = 0; i < hosts_.size(); ++i) targets.push_back(i);
            break;
        case FaultSpec::Target::leader: {
            std::optional<std::uint32_t> pick;
            std::uint64_t best = 0;
            for (std::uint32_t i = 0; i < hosts_.size(); ++i) {
                const auto& raft = hosts_[i].enclave->raft();
                if (hosts_[i].filter.available() && raft.role() == consensus::Role::leader && raft.term() >= best) {
                    pick = i;
                    best = raft.term();
                }
            }
            for (std::uint32_t i = 0; !pick && i < hosts_.size(); ++i) {
                if (hosts_[i].filter.available()) pick = i;
            }
            if (pick) targets.push_back(*pick);
            break;
        }
    }
    const std::uint32_t f_max = (sc_.operators - 1) / 2;
    for (auto i : targets) {
        auto& filter = hosts_[i].filter;
        switch (f.action) {
            case FaultSpec::Action::crash:
                // Crashes beyond f would void liveness; extra ones are ignored.
                if (!filter.crashed() && crashed() < f_max) filter.crash();
                break;
            case FaultSpec::Action::suspend: filter.suspend(); break;
            case FaultSpec::Action::resume: filter.resume(); break;
            case FaultSpec::Action::policy: filter.set_policy(f.message_class, f.policy); break;
            case FaultSpec::Action::clear: filter.clear_policies(); break;
        }
    }
}

// ---- Clients -----------------------------------------------------------------

void Simulation::step_client(Client& c) {
    // Deposits submitted earlier reach finality regardless of the client.
    for (auto it = c.in_flight.begin(); it != c.in_flight.end();) {
        auto r = s_->receipt(it->tx);
        if (!r) {
            ++it;
            continue;
        }
        if (r->success) {
            ClientDeposit d;
            d.id = r->events.at(0).get<Digest>("id");
            d.value = it->value;
            d.deposited_at = s_->header(r->height).timestamp;
            d.tx = it->tx;
            c.slots[it->slot] = d.id;
            c.deposits.emplace(d.id, d);
            it = c.in_flight.erase(it);
        } else if (auto tx = submit(c.addr, it->value, vault::calls::deposit(vault_s_addr_))) {
            it->tx = *tx;
            ++it;
        } else {
            ++it;
        }
    }
    if (now_ < c.offline_until) return;
    while (c.next_action < c.script.size()) {
        const auto& a = c.script[c.next_action];
        if (ready_ + a.at > now_) break;
        if ((a.kind == ClientAction::Kind::challenge || a.kind == ClientAction::Kind::resolve) &&
            (a.deposit >= c.slots.size() || !c.slots[a.deposit])) {
            break;
        }
        c.next_action++;
        run_action(c, a);
        if (now_ < c.offline_until) return;
    }
    if (sc_.mode == enclave::Mode::challenge) {
        client_challenge_mode(c);
    } else {
        client_htlc_mode(c);
    }
}

void Simulation::run_action(Client& c, const ClientAction& a) {
    switch (a.kind) {
        case ClientAction::Kind::deposit: {
            c.slots.emplace_back();
            auto tx = submit(c.addr, a.value, vault::calls::deposit(vault_s_addr_));
            if (tx) c.in_flight.push_back(InFlightDeposit{c.slots.size() - 1, a.value, *tx});
            break;
        }
        case ClientAction::Kind::offline: c.offline_until = now_ + a.ticks; break;
        case ClientAction::Kind::challenge: {
            // Scripted challenges are sent even against retired ids.
            auto& d = c.deposits.at(*c.slots[a.deposit]);
            d.challenge_tx = submit(c.addr, vault_s_->pledge_requirement(d.value),
                                    vault::calls::start_challenge(vault_s_addr_, d.id, d.value));
            break;
        }
        case ClientAction::Kind::resolve: {
            auto& d = c.deposits.at(*c.slots[a.deposit]);
            d.resolve_tx = submit(c.addr, 0, vault::calls::resolve_challenge(vault_s_addr_, d.id));
            break;
        }
        case ClientAction::Kind::htlc: {
            HtlcAttempt h;
            h.request = enclave::make_htlc_request(c.addr, "T", a.value, c.nonce++, c.key);
            h.sent_at = now_;
            c.htlc.push_back(std::move(h));
            send_htlc(c.htlc.back());
            break;
        }
    }
}

void Simulation::send_request(Client& c, ClientDeposit& d) {
    auto tx = s_->transaction(d.tx);
    auto receipt = s_->receipt(d.tx);
    auto proof = s_->prove_inclusion(d.tx);
    if (!tx || !receipt || !proof) return;
    enclave::ExchangeRequest req{d.id, c.addr, "T", c.addr};
    auto signed_req = enclave::make_client_request(req, c.key, *tx, *receipt, *proof);
    for (auto& h : hosts_) {
        for (Tick at : h.filter.route(MessageClass::client_request, now_)) h.inbox.emplace(std::pair{at, seq_++}, signed_req);
    }
    d.requested = true;
    d.last_request = now_;
}

void Simulation::send_htlc(HtlcAttempt& a) {
    for (auto& h : hosts_) {
        for (Tick at : h.filter.route(MessageClass::client_request, now_)) h.inbox.emplace(std::pair{at, seq_++}, a.request);
    }
    a.last_send = now_;
}

void Simulation::client_challenge_mode(Client& c) {
    const auto& t = sc_.timing;
    const Tick resend = 2 * t.delta_s + t.delta_e;
    auto failed = [&](std::optional<Digest>& tx) {
        if (!tx) return;
        auto r = s_->receipt(*tx);
        if (r && !r->success) tx.reset();
    };
    for (auto& [id, d] : c.deposits) {
        const auto* rec = vault_s_->find_deposit(id);
        if (rec == nullptr) continue;
        const bool paid = vault_t_->paid(id);
        const Tick deadline = d.deposited_at + t.tau_w - t.margin();
        if (!paid && !rec->under_challenge && now_ <= deadline && (!d.requested || now_ - d.last_request >= resend)) {
            send_request(c, d);
        }
        if (!c.automatic) continue;
        failed(d.challenge_tx);
        failed(d.resolve_tx);
        if (!paid && !rec->confirmed && !rec->under_challenge && !d.challenge_tx && now_ >= d.deposited_at + t.tau_c) {
            d.challenge_tx = submit(c.addr, vault_s_->pledge_requirement(d.value),
                                    vault::calls::start_challenge(vault_s_addr_, id, d.value));
        }
        // Resolve only once no transfer can still land: the deadline has
        // passed and T shows no payment.
        if (rec->under_challenge && !paid && !d.resolve_tx && now_ > deadline &&
            now_ + t.delta_s > *rec->challenge_started_at + t.tau_w) {
            d.resolve_tx = submit(c.addr, 0, vault::calls::resolve_challenge(vault_s_addr_, id));
        }
    }
}

void Simulation::client_htlc_mode(Client& c) {
    const auto& t = sc_.timing;
    const Tick resend = 2 * t.delta_s + t.delta_e;
    for (auto& [at, reply] : c.mailbox) {
        if (at > now_ || !reply.accepted || !reply.lock) continue;
        for (auto& a : c.htlc) {
            if (a.terms || a.request.digest() != reply.request) continue;
            const auto& terms = *reply.lock;
            if (terms.amount == a.request.amount &&
                htlc::lock_id(c.addr, terms.claim_address, terms.hashlock, terms.timelock, terms.amount) == terms.lock_id) {
                a.terms = terms;
            }
        }
    }
    std::erase_if(c.mailbox, [&](const auto& m) { return m.first <= now_; });
    for (auto& a : c.htlc) {
        if (a.done) continue;
        if (!a.terms) {
            if (now_ - a.sent_at > t.tau_w) {
                a.done = true;
            } else if (now_ - a.last_send >= resend) {
                send_htlc(a);
            }
            continue;
        }
        const auto& terms = *a.terms;
        if (!a.lock_tx) {
            if (now_ + t.delta_s >= terms.timelock) {
                a.done = true;
                continue;
            }
            a.lock_tx = submit(c.addr, terms.amount,
                               htlc::calls::lock(script_addr_, terms.hashlock, terms.timelock, terms.claim_address));
            continue;
        }
        if (!a.locked) {
            auto r = s_->receipt(*a.lock_tx);
            if (!r) continue;
            if (!r->success) {
                a.done = true;
                continue;
            }
            a.locked = true;
        }
        const auto* lock = script_->find(terms.lock_id);
        if (lock == nullptr || lock->state != htlc::HtlcLock::State::locked) {
            a.done = true;
            continue;
        }
        if (a.refund_tx) {
            auto r = s_->receipt(*a.refund_tx);
            if (r && !r->success) a.refund_tx.reset();
        }
        if (!a.refund_tx && now_ + t.delta_s >= terms.timelock) {
            a.refund_tx = submit(c.addr, 0, htlc::calls::refund(script_addr_, terms.lock_id));
        }
    }
}

// ---- Hosts -------------------------------------------------------------------

void Simulation::offer_headers(Host& h, const chain::Chain& ch) {
    auto& o = h.headers[ch.id()];
    const std::uint64_t tip = h.enclave->lc_tip(ch.id());
    if (tip != o.last_tip) {
        o.last_tip = tip;
        o.progress_at = now_;
    } else if (o.sent > tip && now_ - o.progress_at > kReoffer) {
        o.sent = tip;
        o.progress_at = now_;
    }
    o.sent = std::max(o.sent, tip);
    const std::uint64_t last = std::min(ch.tip_height(), o.sent + kMaxOffer);
    for (std::uint64_t height = o.sent + 1; height <= last; ++height) {
        enclave::HeaderInput in{ch.id(), ch.header(height), std::nullopt};
        if (height % ch.config().rotation_period == 0) in.committee = ch.committee(ch.epoch_of(height));
        for (Tick at : h.filter.route(MessageClass::chain_header, now_)) h.inbox.emplace(std::pair{at, seq_++}, in);
    }
    o.sent = std::max(o.sent, last);
}

void Simulation::offer_bodies(Host& h, const chain::Chain& ch) {
    auto& o = h.bodies[ch.id()];
    const std::uint64_t cursor = h.enclave->body_cursor(ch.id());
    const std::uint64_t done = cursor == 0 ? 0 : cursor - 1;
    if (done != o.last_tip) {
        o.last_tip = done;
        o.progress_at = now_;
    } else if (o.sent > done && now_ - o.progress_at > kReoffer) {
        o.sent = done;
        o.progress_at = now_;
    }
    o.sent = std::max(o.sent, done);
    const std::uint64_t last = std::min(h.enclave->lc_tip(ch.id()), o.sent + kMaxOffer);
    for (std::uint64_t height = o.sent + 1; height <= last; ++height) {
        const auto& b = ch.block(height);
        enclave::BlockInput in{ch.id(), height, b.txs, b.receipts};
        for (Tick at : h.filter.route(MessageClass::chain_event, now_)) h.inbox.emplace(std::pair{at, seq_++}, in);
    }
    o.sent = std::max(o.sent, last);
}

void Simulation::deliver(std::uint32_t i) {
    auto& h = hosts_[i];
    while (!h.inbox.empty() && h.inbox.begin()->first.first <= now_) {
        auto node = h.inbox.extract(h.inbox.begin());
        route(i, h.enclave->resume(node.mapped(), now_));
    }
}

void Simulation::step_host(std::uint32_t i) {
    auto& h = hosts_[i];
    if (!h.filter.available()) {
        h.inbox.clear();
        h.was_available = false;
        return;
    }
    if (!h.was_available) {
        h.was_available = true;
        h.enclave->wake(now_);
        for (auto* offers : {&h.headers, &h.bodies}) {
            for (auto& [id, o] : *offers) o.sent = o.last_tip = 0;
        }
    }
    offer_headers(h, *s_);
    offer_headers(h, *t_);
    deliver(i);
    offer_bodies(h, *s_);
    offer_bodies(h, *t_);
    deliver(i);
    route(i, h.enclave->tick(now_));
}

void Simulation::route(std::uint32_t i, std::vector<Output> outputs) {
    auto& h = hosts_[i];
    const auto secrets = h.enclave->audit_secret_encodings();
    for (auto& o : outputs) {
        report_.outputs_scanned++;
        Bytes bytes = enclave::encode_body(o.body);
        if (o.endorsement.signer != h.enclave->master_key() ||
            !crypto::verify(crypto::hash(bytes), o.endorsement, h.enclave->master_key())) {
            violation("endorsement", "output of enclave " + std::to_string(i) + " lacks a valid endorsement");
        }
        for (const auto& secret : secrets) {
            auto hit = std::search(bytes.begin(), bytes.end(),
                                   std::boyer_moore_horspool_searcher(secret.begin(), secret.end()));
            if (hit != bytes.end()) violation("key_confinement", "enclave " + std::to_string(i) + " leaked a secret");
        }
        const MessageClass cls = o.message_class();
        const auto sent = h.filter.route(cls, now_);
        if (auto* env = std::get_if<enclave::Envelope>(&o.body)) {
            if (env->to >= hosts_.size()) continue;
            auto& dst = hosts_[env->to];
            for (Tick t : sent) {
                for (Tick at : dst.filter.route(cls, t + 1)) dst.inbox.emplace(std::pair{at, seq_++}, *env);
            }
        } else if (auto* sub = std::get_if<enclave::Submission>(&o.body)) {
            for (Tick t : sent) submissions_.emplace(std::pair{t, seq_++}, QueuedSubmission{i, *sub});
        } else if (auto* reply = std::get_if<enclave::ClientReply>(&o.body)) {
            // Replies go to whichever client issued the request.
            for (auto& c : clients_) {
                bool mine = std::any_of(c.htlc.begin(), c.htlc.end(),
                                        [&](const HtlcAttempt& a) { return a.request.digest() == reply->request; });
                if (!mine) continue;
                for (Tick t : sent) c.mailbox.emplace_back(t + 1, *reply);
            }
        }
    }
}

void Simulation::flush_submissions() {
    while (!submissions_.empty() && submissions_.begin()->first.first <= now_) {
        auto node = submissions_.extract(submissions_.begin());
        const auto& q = node.mapped();
        chain::Chain& ch = q.sub.chain == "S" ? *s_ : *t_;
        ch.submit_tx(hosts_[q.host].addr, q.sub.value, q.sub.call, now_, q.sub.dedup_key);
    }
}

// ---- Invariants --------------------------------------------------------------

void Simulation::check_state() {
    auto vault_ok = [&](const chain::Chain& ch, const Address& at, const vault::Vault& v) {
        const auto& a = v.accounting();
        if (v.balance() != a.expected_balance()) {
            violation("conservation", "vault " + ch.id() + " balance differs from its accounting");
        }
        if (ch.balance(at) != v.balance() + a.pledges_escrowed) {
            violation("conservation", "vault " + ch.id() + " ledger balance differs from liquidity plus pledges");
        }
    };
    if (vault_s_) vault_ok(*s_, vault_s_addr_, *vault_s_);
    vault_ok(*t_, vault_t_addr_, *vault_t_);
    if (script_ && s_->balance(script_addr_) != script_->locked_total()) {
        violation("conservation", "script balance differs from the locked total");
    }
    for (const auto* ch : {s_.get(), t_.get()}) {
        if (ch->total_balances() != ch->total_minted()) violation("conservation", "chain " + ch->id() + " minted value");
    }
}

void Simulation::check_logs() {
    for (std::uint32_t i = 0; i < hosts_.size(); ++i) {
        const auto& raft = hosts_[i].enclave->raft();
        for (std::uint64_t idx = log_checked_[i] + 1; idx <= raft.commit_index(); ++idx) {
            Digest d = raft.log()[idx - 1].digest();
            auto [it, inserted] = log_digests_.emplace(idx, d);
            if (!inserted && it->second != d) {
                violation("log_safety", "enclaves committed different entries at index " + std::to_string(idx));
            }
        }
        log_checked_[i] = std::max(log_checked_[i], raft.commit_index());
    }
}

void Simulation::check_intents() {
    for (std::uint32_t i = 0; i < hosts_.size(); ++i) {
        const auto& mine = hosts_[i].enclave->committed_intents();
        const std::size_t common = std::min(mine.size(), intents_.size());
        // Compare only the newest shared entry; earlier ones were compared when
        // they were appended.
        if (common > 0 && (mine[common - 1].log_index != intents_[common - 1].log_index ||
                           !(mine[common - 1].intent == intents_[common - 1].intent))) {
            violation("replay_guard", "enclave " + std::to_string(i) + " diverged on committed intents");
        }
        for (std::size_t k = intents_.size(); k < mine.size(); ++k) {
            const auto& ci = mine[k];
            intents_.push_back(ci);
            const auto& it = ci.intent;
            if (oracle_amounts_.contains(it.deposit)) {
                violation("replay_guard", "source " + it.deposit.hex() + " committed twice");
                continue;
            }
            Amount backing = 0;
            bool known = false;
            if (auto d = deposit_index_.find(it.deposit); d != deposit_index_.end()) {
                backing = deposits_[d->second].out.value;
                known = true;
            } else if (auto l = lock_index_.find(it.deposit); l != lock_index_.end()) {
                backing = locks_[l->second].out.amount;
                known = true;
            }
            if (!known || backing != it.source_value) {
                violation("backing", "intent for " + it.deposit.hex() + " lacks a matching source");
                continue;
            }
            // Independent constant-product pricing: floor(Y * a / (X + a)).
            if (it.source_value <= sc_.pool.fee) {
                violation("pricing", "intent for " + it.deposit.hex() + " does not cover the fee");
                continue;
            }
            const amm::u128 a = it.source_value - sc_.pool.fee;
            const amm::u128 expect = oracle_y_ * a / (oracle_x_ + a);
            if (expect != it.amount) {
                violation("pricing", "intent for " + it.deposit.hex() + " priced " + std::to_string(it.amount) +
                                                ", expected " + std::to_string(static_cast<std::uint64_t>(expect)));
                continue;
            }
            oracle_x_ += a;
            oracle_y_ -= expect;
            oracle_amounts_[it.deposit] = it.amount;
        }
    }
}

void Simulation::check_transfer_amounts(bool final) {
    while (transfers_checked_ < transfers_.size()) {
        const auto& [dep, amount] = transfers_[transfers_checked_];
        auto it = oracle_amounts_.find(dep);
        if (it == oracle_amounts_.end()) {
            if (!final) return;
            violation("pricing", "transfer for " + dep.hex() + " has no committed intent");
        } else if (it->second != amount) {
            violation("pricing", "transfer for " + dep.hex() + " differs from its committed price");
        }
        transfers_checked_++;
    }
}

bool Simulation::quiescent() const {
    if (next_fault_ < faults_.size() || !submissions_.empty()) return false;
    if (s_->mempool_size() != 0 || t_->mempool_size() != 0) return false;
    for (const auto& c : clients_) {
        if (c.next_action < c.script.size() || now_ < c.offline_until || !c.in_flight.empty()) return false;
        for (const auto& a : c.htlc) {
            if (!a.done) return false;
        }
    }
    for (const auto& d : deposits_) {
        if (!d.confirmed && !d.refunded && !d.responded && !d.checkpointed) return false;
    }
    for (const auto& l : locks_) {
        if (!l.claimed && !l.refunded) return false;
    }
    // Storage is reclaimed only by checkpoints, which need a period to fire
    // on partial sets.
    if (vault_s_ && sc_.batching.checkpoint_period > 0 && !vault_s_->deposits().empty()) return false;
    return true;
}

void Simulation::finish() {
    RunReport& r = report_;
    check_state();
    check_logs();
    check_intents();
    check_transfer_amounts(true);

    r.scenario = sc_.name;
    r.seed = sc_.seed;
    r.mode = sc_.mode == enclave::Mode::challenge ? "challenge" : "htlc";
    r.operators = sc_.operators;
    r.threshold = vault_t_->threshold();
    r.ready_at = ready_;
    r.ticks = now_;
    for (auto& d : deposits_) {
        if (d.refunded) {
            d.out.state = "refunded";
        } else if (d.confirmed || d.responded || d.checkpointed) {
            d.out.state = "confirmed";
        } else {
            d.out.state = "pending";
        }
        if (d.out.retired_by.empty()) d.out.retired_by = "none";
        if (d.out.state == "confirmed" && d.transfers == 0) {
            violation("atomicity", "deposit " + d.out.id + " confirmed with no transfer");
        }
        if (d.out.state == "refunded" && d.transfers > 0) {
            violation("atomicity", "deposit " + d.out.id + " refunded with a transfer");
        }
        r.deposits.push_back(d.out);
    }
    for (auto& l : locks_) {
        l.out.state = l.claimed ? "claimed" : l.refunded ? "refunded" : "locked";
        if (l.claimed && l.transfers == 0) violation("htlc_exclusivity", "lock " + l.out.id + " claimed unpaid");
        if (l.refunded && l.transfers > 0) r.unclaimed_transfers++;
        r.locks.push_back(l.out);
    }
    for (const auto* ch : {s_.get(), t_.get()}) {
        for (const auto& [key, stats] : ch->call_stats()) {
            r.costs.push_back(CallCost{ch->id(), key, stats.calls, stats.reverts, stats.cost});
        }
    }
    std::uint64_t committed = 0;
    for (const auto& h : hosts_) {
        const auto& raft = h.enclave->raft();
        r.elections += raft.metrics().elections_started;
        committed = std::max(committed, raft.commit_index());
    }
    r.committed_entries = committed;
}

RunReport Simulation::run() {
    setup();
    const Tick end = ready_ + sc_.horizon;
    while (now_ < end && report_.violations.empty()) {
        step();
        if (quiescent()) {
            report_.quiescent = true;
            break;
        }
    }
    finish();
    return std::move(report_);
}

}  // namespace

RunReport run(const Scenario& scenario, const RunOptions& options) {
    scenario.validate();
    Simulation sim(scenario, options);
    return sim.run();
}

std::vector<RunReport> sweep(const Scenario& base, const std::string& axis, const std::vector<std::uint64_t>& values) {
    std::vector<RunReport> out;
    for (auto v : values) {
        Scenario s = base;
        if (axis == "operators") {
            s.operators = static_cast<std::uint32_t>(v);
        } else if (axis == "batch_size") {
            s.batching.max_batch = v;
        } else if (axis == "onchain_batch") {
            s.batching.onchain_batch = v;
        } else if (axis == "checkpoint_batch_size") {
            s.batching.checkpoint_batch_size = v;
        } else {
            throw InvalidArgument("unknown sweep axis " + axis);
        }
        s.name = base.name + "/" + axis + "=" + std::to_string(v);
        out.push_back(run(s));
    }
    return out;
}

std::vector<Amortization> amortization_table(const std::vector<RunReport>& reports,
                                             const std::vector<std::uint64_t>& lengths) {
    if (reports.size() != lengths.size()) throw InvalidArgument("one batch length per report is required");
    std::vector<Amortization> out;
    for (std::size_t i = 0; i < reports.size(); ++i) {
        Amortization a;
        a.batch_length = lengths[i];
        a.transfers = reports[i].transfers_executed;
        if (const auto* c = reports[i].cost_of("vault:T.transfer"); c != nullptr && a.transfers > 0) {
            a.sig_verifications_per_tx = static_cast<double>(c->cost.sig_verifications) / static_cast<double>(a.transfers);
            a.storage_writes_per_tx = static_cast<double>(c->cost.storage_writes) / static_cast<double>(a.transfers);
        }
        out.push_back(a);
    }
    return out;
}

}  // namespace mercury::harness
