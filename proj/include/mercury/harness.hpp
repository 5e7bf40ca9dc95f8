#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mercury/enclave.hpp"

namespace mercury::harness {

using crypto::Digest;

// ---- Scenario description -------------------------------------------------

struct ChainSpec {
    std::uint32_t committee_size = 8;
    Tick rotation_period = 64;
    Rational committee_threshold{2, 3};
    crypto::Scheme scheme = crypto::Scheme::simulated;
};

struct ClientAction {
    enum class Kind : std::uint8_t { deposit, offline, challenge, resolve, htlc };
    Kind kind = Kind::deposit;
    /// Ticks after the system is ready.
    Tick at = 0;
    Amount value = 0;
    /// Offline duration.
    Tick ticks = 0;
    /// Which of the client's deposits (in script order) a challenge or resolve targets.
    std::size_t deposit = 0;
};

std::string_view action_kind_name(ClientAction::Kind k);

struct ClientSpec {
    std::string name;
    Amount balance = 1'000'000;
    /// Copies of this client, named name0, name1, ...
    std::uint32_t count = 1;
    /// Honest clients challenge and resolve on their own; every client requests
    /// its transfers and refunds its expired locks.
    bool automatic = true;
    std::vector<ClientAction> script;
};

struct FaultSpec {
    enum class Action : std::uint8_t { crash, suspend, resume, policy, clear };
    enum class Target : std::uint8_t { one, all, leader };
    Tick at = 0;
    Target target = Target::one;
    std::uint32_t index = 0;
    Action action = Action::suspend;
    enclave::MessageClass message_class = enclave::MessageClass::consensus;
    enclave::FilterAction policy;
};

std::string_view fault_action_name(FaultSpec::Action a);

struct RandomFaults {
    bool enabled = false;
    /// Only "FaultGenV1" exists.
    std::string generator = "FaultGenV1";
    std::uint32_t events = 3;
    /// Faults start within this many ticks of system readiness.
    Tick window = 120;
};

struct PoolSpec {
    Amount x = 1'000'000;
    Amount y = 2'500'000'000;
    Amount fee = 0;
    Rational lp_fraction{1, 2};
};

struct Scenario {
    std::string name = "scenario";
    std::uint64_t seed = 1;
    enclave::Mode mode = enclave::Mode::challenge;
    std::uint32_t operators = 3;
    enclave::Timing timing;
    ChainSpec source;
    ChainSpec target;
    PoolSpec pool;
    enclave::Batching batching;
    Tick htlc_timelock = 0;
    Tick horizon = 2000;
    Tick election_base = 10;
    Tick election_step = 4;
    Tick heartbeat = 2;
    std::uint64_t registration_lag = 32;
    std::vector<ClientSpec> clients;
    std::vector<FaultSpec> faults;
    RandomFaults random_faults;

    /// Throws InvalidArgument naming the first broken constraint.
    void validate() const;
    /// tau_c + tau_w unless set.
    Tick effective_timelock() const { return htlc_timelock != 0 ? htlc_timelock : timing.tau_c + timing.tau_w; }
};

Scenario parse_scenario(const std::string& yaml_text);
Scenario load_scenario(const std::string& path);

/// Fault schedule derived from the seed alone. Crashes never exceed f, and
/// every transient fault heals inside the window plus its bounded duration.
std::vector<FaultSpec> fault_gen_v1(std::uint64_t seed, std::uint32_t operators, const RandomFaults& spec,
                                    const enclave::Timing& timing);

/// Randomized challenge-mode scenario used by the atomicity suite.
Scenario random_scenario_v1(std::uint64_t seed);

/// One honest client deposits, then goes offline for `gap` ticks. With
/// `operators_down`, every enclave is suspended from before the deposit until
/// well after the deposit deadline.
Scenario offline_client_scenario(Tick gap, bool operators_down, std::uint64_t seed);

// ---- Reports -------------------------------------------------------------------

struct DepositOutcome {
    std::string id;
    std::string client;
    Amount value = 0;
    Tick deposited_at = 0;
    /// confirmed | refunded | pending
    std::string state;
    /// confirm | checkpoint | response | none
    std::string retired_by;
    std::optional<Amount> transfer_amount;
    std::optional<Tick> transfer_at;
    std::optional<Tick> settled_at;
    std::optional<Tick> challenge_started_at;
};

struct LockOutcome {
    std::string id;
    std::string client;
    Amount amount = 0;
    Tick timelock = 0;
    /// claimed | refunded | locked
    std::string state;
    std::optional<Tick> spent_at;
    std::optional<Amount> transfer_amount;
    std::optional<Tick> transfer_at;
};

/// Metered cost of one contract method on one chain.
struct CallCost {
    std::string chain;
    std::string method;
    std::uint64_t calls = 0;
    std::uint64_t reverts = 0;
    chain::CostMeter cost;
};

struct RunReport {
    std::string scenario;
    std::uint64_t seed = 0;
    std::string mode;
    std::uint32_t operators = 0;
    std::uint32_t threshold = 0;
    Tick ready_at = 0;
    Tick ticks = 0;
    bool quiescent = false;
    std::vector<DepositOutcome> deposits;
    std::vector<LockOutcome> locks;
    std::vector<CallCost> costs;
    std::uint64_t elections = 0;
    std::uint64_t committed_entries = 0;
    std::uint64_t transfers_executed = 0;
    std::uint64_t transfer_batches = 0;
    std::uint64_t checkpoints = 0;
    std::uint64_t checkpoint_deletes = 0;
    std::vector<std::uint64_t> checkpoint_sizes;
    std::uint64_t outputs_scanned = 0;
    /// Locks refunded after their transfer executed; the vault bears the loss.
    std::uint64_t unclaimed_transfers = 0;
    std::map<std::string, bool> verdicts;
    std::vector<std::string> violations;

    bool ok() const { return violations.empty(); }
    std::size_t count(std::string_view state) const;
    const CallCost* cost_of(std::string_view method) const;
};

enum class Format { json_lines, table };
Format parse_format(std::string_view name);

std::string to_json_lines(const RunReport& r);
std::string to_table(const std::vector<RunReport>& reports);
std::string render(const std::vector<RunReport>& reports, Format f);

// ---- Running ---------------------------------------------------------------------

struct RunOptions {
    /// Evaluate invariants each tick, not only at the end.
    bool check_every_tick = true;
};

RunReport run(const Scenario& scenario, const RunOptions& options = {});

/// Axes: operators, batch_size, onchain_batch, checkpoint_batch_size.
std::vector<RunReport> sweep(const Scenario& base, const std::string& axis, const std::vector<std::uint64_t>& values);

/// Per-transaction cost on the target vault: multisig verifications and
/// storage writes divided by executed transfers.
struct Amortization {
    std::uint64_t batch_length = 0;
    std::uint64_t transfers = 0;
    double sig_verifications_per_tx = 0;
    double storage_writes_per_tx = 0;
};

std::vector<Amortization> amortization_table(const std::vector<RunReport>& reports,
                                             const std::vector<std::uint64_t>& lengths);

}  // namespace mercury::harness
