// Acceptance criteria 1-10. Prints one PASS/FAIL line per criterion and exits
// non-zero if any fails. Each criterion also returns a transcript; criterion 10
// reruns 1-9 and requires identical transcripts.

#include <chrono>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include "mercury/harness.hpp"
#include "mercury/htlc.hpp"
#include "mercury/lightclient.hpp"
#include "vault_fixture.hpp"

using namespace mercury;
using crypto::Digest;
using harness::RunReport;
using harness::Scenario;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;
    std::string transcript;

    void require(bool cond, const std::string& why) {
        if (!cond && pass) {
            pass = false;
            detail = why;
        }
    }
};

bool legal_deposit(const harness::DepositOutcome& d) {
    if (d.state == "confirmed") return d.transfer_at.has_value();
    if (d.state == "refunded") return !d.transfer_at.has_value();
    return false;
}

bool legal_lock(const harness::LockOutcome& l) {
    if (l.state == "claimed") return l.transfer_at && l.spent_at && *l.transfer_at <= *l.spent_at;
    return l.state == "refunded";
}

/// Records the run and fails the outcome unless it is clean, quiescent and every
/// deposit and lock ended in a legal terminal pair.
void judge(Outcome& o, const RunReport& r) {
    o.transcript += harness::to_json_lines(r);
    const std::string tag = r.scenario + " seed " + std::to_string(r.seed);
    o.require(r.ok(), tag + ": " + (r.violations.empty() ? std::string() : r.violations.front()));
    o.require(r.quiescent, tag + ": did not terminate");
    for (const auto& d : r.deposits) o.require(legal_deposit(d), tag + ": deposit " + d.id + " ended " + d.state);
    for (const auto& l : r.locks) o.require(legal_lock(l), tag + ": lock " + l.id + " ended " + l.state);
}

// ---- 1 ------------------------------------------------------------------------

Outcome atomicity_suite() {
    Outcome o;
    const auto start = std::chrono::steady_clock::now();
    std::map<std::uint32_t, int> sizes;
    std::map<std::string, int> kinds;
    std::size_t deposits = 0;
    for (std::uint64_t seed = 1; seed <= 500; ++seed) {
        Scenario sc = harness::random_scenario_v1(seed);
        sizes[sc.operators]++;
        auto faults = sc.faults;
        if (sc.random_faults.enabled) {
            auto extra = harness::fault_gen_v1(sc.seed, sc.operators, sc.random_faults, sc.timing);
            faults.insert(faults.end(), extra.begin(), extra.end());
        }
        for (const auto& f : faults) {
            using A = harness::FaultSpec::Action;
            using K = enclave::FilterAction::Kind;
            if (f.action == A::crash) kinds["leader-crash"]++;
            if (f.action == A::suspend && f.target == harness::FaultSpec::Target::all) kinds["all-unavailable"]++;
            if (f.action == A::policy && f.policy.kind == K::drop && f.message_class == enclave::MessageClass::chain_event) {
                kinds["event-withholding"]++;
            }
            if (f.action == A::policy && f.policy.kind == K::delay) kinds["delay"]++;
            if (f.action == A::policy && f.policy.kind == K::replay) kinds["replay"]++;
        }
        auto r = harness::run(sc);
        deposits += r.deposits.size();
        judge(o, r);
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    for (std::uint32_t n : {3u, 5u, 7u}) o.require(sizes[n] > 0, "no scenario with n=" + std::to_string(n));
    for (const char* k : {"leader-crash", "all-unavailable", "event-withholding", "delay", "replay"}) {
        o.require(kinds[k] > 0, std::string("fault kind never generated: ") + k);
    }
    o.require(secs < 300.0, "suite took " + std::to_string(secs) + " s");
    if (o.pass) {
        std::ostringstream s;
        s << "500 scenarios, " << deposits << " deposits, 0 violations, " << std::fixed;
        s.precision(1);
        s << secs << " s; n=3/5/7: " << sizes[3] << "/" << sizes[5] << "/" << sizes[7] << "; faults";
        for (const auto& [k, v] : kinds) s << " " << k << "=" << v;
        o.detail = s.str();
    }
    return o;
}

// ---- 2 ------------------------------------------------------------------------

Outcome offline_client() {
    Outcome o;
    const enclave::Timing t;
    int runs = 0, confirmed = 0, refunded = 0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        for (Tick gap : {Tick{0}, t.tau_c, t.tau_c + t.tau_w, 10 * (t.tau_c + t.tau_w)}) {
            for (bool down : {false, true}) {
                auto r = harness::run(harness::offline_client_scenario(gap, down, seed));
                judge(o, r);
                o.require(r.deposits.size() == 1, "offline scenario lost its deposit");
                ++runs;
                confirmed += static_cast<int>(r.count("confirmed"));
                refunded += static_cast<int>(r.count("refunded"));
            }
        }
    }
    if (o.pass) {
        o.detail = std::to_string(runs) + " runs over gaps {0, tau_c, tau_c+tau_w, 10(tau_c+tau_w)}, all legal (" +
                   std::to_string(confirmed) + " confirmed, " + std::to_string(refunded) + " refunded)";
    }
    return o;
}

// ---- 3 ------------------------------------------------------------------------

enum class Mutation { transfer, confirm, respond, checkpoint };

const char* mutation_name(Mutation m) {
    switch (m) {
        case Mutation::transfer: return "transfer";
        case Mutation::confirm: return "confirm";
        case Mutation::respond: return "respond_challenge";
        case Mutation::checkpoint: return "update_checkpoint";
    }
    return "?";
}

/// One vault primed for mutation m; attempt() submits it with a given signature set.
struct MutationCase {
    testing::VaultFixture f;
    Mutation m;
    Digest id;
    vault::TransferBatchBody body;

    static vault::VaultConfig cfg() {
        vault::VaultConfig c;
        c.challenge_window = 50;
        c.pledge_floor = 5;
        return c;
    }

    MutationCase(std::uint32_t n, Mutation m) : f(n, cfg()), m(m) {
        const Address alice = Address::from_label("alice");
        if (m == Mutation::transfer) {
            f.fund(1000);
            body.target_chain = f.chain.id();
            body.sequence = 1;
            body.transfers = {{alice, 10, crypto::hash(std::string_view("src")), 1000}};
            return;
        }
        id = f.deposit(alice, 100);
        if (m == Mutation::respond) {
            f.chain.mint(alice, 10);
            auto r = f.run(alice, 10, vault::calls::start_challenge(f.vault_addr, id, 100));
            if (!r.success) throw std::runtime_error("challenge setup failed: " + r.revert_reason);
        }
    }

    Digest digest() const {
        switch (m) {
            case Mutation::transfer: return body.digest();
            case Mutation::confirm: return vault::confirm_digest(f.chain.id(), {id});
            case Mutation::respond: return vault::challenge_digest(f.chain.id(), id);
            case Mutation::checkpoint: return vault::checkpoint_digest(f.chain.id(), {id});
        }
        return {};
    }

    bool attempt(const std::vector<crypto::Signature>& sigs) {
        crypto::MultiSignature ms;
        ms.message_digest = digest();
        ms.threshold = f.vault->threshold();
        ms.signatures = sigs;
        chain::ContractCall call;
        switch (m) {
            case Mutation::transfer: call = vault::calls::transfer(f.vault_addr, {body, ms}); break;
            case Mutation::confirm: call = vault::calls::confirm(f.vault_addr, {id}, ms); break;
            case Mutation::respond: call = vault::calls::respond_challenge(f.vault_addr, id, ms); break;
            case Mutation::checkpoint: call = vault::calls::update_checkpoint(f.vault_addr, {id}, ms); break;
        }
        return f.run(f.host, 0, call).success;
    }
};

Outcome threshold_enforcement() {
    Outcome o;
    std::size_t cases = 0;
    std::ostringstream tr;
    for (std::uint32_t n : {3u, 5u, 7u}) {
        const std::uint32_t fmax = (n - 1) / 2;
        for (Mutation m : {Mutation::transfer, Mutation::confirm, Mutation::respond, Mutation::checkpoint}) {
            for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
                MutationCase c(n, m);
                const Digest d = c.digest();
                std::vector<crypto::Signature> sigs;
                for (std::uint32_t i = 0; i < n; ++i) {
                    if (mask & (1u << i)) sigs.push_back(crypto::sign(d, c.f.operators[i]));
                }
                const auto k = static_cast<std::uint32_t>(sigs.size());
                const std::string tag = std::string(mutation_name(m)) + " n=" + std::to_string(n) + " signers=" +
                                        std::to_string(mask);
                if (k <= fmax) {
                    // Padding to f+1 entries with non-counting signatures must not help.
                    auto outsiders = sigs;
                    for (std::uint32_t j = 0; outsiders.size() <= fmax; ++j) {
                        outsiders.push_back(crypto::sign(d, c.f.key(100 + j)));
                    }
                    auto wrong = sigs;
                    const Digest other = crypto::hash(std::string_view("other message"));
                    for (std::uint32_t i = 0; i < n && wrong.size() <= fmax; ++i) {
                        if (!(mask & (1u << i))) wrong.push_back(crypto::sign(other, c.f.operators[i]));
                    }
                    bool ok = !c.attempt(sigs) && !c.attempt(outsiders) && !c.attempt(wrong);
                    cases += 3;
                    if (!sigs.empty()) {
                        auto dup = sigs;
                        while (dup.size() <= fmax) dup.push_back(sigs.front());
                        ok = ok && !c.attempt(dup);
                        ++cases;
                    }
                    o.require(ok, tag + ": at most f valid signatures accepted");
                    tr << tag << " reverted\n";
                } else {
                    const bool ok = c.attempt(sigs);
                    ++cases;
                    o.require(ok, tag + ": f+1 or more valid signatures rejected");
                    tr << tag << (ok ? " succeeded\n" : " reverted\n");
                }
                if (!o.pass) return o;
            }
        }
    }
    o.transcript = tr.str();
    o.detail = std::to_string(cases) + " attempts over every signer subset of 4 mutations for n in {3,5,7}";
    return o;
}

// ---- 4 ------------------------------------------------------------------------

Outcome batching_amortization() {
    Outcome o;
    Scenario base = harness::load_scenario(MERCURY_SCENARIO_DIR "/sweep_batch.yaml");
    const std::vector<std::uint64_t> lengths{1, 10, 20, 50, 100};
    auto reports = harness::sweep(base, "onchain_batch", lengths);
    for (const auto& r : reports) judge(o, r);
    auto table = harness::amortization_table(reports, lengths);
    // writes = a * transfers + b * batches must hold with one (a, b) for all L.
    const auto* c1 = reports.front().cost_of("vault:T.transfer");
    o.require(c1 != nullptr, "no transfer cost recorded");
    if (!o.pass) return o;
    const std::uint64_t xfers = reports.front().transfers_executed;
    std::ostringstream s;
    s << "sig/tx";
    std::int64_t per_item = -1, per_batch = -1;
    for (std::size_t i = 0; i < reports.size(); ++i) {
        const auto& r = reports[i];
        const std::uint64_t L = lengths[i];
        const auto* c = r.cost_of("vault:T.transfer");
        o.require(c != nullptr && r.transfers_executed == 100, "L=" + std::to_string(L) + ": not all 100 transfers ran");
        if (!o.pass) return o;
        o.require(r.transfers_executed == xfers, "transfer counts differ");
        // Exactly 1/L: verifications * L == transfers.
        o.require(c->cost.sig_verifications * L == r.transfers_executed,
                  "L=" + std::to_string(L) + ": " + std::to_string(c->cost.sig_verifications) + " verifications");
        o.require(r.transfer_batches * L == r.transfers_executed, "L=" + std::to_string(L) + ": partial batches");
        if (!o.pass) return o;
        // Two unknowns from the first two lengths, then every length must agree.
        if (i == 0) {
            per_batch = 0;
            per_item = static_cast<std::int64_t>(c->cost.storage_writes);
        }
        if (i == 1) {
            const auto w1 = static_cast<std::int64_t>(reports[0].cost_of("vault:T.transfer")->cost.storage_writes);
            const auto w2 = static_cast<std::int64_t>(c->cost.storage_writes);
            const auto b1 = static_cast<std::int64_t>(reports[0].transfer_batches);
            const auto b2 = static_cast<std::int64_t>(r.transfer_batches);
            const auto n = static_cast<std::int64_t>(xfers);
            per_batch = (w1 - w2) / (b1 - b2);
            per_item = (w1 - per_batch * b1) / n;
        }
        if (i >= 1) {
            o.require(static_cast<std::int64_t>(c->cost.storage_writes) ==
                          per_item * static_cast<std::int64_t>(r.transfers_executed) +
                              per_batch * static_cast<std::int64_t>(r.transfer_batches),
                      "L=" + std::to_string(L) + ": writes are not affine in items and batches");
        }
        s << " L" << L << "=" << table[i].sig_verifications_per_tx;
    }
    o.require(per_item > 0 && per_batch > 0, "non-positive write constants");
    if (o.pass) {
        s << "; writes/tx = " << per_item << " + " << per_batch << "/L";
        o.detail = s.str();
    }
    return o;
}

// ---- 5 ------------------------------------------------------------------------

Outcome checkpoint_behavior() {
    Outcome o;
    std::ostringstream tr;
    {
        // Contract level: 40 eligible ids, two checkpoints of 20.
        vault::VaultConfig cfg;
        cfg.challenge_window = 50;
        cfg.pledge_floor = 5;
        testing::VaultFixture f(3, cfg);
        const Address alice = Address::from_label("alice");
        std::vector<Digest> ids;
        for (int i = 0; i < 40; ++i) ids.push_back(f.deposit(alice, 100 + static_cast<Amount>(i)));
        for (int half = 0; half < 2; ++half) {
            std::vector<Digest> cp(ids.begin() + half * 20, ids.begin() + (half + 1) * 20);
            auto r = f.run(f.host, 0,
                           vault::calls::update_checkpoint(f.vault_addr, cp,
                                                           f.multisig(vault::checkpoint_digest("S", cp), {0, 1})));
            o.require(r.success, "checkpoint reverted: " + r.revert_reason);
            o.require(r.cost.sig_verifications == 1, "checkpoint used " + std::to_string(r.cost.sig_verifications) +
                                                         " multisig verifications");
            o.require(r.cost.storage_deletes == 20, "checkpoint deleted " + std::to_string(r.cost.storage_deletes));
            tr << "checkpoint " << half << " deletes " << r.cost.storage_deletes << "\n";
        }
        o.require(f.vault->deposits().empty(), "vault still holds deposits");
        for (const auto& id : ids) {
            f.chain.mint(alice, 10);
            auto r = f.run(alice, 10, vault::calls::start_challenge(f.vault_addr, id, 100));
            o.require(!r.success, "challenge on a deleted id succeeded");
        }
        o.require(f.conserved(), "vault accounting broken");
    }
    {
        // System level: 40 clients on one tick, no partial checkpoints, then
        // every client challenges its already-deleted deposit.
        Scenario sc;
        sc.name = "checkpoint-40";
        sc.seed = 5;
        sc.batching.checkpoint_batch_size = 20;
        sc.batching.checkpoint_period = 0;
        harness::ClientSpec c;
        c.name = "c";
        c.count = 40;
        c.automatic = false;
        harness::ClientAction dep;
        dep.at = 10;
        dep.value = 1000;
        harness::ClientAction ch;
        ch.kind = harness::ClientAction::Kind::challenge;
        ch.at = 300;
        ch.deposit = 0;
        c.script = {dep, ch};
        sc.clients = {c};
        auto r = harness::run(sc);
        judge(o, r);
        o.require(r.checkpoint_sizes == std::vector<std::uint64_t>{20, 20}, "checkpoint sizes differ from {20, 20}");
        const auto* cp = r.cost_of("vault:S.update_checkpoint");
        o.require(cp != nullptr && cp->calls - cp->reverts == 2 && cp->cost.sig_verifications == 2,
                  "checkpoints did not each use one verification");
        const auto* chal = r.cost_of("vault:S.start_challenge");
        o.require(chal != nullptr && chal->calls == 40 && chal->reverts == 40, "a challenge on a deleted id landed");
        o.require(r.count("confirmed") == 40, "not every deposit confirmed");
    }
    o.transcript += tr.str();
    if (o.pass) o.detail = "2 x 20 ids deleted with 1 verification each; 80 challenges on deleted ids reverted";
    return o;
}

// ---- 6 ------------------------------------------------------------------------

Outcome light_client_soundness() {
    Outcome o;
    chain::ChainConfig cfg;
    cfg.chain_id = "S";
    cfg.committee_size = 16;
    cfg.rotation_period = 64;
    cfg.seed = 6;
    chain::Chain c(cfg);
    const std::uint64_t k = 8;
    for (Tick t = 1; t <= k; ++t) c.advance_tick(t);
    auto boot = lightclient::LightClient::bootstrap(lightclient::LightClientConfig::from_chain(cfg, k),
                                                    c.committee(0).commitment(), lightclient::make_bundle(c, k));
    if (!std::holds_alternative<lightclient::LightClient>(boot)) {
        o.require(false, "bootstrap rejected");
        return o;
    }
    auto lc = std::get<lightclient::LightClient>(std::move(boot));
    auto committee_for = [&](std::uint64_t h) -> std::optional<chain::SyncCommittee> {
        if (h % cfg.rotation_period == 0) return c.committee(c.epoch_of(h));
        return std::nullopt;
    };
    std::uint64_t honest = 0, false_accepts = 0, false_rejects = 0, forged = 0, rotations = 0;
    std::map<std::string, std::uint64_t> rejected_by_class;
    const Tick last = k + 200;
    for (Tick t = k + 1; t <= last; ++t) {
        for (auto tamper : chain::all_tampers()) {
            auto f = c.forge_header(tamper, t);
            auto committee = f.committee ? f.committee : committee_for(f.header.height);
            ++forged;
            if (lc.ingest_header(f.header, committee).accepted) {
                ++false_accepts;
            } else {
                rejected_by_class[std::string(chain::tamper_name(tamper))]++;
            }
        }
        const auto& h = c.advance_tick(t);
        if (h.height % cfg.rotation_period == 0) ++rotations;
        if (lc.ingest_header(h, committee_for(h.height)).accepted) {
            ++honest;
        } else {
            ++false_rejects;
        }
    }
    o.require(false_accepts == 0, std::to_string(false_accepts) + " forged headers accepted");
    o.require(false_rejects == 0, std::to_string(false_rejects) + " honest headers rejected");
    o.require(rotations >= 3, "only " + std::to_string(rotations) + " rotations");
    o.require(lc.tip_height() == last, "light client did not reach the tip");
    o.require(rejected_by_class.size() == chain::all_tampers().size(), "a tamper class was never exercised");
    std::ostringstream tr;
    tr << honest << " " << forged << " " << lc.tip().digest().hex() << "\n";
    for (const auto& [k2, v] : rejected_by_class) tr << k2 << " " << v << "\n";
    o.transcript = tr.str();
    if (o.pass) {
        o.detail = std::to_string(honest) + " honest headers accepted, " + std::to_string(forged) + " forgeries over " +
                   std::to_string(chain::all_tampers().size()) + " classes rejected, " + std::to_string(rotations) +
                   " rotations";
    }
    return o;
}

// ---- 7 ------------------------------------------------------------------------

Outcome amm_suite() {
    Outcome o;
    std::mt19937_64 rng(7);
    std::uint64_t cases = 0, traded = 0, round_trips = 0;
    amm::u128 digest_acc = 0;
    while (cases < 10000) {
        ++cases;
        const Amount X = 1 + rng() % 1'000'000'000'000ULL;
        const Amount Y = 1 + rng() % 1'000'000'000'000ULL;
        const Amount a = 1 + rng() % std::max<Amount>(1, X / 2);
        amm::Pool p;
        p.add_liquidity(Address::from_label("lp"), X, Y);
        const amm::u128 before = p.product();
        Amount y = 0;
        try {
            y = p.exchange(a);
        } catch (const amm::AmmError&) {
            // Exact value below one unit: nothing tradeable.
            o.require(static_cast<amm::u128>(Y) * a < static_cast<amm::u128>(X) + a, "tradeable input rejected");
            continue;
        }
        ++traded;
        // Exact rational Y*a/(X+a): y*(X+a) <= Y*a < (y+1)*(X+a).
        const amm::u128 lhs = static_cast<amm::u128>(y) * (static_cast<amm::u128>(X) + a);
        const amm::u128 rhs = static_cast<amm::u128>(Y) * a;
        const amm::u128 next = lhs + static_cast<amm::u128>(X) + a;
        o.require(lhs <= rhs && rhs < next, "exchange differs from the rational value by a unit or more");
        o.require(p.product() >= before, "product decreased");
        o.require(p.reserve_x() == X + a && p.reserve_y() == Y - y, "reserves not updated by the trade");
        try {
            const Amount back = p.exchange_reverse(y);
            ++round_trips;
            o.require(back <= a, "round trip gained");
            o.require(p.product() >= before, "product decreased on the way back");
        } catch (const amm::AmmError&) {
        }
        digest_acc = digest_acc * 31 + y;
        if (!o.pass) break;
    }
    std::ostringstream tr;
    tr << cases << " " << traded << " " << round_trips << " " << static_cast<std::uint64_t>(digest_acc) << "\n";
    o.transcript = tr.str();
    if (o.pass) {
        o.detail = std::to_string(cases) + " cases (" + std::to_string(traded) + " trades, " +
                   std::to_string(round_trips) + " round trips), reserves up to 1e12, exact-oracle agreement";
    }
    return o;
}

// ---- 8 ------------------------------------------------------------------------

Outcome reward_conservation() {
    Outcome o;
    std::mt19937_64 rng(8);
    std::ostringstream tr;
    for (int i = 0; i < 1000; ++i) {
        std::map<Address, Amount> lps;
        const int nl = 1 + static_cast<int>(rng() % 6);
        for (int j = 0; j < nl; ++j) lps[Address::from_label("lp" + std::to_string(j))] = 1 + rng() % 1'000'000;
        std::vector<crypto::PublicKey> signers(1 + rng() % 7);
        for (std::size_t j = 0; j < signers.size(); ++j) signers[j].bytes[0] = static_cast<std::uint8_t>(j + 1);
        const std::uint64_t den = 1 + rng() % 1000;
        const Rational r{rng() % (den + 1), den};
        const Amount F = rng() % 10'000'000;
        amm::RewardLedger ledger;
        auto p = ledger.distribute(F, lps, signers, r);
        o.require(p.to_lps + p.to_operators <= F, "payouts exceed the fee");
        o.require(F - p.to_lps - p.to_operators < p.payees, "deficit not below payee count");
        o.require(p.payees == lps.size() + signers.size(), "payee count differs");
        tr << p.to_lps << " " << p.to_operators << "\n";
    }
    // Closed forms with F a multiple of r's denominator: sole LP gets F*r, a
    // single signer gets F*(1-r), nothing left over.
    int closed = 0;
    for (int i = 0; i < 1000; ++i) {
        const std::uint64_t den = 1 + rng() % 1000;
        const Rational r{rng() % (den + 1), den};
        const Amount F = den * (rng() % 100000);
        const Amount want_lp = F / den * r.num;
        const Amount want_op = F / den * (den - r.num);
        const Amount L = 1 + rng() % 1'000'000;
        o.require(amm::lp_reward(F, L, L, r) == want_lp, "sole-LP reward differs from F*r");
        o.require(amm::operator_reward(F, 1, r) == want_op, "single-signer reward differs from F*(1-r)");
        amm::RewardLedger ledger;
        crypto::PublicKey k;
        k.bytes[0] = 1;
        auto p = ledger.distribute(F, {{Address::from_label("lp"), L}}, {k}, r);
        o.require(p.to_lps == want_lp && p.to_operators == want_op && p.dust == 0, "closed-form distribution differs");
        ++closed;
    }
    o.transcript = tr.str();
    if (o.pass) o.detail = "1000 random cases conserve the fee; " + std::to_string(closed) + " closed-form cases exact";
    return o;
}

// ---- 9 ------------------------------------------------------------------------

/// Lock at tick 2, then claim and refund both attempted in each block from `reveal`.
struct BoundaryResult {
    int claims = 0;
    int refunds = 0;
};

BoundaryResult htlc_boundary(Tick timelock, Tick reveal) {
    chain::ChainConfig cfg;
    cfg.chain_id = "S";
    cfg.finality_delay = 1;
    cfg.script_only = true;
    chain::Chain c(cfg);
    auto script = std::make_shared<htlc::HtlcScript>("S");
    const Address at = Address::from_label("htlc:S");
    const Address alice = Address::from_label("alice");
    const Address pool = Address::from_label("mercury:S");
    c.deploy(at, script);
    c.mint(alice, 100);
    Tick now = 1;
    c.advance_tick(now);
    const Digest pre = htlc::derive_preimage(crypto::hash(std::string_view("g")), crypto::hash(std::string_view("r")));
    auto lock = c.submit_tx(alice, 100, htlc::calls::lock(at, htlc::hashlock_of(pre), timelock, pool), now);
    c.advance_tick(++now);
    const Digest id = c.receipt(lock.tx_id)->events.at(0).get<Digest>("id");
    BoundaryResult out;
    for (Tick ts = reveal; ts <= reveal + 2; ++ts) {
        while (now + 1 < ts) c.advance_tick(++now);
        auto cl = c.submit_tx(pool, 0, htlc::calls::claim(at, id, pre), now);
        auto rf = c.submit_tx(alice, 0, htlc::calls::refund(at, id), now);
        c.advance_tick(++now);
        out.claims += c.receipt(cl.tx_id)->success ? 1 : 0;
        out.refunds += c.receipt(rf.tx_id)->success ? 1 : 0;
    }
    return out;
}

Scenario htlc_scenario(const std::string& name, std::uint64_t seed) {
    Scenario sc;
    sc.name = name;
    sc.seed = seed;
    sc.mode = enclave::Mode::htlc;
    sc.horizon = 2000;
    harness::ClientSpec c;
    c.name = "carol";
    c.count = 3;
    for (Tick at : {Tick{5}, Tick{25}, Tick{60}}) {
        harness::ClientAction a;
        a.kind = harness::ClientAction::Kind::htlc;
        a.at = at;
        a.value = 2000 + at;
        c.script.push_back(a);
    }
    sc.clients = {c};
    return sc;
}

Outcome htlc_exclusivity() {
    Outcome o;
    std::ostringstream tr;
    const Tick T = 30;
    for (Tick reveal : {T - 1, T, T + 1}) {
        auto r = htlc_boundary(T, reveal);
        tr << "reveal " << reveal << " claims " << r.claims << " refunds " << r.refunds << "\n";
        o.require(r.claims + r.refunds == 1, "reveal at " + std::to_string(reveal) + ": not exactly one branch");
        o.require((r.claims == 1) == (reveal < T), "reveal at " + std::to_string(reveal) + ": wrong branch");
    }
    o.transcript = tr.str();

    std::size_t locks = 0, claimed = 0, refunded = 0, unclaimed = 0;
    auto account = [&](const RunReport& r) {
        judge(o, r);
        locks += r.locks.size();
        claimed += r.count("claimed");
        refunded += r.count("refunded");
        unclaimed += r.unclaimed_transfers;
    };
    for (std::uint64_t seed = 1; seed <= 3; ++seed) account(harness::run(htlc_scenario("htlc-honest", seed)));
    for (Tick down : {Tick{0}, Tick{8}, Tick{12}, Tick{20}, Tick{40}}) {
        auto sc = htlc_scenario("htlc-unavailable-" + std::to_string(down), 4);
        harness::FaultSpec f;
        f.at = down;
        f.target = harness::FaultSpec::Target::all;
        f.action = harness::FaultSpec::Action::suspend;
        sc.faults = {f};
        account(harness::run(sc));
    }
    for (Tick delay : {Tick{5}, Tick{40}, Tick{100}, Tick{140}}) {
        auto sc = htlc_scenario("htlc-claim-delay-" + std::to_string(delay), 5);
        harness::FaultSpec f;
        f.at = 0;
        f.target = harness::FaultSpec::Target::all;
        f.action = harness::FaultSpec::Action::policy;
        f.message_class = enclave::MessageClass::chain_submission;
        f.policy = enclave::FilterAction::delay(delay);
        sc.faults = {f};
        account(harness::run(sc));
    }
    o.require(claimed > 0 && refunded > 0, "system scenarios did not exercise both branches");
    if (o.pass) {
        o.detail = "3 boundary reveals exact; " + std::to_string(locks) + " system locks: " + std::to_string(claimed) +
                   " claimed after their transfer, " + std::to_string(refunded) + " refunded (" +
                   std::to_string(unclaimed) + " after a transfer)";
    }
    return o;
}

// ---- 10 -----------------------------------------------------------------------

using Criterion = std::function<Outcome()>;

void print(int number, const std::string& name, const Outcome& o) {
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << number << " " << name << ": " << o.detail << std::endl;
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, Criterion>> criteria{
        {"atomicity suite", atomicity_suite},
        {"offline client", offline_client},
        {"threshold enforcement", threshold_enforcement},
        {"batching amortization", batching_amortization},
        {"checkpoint behavior", checkpoint_behavior},
        {"light-client soundness", light_client_soundness},
        {"amm suite", amm_suite},
        {"reward conservation", reward_conservation},
        {"htlc exclusivity", htlc_exclusivity},
    };
    bool all = true;
    std::vector<std::string> transcripts;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail = std::string("exception: ") + e.what();
        }
        print(static_cast<int>(i + 1), criteria[i].first, o);
        all = all && o.pass;
        transcripts.push_back(o.transcript);
    }

    Outcome det;
    std::size_t bytes = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        std::string again;
        try {
            again = criteria[i].second().transcript;
        } catch (const std::exception& e) {
            again = std::string("exception: ") + e.what();
        }
        bytes += again.size();
        det.require(!transcripts[i].empty(), "criterion " + std::to_string(i + 1) + " produced no transcript");
        det.require(again == transcripts[i], "criterion " + std::to_string(i + 1) + " differs on rerun");
    }
    if (det.pass) det.detail = "criteria 1-9 rerun with the same seeds: " + std::to_string(bytes) + " bytes identical";
    print(10, "determinism", det);
    all = all && det.pass;
    return all ? 0 : 1;
}
