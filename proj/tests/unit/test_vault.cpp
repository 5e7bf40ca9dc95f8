#include "doctest.h"
#include "vault_fixture.hpp"

using namespace mercury;
using namespace mercury::vault;
using mercury::testing::VaultFixture;

namespace {

std::uint64_t writes(const chain::Receipt& r) { return r.cost.storage_writes; }

vault::VaultConfig cfg_with(Tick window = 20) {
    vault::VaultConfig c;
    c.challenge_window = window;
    c.pledge_floor = 5;
    return c;
}

}  // namespace

TEST_CASE("registration") {
    VaultFixture f(3);
    CHECK(f.vault->operators().size() == 3);
    CHECK(f.vault->threshold() == 2);

    SUBCASE("duplicate key rejected") {
        auto r = f.register_op(f.operators[0], f.program, f.chain.tip_height());
        CHECK_FALSE(r.success);
    }
    SUBCASE("wrong program rejected") {
        auto r = f.register_op(f.key(10), crypto::hash(std::string_view("other")), f.chain.tip_height());
        CHECK_FALSE(r.success);
        CHECK(r.revert_reason.find("program") != std::string::npos);
    }
    SUBCASE("lag bound k") {
        vault::VaultConfig c;
        c.registration_lag = 4;
        VaultFixture g(1, c);
        for (int i = 0; i < 10; ++i) g.tick();
        // Execution sees the current tip as its finalized tip.
        std::uint64_t tip = g.chain.tip_height();
        auto stale = g.register_op(g.key(20), g.program, tip - 4);
        CHECK_FALSE(stale.success);
        CHECK(stale.revert_reason == "stale block proof");
        tip = g.chain.tip_height();
        auto fresh = g.register_op(g.key(21), g.program, tip - 3);
        CHECK(fresh.success);
    }
    SUBCASE("proof signed by another key rejected") {
        auto k = f.key(30);
        auto other = f.key(31);
        auto quote = f.manufacturer.attest(crypto::hash(k.public_key.bytes), f.program, k.public_key);
        BlockProof p;
        p.height = f.chain.tip_height();
        p.header_digest = f.chain.header(p.height).digest();
        p.signature = crypto::sign(block_proof_message("S", p.height, p.header_digest), other);
        auto r = f.run(f.host, 0, calls::register_operator(f.vault_addr, quote, p, k.public_key));
        CHECK_FALSE(r.success);
    }
    SUBCASE("forged quote rejected") {
        crypto::Manufacturer rogue(crypto::Scheme::simulated, crypto::hash(std::string_view("rogue")));
        auto k = f.key(40);
        auto quote = rogue.attest(crypto::hash(k.public_key.bytes), f.program, k.public_key);
        BlockProof p;
        p.height = f.chain.tip_height();
        p.header_digest = f.chain.header(p.height).digest();
        p.signature = crypto::sign(block_proof_message("S", p.height, p.header_digest), k);
        auto r = f.run(f.host, 0, calls::register_operator(f.vault_addr, quote, p, k.public_key));
        CHECK_FALSE(r.success);
    }
}

TEST_CASE("deposit ids and guards") {
    VaultFixture f(3);
    auto alice = Address::from_label("alice");
    f.chain.mint(alice, 10);
    auto r = f.run(alice, 1, calls::deposit(f.vault_addr));
    REQUIRE(r.success);
    Tick ts = f.now;
    auto id = r.events[0].get<crypto::Digest>("id");
    CHECK(id == deposit_id(alice, 1, ts));
    const auto* rec = f.vault->find_deposit(id);
    REQUIRE(rec);
    CHECK_FALSE(rec->under_challenge);
    CHECK_FALSE(rec->confirmed);

    auto zero = f.run(alice, 0, calls::deposit(f.vault_addr));
    CHECK_FALSE(zero.success);

    auto again = f.run(alice, 1, calls::deposit(f.vault_addr));
    REQUIRE(again.success);
    CHECK(again.events[0].get<crypto::Digest>("id") != id);
    CHECK(deposit_id(alice, 1, 10) != deposit_id(alice, 1, 11));

    // Same sender, value and block: the second reverts.
    auto a = f.chain.submit_tx(alice, 2, calls::deposit(f.vault_addr), f.now);
    auto b = f.chain.submit_tx(alice, 2, calls::deposit(f.vault_addr), f.now);
    f.tick();
    CHECK(f.chain.receipt(a.tx_id)->success);
    CHECK_FALSE(f.chain.receipt(b.tx_id)->success);
    CHECK(f.conserved());
}

TEST_CASE("transfer batches") {
    VaultFixture f(3);
    f.fund(10000);
    std::vector<TransferItem> items;
    for (int i = 0; i < 20; ++i) {
        items.push_back({Address::from_label("r" + std::to_string(i)), 10,
                         crypto::hash(std::string_view("dep" + std::to_string(i))), 1000});
    }
    auto r = f.run(f.host, 0, calls::transfer(f.vault_addr, f.batch(items, 1, {0, 2})));
    REQUIRE(r.success);
    CHECK(r.cost.sig_verifications == 1);
    CHECK(writes(r) == 2 * 20 + 2);
    CHECK(f.chain.balance(Address::from_label("r7")) == 10);
    CHECK(f.vault->balance() == 10000 - 200);

    SUBCASE("replayed batch reverts") {
        auto again = f.run(f.host, 0, calls::transfer(f.vault_addr, f.batch(items, 1, {0, 2})));
        CHECK_FALSE(again.success);
    }
    SUBCASE("an already-paid deposit is skipped in a new batch") {
        auto again = f.run(f.host, 0, calls::transfer(f.vault_addr, f.batch({items[0]}, 2, {0, 1})));
        CHECK(again.success);
        CHECK(again.events.front().kind == "TransferSkipped");
        CHECK(f.chain.balance(Address::from_label("r0")) == 10);
    }
    SUBCASE("below threshold reverts") {
        auto low = f.run(f.host, 0, calls::transfer(f.vault_addr, f.batch(items, 3, {1})));
        CHECK_FALSE(low.success);
    }
    SUBCASE("overdrawn batch reverts with balances unchanged") {
        std::vector<TransferItem> big{{Address::from_label("x"), 20000, crypto::hash(std::string_view("big")), 1000}};
        Amount before = f.vault->balance();
        auto over = f.run(f.host, 0, calls::transfer(f.vault_addr, f.batch(big, 4, {0, 1})));
        CHECK_FALSE(over.success);
        CHECK(f.vault->balance() == before);
        CHECK(f.chain.balance(Address::from_label("x")) == 0);
    }
    SUBCASE("expired items are skipped") {
        std::vector<TransferItem> late{{Address::from_label("late"), 5, crypto::hash(std::string_view("late")), 1}};
        auto exp = f.run(f.host, 0, calls::transfer(f.vault_addr, f.batch(late, 5, {0, 1})));
        CHECK(exp.success);
        CHECK(exp.events.front().kind == "TransferExpired");
        CHECK(f.chain.balance(Address::from_label("late")) == 0);
        CHECK_FALSE(f.vault->paid(crypto::hash(std::string_view("late"))));
    }
    SUBCASE("batch for another chain reverts") {
        auto b = f.batch(items, 6, {0, 1});
        b.body.target_chain = "T";
        b.multisig = f.multisig(b.body.digest(), {0, 1});
        CHECK_FALSE(f.run(f.host, 0, calls::transfer(f.vault_addr, b)).success);
    }
    CHECK(f.conserved());
}

TEST_CASE("challenge lifecycle: resolve after the window") {
    VaultFixture f(3, cfg_with(20));
    auto alice = Address::from_label("alice");
    auto id = f.deposit(alice, 1000);
    f.chain.mint(alice, 100);
    CHECK(f.vault->pledge_requirement(1000) == 10);

    auto cheap = f.run(alice, 9, calls::start_challenge(f.vault_addr, id, 1000));
    CHECK_FALSE(cheap.success);
    CHECK(f.chain.balance(alice) == 100);
    auto wrong_value = f.run(alice, 10, calls::start_challenge(f.vault_addr, id, 999));
    CHECK_FALSE(wrong_value.success);

    auto ch = f.run(alice, 10, calls::start_challenge(f.vault_addr, id, 1000));
    REQUIRE(ch.success);
    CHECK(ch.events[0].kind == "Challenge");
    Tick started = f.now;
    CHECK(f.vault->find_deposit(id)->challenge_started_at == started);
    CHECK(f.chain.balance(alice) == 90);
    CHECK_FALSE(f.run(alice, 10, calls::start_challenge(f.vault_addr, id, 1000)).success);

    // Each run executes one tick later.
    while (f.now + 1 < started + 20 - 1) f.tick();
    auto early = f.run(alice, 0, calls::resolve_challenge(f.vault_addr, id));
    CHECK(f.now == started + 20 - 1);
    CHECK_FALSE(early.success);
    auto at = f.run(alice, 0, calls::resolve_challenge(f.vault_addr, id));
    CHECK(f.now == started + 20);
    CHECK_FALSE(at.success);
    auto ok = f.run(alice, 0, calls::resolve_challenge(f.vault_addr, id));
    CHECK(f.now == started + 21);
    REQUIRE(ok.success);
    CHECK(f.chain.balance(alice) == 1100);
    CHECK(f.vault->find_deposit(id) == nullptr);
    CHECK(f.conserved());

    auto unchallenged = f.deposit(alice, 5);
    CHECK_FALSE(f.run(alice, 0, calls::resolve_challenge(f.vault_addr, unchallenged)).success);
}

TEST_CASE("respond_challenge forfeits the pledge") {
    VaultFixture f(3, cfg_with(20));
    auto alice = Address::from_label("alice");
    auto id = f.deposit(alice, 1000);
    f.chain.mint(alice, 50);
    REQUIRE(f.run(alice, 50, calls::start_challenge(f.vault_addr, id, 1000)).success);
    auto d = challenge_digest("S", id);
    CHECK_FALSE(f.run(f.host, 0, calls::respond_challenge(f.vault_addr, id, f.multisig(d, {2}))).success);
    auto r = f.run(f.host, 0, calls::respond_challenge(f.vault_addr, id, f.multisig(d, {1, 2})));
    REQUIRE(r.success);
    CHECK(f.vault->find_deposit(id) == nullptr);
    CHECK(f.vault->accounting().forfeited_in == 50);
    CHECK(f.vault->balance() == 1050);
    CHECK(f.chain.balance(alice) == 0);
    // Record gone: a later resolution or response reverts.
    CHECK_FALSE(f.run(alice, 0, calls::resolve_challenge(f.vault_addr, id)).success);
    CHECK_FALSE(f.run(f.host, 0, calls::respond_challenge(f.vault_addr, id, f.multisig(d, {0, 1}))).success);
    CHECK(f.conserved());
}

TEST_CASE("confirm") {
    VaultFixture f(3, cfg_with(20));
    auto alice = Address::from_label("alice");
    auto id1 = f.deposit(alice, 100);
    auto id2 = f.deposit(alice, 200);
    f.chain.mint(alice, 10);

    SUBCASE("confirmed deposits cannot be challenged") {
        auto unknown = crypto::hash(std::string_view("unknown"));
        std::vector<crypto::Digest> ids{id1, unknown};
        CHECK_FALSE(f.run(f.host, 0, calls::confirm(f.vault_addr, ids, f.multisig(confirm_digest("S", ids), {0}))).success);
        auto r = f.run(f.host, 0, calls::confirm(f.vault_addr, ids, f.multisig(confirm_digest("S", ids), {0, 1})));
        REQUIRE(r.success);
        CHECK(f.vault->find_deposit(id1)->confirmed);
        CHECK_FALSE(f.run(alice, 10, calls::start_challenge(f.vault_addr, id1, 100)).success);
    }
    SUBCASE("confirm voids an active challenge and refunds the pledge") {
        REQUIRE(f.run(alice, 10, calls::start_challenge(f.vault_addr, id2, 200)).success);
        CHECK(f.chain.balance(alice) == 0);
        std::vector<crypto::Digest> ids{id2};
        auto r = f.run(f.host, 0, calls::confirm(f.vault_addr, ids, f.multisig(confirm_digest("S", ids), {1, 2})));
        REQUIRE(r.success);
        CHECK(r.events[0].kind == "ChallengeVoided");
        const auto* rec = f.vault->find_deposit(id2);
        CHECK(rec->confirmed);
        CHECK_FALSE(rec->under_challenge);
        CHECK(f.chain.balance(alice) == 10);
        for (int i = 0; i < 25; ++i) f.tick();
        CHECK_FALSE(f.run(alice, 0, calls::resolve_challenge(f.vault_addr, id2)).success);
    }
    CHECK(f.conserved());
}

TEST_CASE("checkpoints") {
    VaultFixture f(3, cfg_with(50));
    auto alice = Address::from_label("alice");
    std::vector<crypto::Digest> ids;
    for (int i = 0; i < 21; ++i) ids.push_back(f.deposit(alice, 10 + static_cast<Amount>(i)));
    f.chain.mint(alice, 10);
    REQUIRE(f.run(alice, 10, calls::start_challenge(f.vault_addr, ids[5], 15)).success);

    std::vector<crypto::Digest> cp(ids.begin(), ids.begin() + 20);
    CHECK_FALSE(f.run(f.host, 0, calls::update_checkpoint(f.vault_addr, cp, f.multisig(checkpoint_digest("S", cp), {0}))).success);
    auto r = f.run(f.host, 0, calls::update_checkpoint(f.vault_addr, cp, f.multisig(checkpoint_digest("S", cp), {0, 1})));
    REQUIRE(r.success);
    CHECK(r.cost.sig_verifications == 1);
    CHECK(r.cost.storage_deletes == 19);
    CHECK(f.vault->find_deposit(ids[5]) != nullptr);
    CHECK(f.vault->find_deposit(ids[20]) != nullptr);
    CHECK(f.vault->deposits().size() == 2);
    f.chain.mint(alice, 10);
    CHECK_FALSE(f.run(alice, 10, calls::start_challenge(f.vault_addr, ids[0], 10)).success);

    std::vector<crypto::Digest> none;
    CHECK(f.run(f.host, 0, calls::update_checkpoint(f.vault_addr, none, f.multisig(checkpoint_digest("S", none), {1, 2}))).success);
    CHECK(f.conserved());
}

TEST_CASE("transfer rewards go to the first m sorted valid signers and LPs") {
    vault::VaultConfig c;
    c.fee_per_tx = 100;
    c.lp_fraction = Rational{3, 10};
    c.lp_shares = {{Address::from_label("lp1"), 1}, {Address::from_label("lp2"), 1}};
    VaultFixture f(3, c);
    f.fund(1000);
    std::vector<TransferItem> items{{Address::from_label("r"), 10, crypto::hash(std::string_view("d")), 1000}};
    REQUIRE(f.run(f.host, 0, calls::transfer(f.vault_addr, f.batch(items, 1, {0, 1, 2}))).success);
    const auto& rw = f.vault->rewards();
    CHECK(rw.lp_accrued().at(Address::from_label("lp1")) == 15);
    CHECK(rw.operator_accrued().size() == 2);
    for (const auto& [k, v] : rw.operator_accrued()) CHECK(v == 35);
    CHECK(rw.dust() == 0);
}
