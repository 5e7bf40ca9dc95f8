#include <algorithm>

#include "doctest.h"
#include "mercury/crypto.hpp"
#include "mercury/merkle.hpp"

using namespace mercury;
using namespace mercury::crypto;

namespace {

KeyPair key(Scheme s, int i) {
    Encoder enc;
    enc.str("test-key");
    enc.u64(static_cast<std::uint64_t>(i));
    return KeyPair::from_seed(s, hash(enc));
}

// Reference count: distinct authorized signers with a valid signature.
std::uint32_t count_valid(const MultiSignature& ms, const std::vector<PublicKey>& authorized) {
    std::set<PublicKey> seen;
    for (const auto& s : ms.signatures) {
        if (std::find(authorized.begin(), authorized.end(), s.signer) == authorized.end()) continue;
        if (!verify(ms.message_digest, s, s.signer)) continue;
        seen.insert(s.signer);
    }
    return static_cast<std::uint32_t>(seen.size());
}

}  // namespace

TEST_CASE("hash is deterministic and separates empty from a zero byte") {
    Bytes b{1, 2, 3};
    CHECK(hash(b) == hash(b));
    Bytes empty;
    Bytes zero{0};
    CHECK(hash(empty) != hash(zero));
    // SHA-256 of the empty string.
    CHECK(hash(empty).hex() == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("canonical encoding of (address, amount, timestamp) re-encodes identically") {
    auto a = Address::from_label("alice");
    Encoder e1, e2;
    e1.address(a).u64(1).u64(10);
    e2.address(a).u64(1).u64(10);
    CHECK(hash(e1) == hash(e2));
    Decoder d(e1.view());
    CHECK(d.address() == a);
    CHECK(d.u64() == 1);
    CHECK(d.u64() == 10);
    CHECK(d.done());
}

TEST_CASE("decoder rejects truncated and trailing input") {
    Encoder e;
    e.u64(7).str("x");
    Bytes cut(e.view().begin(), e.view().end() - 1);
    Decoder d(cut);
    d.u64();
    CHECK_THROWS_AS(d.str(), DecodeError);
    Decoder full(e.view());
    full.u64();
    CHECK_THROWS_AS(full.expect_done(), DecodeError);
}

TEST_CASE("sign and verify under both schemes") {
    for (Scheme s : {Scheme::simulated, Scheme::ed25519}) {
        CAPTURE(scheme_name(s));
        auto k1 = key(s, 1);
        auto k2 = key(s, 2);
        Bytes msg{'h', 'i', '!'};
        auto sig = sign(msg, k1);
        CHECK(verify(msg, sig, k1.public_key));
        CHECK(verify(msg, sig, k1.public_key) == verify(msg, sig, k1.public_key));
        CHECK_FALSE(verify(msg, sig, k2.public_key));
        for (std::size_t i = 0; i < msg.size(); ++i) {
            Bytes m = msg;
            m[i] ^= 1;
            CHECK_FALSE(verify(m, sig, k1.public_key));
        }
        auto bad = sig;
        bad.bytes[5] ^= 0xff;
        CHECK_FALSE(verify(msg, bad, k1.public_key));
    }
}

TEST_CASE("signatures verify under no other key in a small universe") {
    for (Scheme s : {Scheme::simulated, Scheme::ed25519}) {
        std::vector<KeyPair> universe;
        for (int i = 0; i < 8; ++i) universe.push_back(key(s, 100 + i));
        Digest d = hash(std::string_view("universe"));
        for (std::size_t i = 0; i < universe.size(); ++i) {
            auto sig = sign(d, universe[i]);
            for (std::size_t j = 0; j < universe.size(); ++j) {
                CHECK(verify(d, sig, universe[j].public_key) == (i == j));
            }
        }
    }
}

TEST_CASE("cross-scheme keys never verify") {
    auto a = key(Scheme::simulated, 1);
    auto b = key(Scheme::ed25519, 1);
    Digest d = hash(std::string_view("m"));
    CHECK_FALSE(verify(d, sign(d, a), b.public_key));
    CHECK_FALSE(verify(d, sign(d, b), a.public_key));
}

TEST_CASE("multisig threshold examples") {
    std::vector<KeyPair> ops;
    std::vector<PublicKey> auth;
    for (int i = 0; i < 3; ++i) {
        ops.push_back(key(Scheme::simulated, i));
        auth.push_back(ops.back().public_key);
    }
    Digest d = hash(std::string_view("batch"));
    MultiSignature ms{d, {sign(d, ops[0]), sign(d, ops[1])}, 2};
    CHECK(multisig_verify(ms, auth, 2));
    MultiSignature one{d, {sign(d, ops[0])}, 2};
    CHECK_FALSE(multisig_verify(one, auth, 2));
    MultiSignature dup{d, {sign(d, ops[0]), sign(d, ops[0])}, 2};
    CHECK_FALSE(multisig_verify(dup, auth, 2));
    auto outsider = key(Scheme::simulated, 99);
    MultiSignature foreign{d, {sign(d, ops[0]), sign(d, outsider)}, 2};
    CHECK_FALSE(multisig_verify(foreign, auth, 2));
    CHECK_FALSE(multisig_verify(ms, auth, 0));
}

TEST_CASE("multisig agrees with a brute-force count over all signer multisets") {
    // Universe: 7 authorized operators, 1 outsider, plus one corrupted signature.
    for (Scheme s : {Scheme::simulated, Scheme::ed25519}) {
        std::vector<KeyPair> ops;
        std::vector<PublicKey> auth;
        for (int i = 0; i < 7; ++i) {
            ops.push_back(key(s, 10 + i));
            auth.push_back(ops.back().public_key);
        }
        Digest d = hash(std::string_view("subset"));
        std::vector<Signature> pool;
        for (const auto& k : ops) pool.push_back(sign(d, k));
        pool.push_back(sign(d, key(s, 77)));
        Signature broken = sign(d, ops[2]);
        broken.bytes[0] ^= 1;
        pool.push_back(broken);

        const std::size_t P = pool.size();
        // All multisets of size <= 3.
        std::vector<std::vector<std::size_t>> sets{{}};
        for (std::size_t a = 0; a < P; ++a) {
            sets.push_back({a});
            for (std::size_t b = a; b < P; ++b) {
                sets.push_back({a, b});
                for (std::size_t c = b; c < P; ++c) sets.push_back({a, b, c});
            }
        }
        for (const auto& idx : sets) {
            MultiSignature ms{d, {}, 1};
            for (auto i : idx) ms.signatures.push_back(pool[i]);
            std::uint32_t expected = count_valid(ms, auth);
            for (std::uint32_t m = 1; m <= 7; ++m) {
                REQUIRE(multisig_verify(ms, auth, m) == (expected >= m));
            }
            // Monotone: adding any valid authorized signature never flips true to false.
            for (std::uint32_t m = 1; m <= 4; ++m) {
                if (!multisig_verify(ms, auth, m)) continue;
                for (const auto& k : ops) {
                    auto bigger = ms;
                    bigger.signatures.push_back(sign(d, k));
                    REQUIRE(multisig_verify(bigger, auth, m));
                }
            }
        }
    }
}

TEST_CASE("multisig encodes and decodes losslessly") {
    auto k = key(Scheme::ed25519, 3);
    Digest d = hash(std::string_view("enc"));
    MultiSignature ms{d, {sign(d, k)}, 1};
    Encoder e;
    encode(e, ms);
    Decoder dec(e.view());
    auto back = decode_multisig(dec);
    CHECK(back.message_digest == d);
    CHECK(back.signatures == ms.signatures);
    CHECK(back.threshold == 1);
    CHECK(multisig_verify(back, {k.public_key}, 1));
}

TEST_CASE("attestation quotes bind the enclave triple") {
    Manufacturer mfr(Scheme::ed25519, hash(std::string_view("mfr")));
    Digest eid = hash(std::string_view("enclave-1"));
    Digest prog = hash(std::string_view("exchange-program"));
    auto k = mfr.provision_key(eid);
    auto q = mfr.attest(eid, prog, k.public_key);
    CHECK(verify_quote(q, mfr.root_key()));

    auto sub = q;
    sub.enclave_public_key = key(Scheme::ed25519, 5).public_key;
    CHECK_FALSE(verify_quote(sub, mfr.root_key()));
    auto other_prog = q;
    other_prog.program_digest = hash(std::string_view("other-program"));
    CHECK_FALSE(verify_quote(other_prog, mfr.root_key()));
    auto other_id = q;
    other_id.enclave_id = hash(std::string_view("enclave-2"));
    CHECK_FALSE(verify_quote(other_id, mfr.root_key()));

    Manufacturer rogue(Scheme::ed25519, hash(std::string_view("rogue")));
    CHECK_FALSE(verify_quote(rogue.attest(eid, prog, k.public_key), mfr.root_key()));
}

TEST_CASE("merkle paths fold to the root for every leaf count") {
    for (std::size_t n = 1; n <= 17; ++n) {
        std::vector<Digest> leaves;
        for (std::size_t i = 0; i < n; ++i) {
            Encoder e;
            e.u64(i);
            leaves.push_back(hash(e));
        }
        Digest r = merkle::root(leaves);
        for (std::size_t i = 0; i < n; ++i) {
            REQUIRE(merkle::fold(leaves[i], merkle::path(leaves, i)) == r);
            Digest wrong = hash(std::string_view("not-a-leaf"));
            REQUIRE(merkle::fold(wrong, merkle::path(leaves, i)) != r);
        }
    }
}

TEST_CASE("rational parsing and rounding") {
    CHECK(Rational::parse("2/3") == Rational{2, 3});
    CHECK(Rational::parse("0.003") == Rational{3, 1000});
    CHECK(Rational::parse("1") == Rational{1, 1});
    CHECK(Rational{2, 3}.ceil_mul(16) == 11);
    CHECK(Rational{2, 3}.floor_mul(16) == 10);
    CHECK_THROWS_AS(Rational::parse("1/0"), InvalidArgument);
}
