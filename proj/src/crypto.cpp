#include "mercury/crypto.hpp"

#include <mutex>
#include <shared_mutex>
#include <sodium.h>
#include <unordered_map>

namespace mercury::crypto {
namespace {

struct SodiumInit {
    SodiumInit() {
        if (sodium_init() < 0) throw std::runtime_error("libsodium initialization failed");
    }
};

void ensure_sodium() { static SodiumInit once; }

struct KeyBytesHash {
    std::size_t operator()(const std::array<std::uint8_t, 32>& k) const noexcept {
        std::size_t h = 0;
        for (int i = 0; i < 8; ++i) h = (h << 8) | k[i];
        return h;
    }
};

// Ideal signature functionality for the simulated scheme: the registry maps a
// public key to its signing secret so that verification is possible without
// the verifier ever holding the secret. Insert-only and thread-safe, so
// independent scenario runs may share it.
class SimulatedRegistry {
public:
    static SimulatedRegistry& instance() {
        static SimulatedRegistry registry;
        return registry;
    }

    void insert(const std::array<std::uint8_t, 32>& pk, const std::array<std::uint8_t, 32>& sk) {
        std::unique_lock lock(mutex_);
        secrets_.emplace(pk, sk);
    }

    std::optional<std::array<std::uint8_t, 32>> find(const std::array<std::uint8_t, 32>& pk) const {
        std::shared_lock lock(mutex_);
        auto it = secrets_.find(pk);
        if (it == secrets_.end()) return std::nullopt;
        return it->second;
    }

private:
    mutable std::shared_mutex mutex_;
    std::unordered_map<std::array<std::uint8_t, 32>, std::array<std::uint8_t, 32>, KeyBytesHash> secrets_;
};

std::array<std::uint8_t, 32> tagged_hash(std::string_view tag, ByteView a, ByteView b = {}) {
    std::array<std::uint8_t, 32> out{};
    crypto_hash_sha256_state st;
    crypto_hash_sha256_init(&st);
    crypto_hash_sha256_update(&st, reinterpret_cast<const unsigned char*>(tag.data()), tag.size());
    crypto_hash_sha256_update(&st, a.data(), a.size());
    if (!b.empty()) crypto_hash_sha256_update(&st, b.data(), b.size());
    crypto_hash_sha256_final(&st, out.data());
    return out;
}

ByteView first32(const std::array<std::uint8_t, 64>& v) { return ByteView(v.data(), 32); }

}  // namespace

Digest hash(ByteView data) {
    ensure_sodium();
    Digest d;
    crypto_hash_sha256(d.bytes.data(), data.data(), data.size());
    return d;
}

Scheme parse_scheme(std::string_view name) {
    if (name == "simulated") return Scheme::simulated;
    if (name == "ed25519") return Scheme::ed25519;
    throw InvalidArgument("unknown signature scheme: " + std::string(name));
}

std::string_view scheme_name(Scheme scheme) {
    switch (scheme) {
        case Scheme::simulated: return "simulated";
        case Scheme::ed25519: return "ed25519";
    }
    return "unknown";
}

Bytes SecretKey::encoding() const {
    if (scheme == Scheme::simulated) return Bytes(bytes.begin(), bytes.begin() + 32);
    return Bytes(bytes.begin(), bytes.end());
}

KeyPair KeyPair::from_seed(Scheme scheme, const Digest& seed) {
    KeyPair kp;
    kp.public_key.scheme = scheme;
    kp.secret_key.scheme = scheme;
    switch (scheme) {
        case Scheme::simulated: {
            auto sk = tagged_hash("mercury/sim-sk", seed.bytes);
            auto pk = tagged_hash("mercury/sim-pk", sk);
            std::copy(sk.begin(), sk.end(), kp.secret_key.bytes.begin());
            kp.public_key.bytes = pk;
            SimulatedRegistry::instance().insert(pk, sk);
            break;
        }
        case Scheme::ed25519:
            ensure_sodium();
            crypto_sign_seed_keypair(kp.public_key.bytes.data(), kp.secret_key.bytes.data(), seed.bytes.data());
            break;
    }
    return kp;
}

Signature sign(ByteView message, const KeyPair& key) {
    Signature sig;
    sig.signer = key.public_key;
    switch (key.secret_key.scheme) {
        case Scheme::simulated: {
            auto mac = tagged_hash("mercury/sim-sig", first32(key.secret_key.bytes), message);
            std::copy(mac.begin(), mac.end(), sig.bytes.begin());
            break;
        }
        case Scheme::ed25519:
            ensure_sodium();
            crypto_sign_detached(sig.bytes.data(), nullptr, message.data(), message.size(),
                                 key.secret_key.bytes.data());
            break;
    }
    return sig;
}

bool verify(ByteView message, const Signature& sig, const PublicKey& key) {
    switch (key.scheme) {
        case Scheme::simulated: {
            auto sk = SimulatedRegistry::instance().find(key.bytes);
            if (!sk) return false;
            auto mac = tagged_hash("mercury/sim-sig", *sk, message);
            if (!std::equal(mac.begin(), mac.end(), sig.bytes.begin())) return false;
            for (std::size_t i = 32; i < sig.bytes.size(); ++i) {
                if (sig.bytes[i] != 0) return false;
            }
            return true;
        }
        case Scheme::ed25519:
            ensure_sodium();
            return crypto_sign_verify_detached(sig.bytes.data(), message.data(), message.size(),
                                               key.bytes.data()) == 0;
    }
    return false;
}

std::set<PublicKey> MultiSignature::signers() const {
    std::set<PublicKey> out;
    for (const auto& s : signatures) out.insert(s.signer);
    return out;
}

std::vector<PublicKey> valid_signers(const MultiSignature& ms, const std::vector<PublicKey>& authorized) {
    std::set<PublicKey> allowed(authorized.begin(), authorized.end());
    std::set<PublicKey> seen;
    for (const auto& sig : ms.signatures) {
        if (!allowed.contains(sig.signer) || seen.contains(sig.signer)) continue;
        if (verify(ms.message_digest, sig, sig.signer)) seen.insert(sig.signer);
    }
    return {seen.begin(), seen.end()};
}

bool multisig_verify(const MultiSignature& ms, const std::vector<PublicKey>& authorized, std::uint32_t m) {
    if (m == 0) return false;
    return valid_signers(ms, authorized).size() >= m;
}

void encode(Encoder& enc, const PublicKey& key) {
    enc.u64(static_cast<std::uint64_t>(key.scheme));
    enc.fixed(key.bytes);
}

PublicKey decode_public_key(Decoder& dec) {
    PublicKey key;
    auto scheme = dec.u64();
    if (scheme != 1 && scheme != 2) throw DecodeError("unknown key scheme");
    key.scheme = static_cast<Scheme>(scheme);
    key.bytes = dec.fixed<32>();
    return key;
}

void encode(Encoder& enc, const Signature& sig) {
    encode(enc, sig.signer);
    enc.fixed(sig.bytes);
}

Signature decode_signature(Decoder& dec) {
    Signature sig;
    sig.signer = decode_public_key(dec);
    sig.bytes = dec.fixed<64>();
    return sig;
}

void encode(Encoder& enc, const MultiSignature& ms) {
    encode(enc, ms.message_digest);
    enc.u64(ms.threshold);
    enc.u64(ms.signatures.size());
    for (const auto& s : ms.signatures) encode(enc, s);
}

MultiSignature decode_multisig(Decoder& dec) {
    MultiSignature ms;
    ms.message_digest = decode_digest(dec);
    ms.threshold = static_cast<std::uint32_t>(dec.u64());
    auto n = dec.u64();
    if (n > 4096) throw DecodeError("multisig too large");
    for (std::uint64_t i = 0; i < n; ++i) ms.signatures.push_back(decode_signature(dec));
    return ms;
}

Address address_of(const PublicKey& key) {
    Encoder enc;
    enc.str("mercury/address");
    encode(enc, key);
    Digest d = hash(enc);
    Address addr;
    std::copy_n(d.bytes.begin(), addr.bytes.size(), addr.bytes.begin());
    return addr;
}

Digest AttestationQuote::body_digest() const {
    Encoder enc;
    enc.str("mercury/quote");
    encode(enc, enclave_id);
    encode(enc, program_digest);
    encode(enc, enclave_public_key);
    return hash(enc);
}

Manufacturer::Manufacturer(Scheme scheme, const Digest& seed)
    : root_(KeyPair::from_seed(scheme, seed)), scheme_(scheme) {}

AttestationQuote Manufacturer::attest(const Digest& enclave_id, const Digest& program_digest,
                                      const PublicKey& enclave_public_key) const {
    AttestationQuote q{enclave_id, program_digest, enclave_public_key, {}};
    q.endorsement = sign(q.body_digest(), root_);
    return q;
}

KeyPair Manufacturer::provision_key(const Digest& enclave_id) const {
    Encoder enc;
    enc.str("mercury/tee-master");
    enc.fixed(root_.secret_key.bytes);
    encode(enc, enclave_id);
    return KeyPair::from_seed(scheme_, hash(enc));
}

bool verify_quote(const AttestationQuote& quote, const PublicKey& root_key) {
    return quote.endorsement.signer == root_key && verify(quote.body_digest(), quote.endorsement, root_key);
}

void encode(Encoder& enc, const AttestationQuote& quote) {
    encode(enc, quote.enclave_id);
    encode(enc, quote.program_digest);
    encode(enc, quote.enclave_public_key);
    encode(enc, quote.endorsement);
}

AttestationQuote decode_quote(Decoder& dec) {
    AttestationQuote q;
    q.enclave_id = decode_digest(dec);
    q.program_digest = decode_digest(dec);
    q.enclave_public_key = decode_public_key(dec);
    q.endorsement = decode_signature(dec);
    return q;
}

}  // namespace mercury::crypto
