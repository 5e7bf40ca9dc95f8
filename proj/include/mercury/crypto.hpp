#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mercury/common.hpp"
#include "mercury/encoding.hpp"

namespace mercury::crypto {

struct Digest {
    std::array<std::uint8_t, 32> bytes{};

    std::string hex() const { return to_hex(bytes); }
    std::string short_hex() const { return hex().substr(0, 12); }

    auto operator<=>(const Digest&) const = default;
};

/// SHA-256 over the given bytes.
Digest hash(ByteView data);
inline Digest hash(const Encoder& enc) { return hash(enc.view()); }
inline Digest hash(std::string_view text) {
    return hash(ByteView(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

/// Signature schemes are pluggable. `simulated` is a keyed-hash stand-in for
/// the ideal signature functionality (fast, used for large scenario sweeps);
/// `ed25519` uses libsodium.
enum class Scheme : std::uint8_t { simulated = 1, ed25519 = 2 };

Scheme parse_scheme(std::string_view name);
std::string_view scheme_name(Scheme scheme);

struct PublicKey {
    Scheme scheme = Scheme::simulated;
    std::array<std::uint8_t, 32> bytes{};

    std::string hex() const { return to_hex(bytes); }
    auto operator<=>(const PublicKey&) const = default;
};

struct SecretKey {
    Scheme scheme = Scheme::simulated;
    std::array<std::uint8_t, 64> bytes{};

    /// Canonical byte encoding; used by key-confinement scans.
    Bytes encoding() const;
};

struct KeyPair {
    PublicKey public_key;
    SecretKey secret_key;

    /// Deterministic key generation from a 32-byte seed.
    static KeyPair from_seed(Scheme scheme, const Digest& seed);
};

struct Signature {
    std::array<std::uint8_t, 64> bytes{};
    PublicKey signer;

    auto operator<=>(const Signature&) const = default;
};

Signature sign(ByteView message, const KeyPair& key);
inline Signature sign(const Digest& digest, const KeyPair& key) { return sign(digest.bytes, key); }

/// Never throws; malformed or foreign signatures verify false.
bool verify(ByteView message, const Signature& sig, const PublicKey& key);
inline bool verify(const Digest& digest, const Signature& sig, const PublicKey& key) {
    return verify(digest.bytes, sig, key);
}

/// m-of-n multi-signature modeled as a signature set plus threshold.
struct MultiSignature {
    Digest message_digest;
    std::vector<Signature> signatures;
    std::uint32_t threshold = 1;

    /// Keys of signers that appear in the set, deduplicated.
    std::set<PublicKey> signers() const;
};

/// Distinct authorized signers whose signature verifies over message_digest.
std::vector<PublicKey> valid_signers(const MultiSignature& ms, const std::vector<PublicKey>& authorized);

/// True iff at least m distinct authorized signers validly signed
/// ms.message_digest. Unauthorized or duplicate signatures are ignored.
bool multisig_verify(const MultiSignature& ms, const std::vector<PublicKey>& authorized, std::uint32_t m);

void encode(Encoder& enc, const PublicKey& key);
PublicKey decode_public_key(Decoder& dec);
void encode(Encoder& enc, const Signature& sig);
Signature decode_signature(Decoder& dec);
void encode(Encoder& enc, const MultiSignature& ms);
MultiSignature decode_multisig(Decoder& dec);
inline void encode(Encoder& enc, const Digest& d) { enc.fixed(d.bytes); }
inline Digest decode_digest(Decoder& dec) { return Digest{dec.fixed<32>()}; }

/// Address derived from a public key (first 20 bytes of its hash).
Address address_of(const PublicKey& key);

struct AttestationQuote {
    Digest enclave_id;
    Digest program_digest;
    PublicKey enclave_public_key;
    Signature endorsement;

    Digest body_digest() const;
};

/// Simulated TEE manufacturer holding the attestation root key.
class Manufacturer {
public:
    Manufacturer(Scheme scheme, const Digest& seed);

    AttestationQuote attest(const Digest& enclave_id, const Digest& program_digest,
                            const PublicKey& enclave_public_key) const;
    const PublicKey& root_key() const { return root_.public_key; }

    /// Provisions the per-TEE master key pair for a new enclave.
    KeyPair provision_key(const Digest& enclave_id) const;

private:
    KeyPair root_;
    Scheme scheme_;
};

bool verify_quote(const AttestationQuote& quote, const PublicKey& root_key);

void encode(Encoder& enc, const AttestationQuote& quote);
AttestationQuote decode_quote(Decoder& dec);

}  // namespace mercury::crypto
