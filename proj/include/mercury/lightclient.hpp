#pragma once

#include <optional>
#include <variant>
#include <vector>

#include "mercury/chain.hpp"

namespace mercury::lightclient {

using chain::BlockHeader;
using chain::SyncCommittee;
using crypto::Digest;

enum class Reject {
    gap,
    bad_parent,
    timestamp,
    insufficient_signatures,
    committee_unknown,
    committee_mismatch,
    wrong_next_commitment,
    tx_root_mismatch,
    empty_bundle,
};

std::string_view reject_name(Reject r);

struct Outcome {
    bool accepted = false;
    Reject reason = Reject::gap;

    static Outcome ok() { return {true, Reject::gap}; }
    static Outcome fail(Reject r) { return {false, r}; }
};

enum class Inclusion { included, not_included, unknown_height };

struct LightClientConfig {
    std::uint32_t committee_size = 16;
    Rational committee_threshold{2, 3};
    Tick rotation_period = 64;
    /// Headers kept from the bootstrap window.
    std::uint64_t lag_bound = 32;

    static LightClientConfig from_chain(const chain::ChainConfig& c, std::uint64_t lag_bound = 32);
    std::uint32_t signature_threshold() const {
        return static_cast<std::uint32_t>(committee_threshold.ceil_mul(committee_size));
    }
};

/// Evidence a host hands an enclave to initialize a light client.
struct BootstrapBundle {
    /// Committees for epochs 0..E, where E is the epoch of the tip header.
    std::vector<SyncCommittee> committees;
    /// For e in 1..E, a header of epoch e-1 whose next_committee_commitment names committee e.
    std::vector<BlockHeader> handoffs;
    /// The latest (up to) k finalized headers, ascending and contiguous.
    std::vector<BlockHeader> headers;
    /// Receipt leaves of each header's block, used to check tx_root.
    std::vector<std::vector<Digest>> block_leaves;
    /// Committee for epoch E+1.
    SyncCommittee next;
};

BootstrapBundle make_bundle(const chain::Chain& chain, std::uint64_t lag_bound);

/// Header-only verifier tracking one chain from a trusted epoch-0 committee
/// commitment. Retains headers since initialization plus two committees.
class LightClient {
public:
    static std::variant<LightClient, Reject> bootstrap(const LightClientConfig& config, const Digest& genesis_commitment,
                                                       const BootstrapBundle& bundle);

    /// Appends the next finalized header. At an epoch boundary the header must
    /// be signed by the committee named in the previous epoch; `committee`
    /// supplies it when it has not been offered yet.
    Outcome ingest_header(const BlockHeader& header, const std::optional<SyncCommittee>& committee = std::nullopt);

    /// Records the committee for the next epoch if it matches the commitment.
    bool offer_committee(const SyncCommittee& committee);

    Inclusion verify_inclusion(const chain::InclusionProof& proof) const;

    std::uint64_t first_height() const { return headers_.front().height; }
    std::uint64_t tip_height() const { return headers_.back().height; }
    const BlockHeader& tip() const { return headers_.back(); }
    const BlockHeader* header(std::uint64_t height) const;
    const SyncCommittee& current_committee() const { return current_; }
    const std::optional<SyncCommittee>& next_committee() const { return next_; }
    const Digest& next_commitment() const { return next_commitment_; }
    bool needs_committee() const { return !next_.has_value(); }

    /// Retained headers plus committees.
    std::size_t state_size() const { return headers_.size() + 1 + (next_ ? 1 : 0); }

private:
    LightClient() = default;

    std::uint64_t epoch_of(std::uint64_t height) const { return height / config_.rotation_period; }

    LightClientConfig config_;
    std::vector<BlockHeader> headers_;
    SyncCommittee current_;
    std::optional<SyncCommittee> next_;
    Digest next_commitment_;
};

/// Distinct committee members whose signature verifies over the header's signing root.
std::uint32_t count_committee_signatures(const BlockHeader& header, const SyncCommittee& committee);

}  // namespace mercury::lightclient
