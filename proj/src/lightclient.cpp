#include "mercury/lightclient.hpp"

#include <set>

namespace mercury::lightclient {

std::string_view reject_name(Reject r) {
    switch (r) {
        case Reject::gap: return "gap";
        case Reject::bad_parent: return "bad_parent";
        case Reject::timestamp: return "timestamp";
        case Reject::insufficient_signatures: return "insufficient_signatures";
        case Reject::committee_unknown: return "committee_unknown";
        case Reject::committee_mismatch: return "committee_mismatch";
        case Reject::wrong_next_commitment: return "wrong_next_commitment";
        case Reject::tx_root_mismatch: return "tx_root_mismatch";
        case Reject::empty_bundle: return "empty_bundle";
    }
    return "unknown";
}

LightClientConfig LightClientConfig::from_chain(const chain::ChainConfig& c, std::uint64_t lag_bound) {
    return LightClientConfig{c.committee_size, c.committee_threshold, c.rotation_period, lag_bound};
}

std::uint32_t count_committee_signatures(const BlockHeader& header, const SyncCommittee& committee) {
    std::set<crypto::PublicKey> members(committee.validator_keys.begin(), committee.validator_keys.end());
    std::set<crypto::PublicKey> counted;
    Digest root = header.signing_root();
    for (const auto& sig : header.committee_signatures) {
        if (!members.contains(sig.signer) || counted.contains(sig.signer)) continue;
        if (crypto::verify(root, sig, sig.signer)) counted.insert(sig.signer);
    }
    return static_cast<std::uint32_t>(counted.size());
}

BootstrapBundle make_bundle(const chain::Chain& chain, std::uint64_t lag_bound) {
    BootstrapBundle b;
    std::uint64_t tip = chain.tip_height();
    std::uint64_t epoch = chain.epoch_of(tip);
    for (std::uint64_t e = 0; e <= epoch; ++e) b.committees.push_back(chain.committee(e));
    b.handoffs = chain.handoff_headers(epoch);
    std::uint64_t first = tip + 1 > lag_bound ? tip + 1 - lag_bound : 0;
    for (std::uint64_t h = first; h <= tip; ++h) {
        b.headers.push_back(chain.header(h));
        std::vector<Digest> leaves;
        for (const auto& r : chain.block(h).receipts) leaves.push_back(r.leaf);
        b.block_leaves.push_back(std::move(leaves));
    }
    b.next = chain.committee(epoch + 1);
    return b;
}

std::variant<LightClient, Reject> LightClient::bootstrap(const LightClientConfig& config,
                                                         const Digest& genesis_commitment,
                                                         const BootstrapBundle& bundle) {
    if (bundle.headers.empty() || bundle.committees.empty()) return Reject::empty_bundle;
    if (bundle.block_leaves.size() != bundle.headers.size()) return Reject::tx_root_mismatch;
    std::uint32_t threshold = config.signature_threshold();
    auto epoch_of = [&](std::uint64_t h) { return h / config.rotation_period; };

    // Committee chain from the trusted anchor.
    if (bundle.committees[0].epoch != 0 || bundle.committees[0].commitment() != genesis_commitment) {
        return Reject::committee_mismatch;
    }
    if (bundle.handoffs.size() + 1 != bundle.committees.size()) return Reject::committee_unknown;
    for (std::size_t e = 1; e < bundle.committees.size(); ++e) {
        const BlockHeader& h = bundle.handoffs[e - 1];
        if (epoch_of(h.height) != e - 1 || bundle.committees[e].epoch != e) return Reject::committee_mismatch;
        if (count_committee_signatures(h, bundle.committees[e - 1]) < threshold) {
            return Reject::insufficient_signatures;
        }
        if (h.next_committee_commitment != bundle.committees[e].commitment()) return Reject::committee_mismatch;
    }

    // The header window: contiguous, tx_roots consistent, each signed by its epoch's committee.
    for (std::size_t i = 0; i < bundle.headers.size(); ++i) {
        const BlockHeader& h = bundle.headers[i];
        if (i > 0) {
            const BlockHeader& p = bundle.headers[i - 1];
            if (h.height != p.height + 1) return Reject::gap;
            if (h.parent_digest != p.digest()) return Reject::bad_parent;
            if (h.timestamp <= p.timestamp) return Reject::timestamp;
        }
        if (merkle::root(bundle.block_leaves[i]) != h.tx_root) return Reject::tx_root_mismatch;
        std::uint64_t e = epoch_of(h.height);
        if (e >= bundle.committees.size()) return Reject::committee_unknown;
        if (count_committee_signatures(h, bundle.committees[e]) < threshold) return Reject::insufficient_signatures;
        if (e + 1 < bundle.committees.size() &&
            h.next_committee_commitment != bundle.committees[e + 1].commitment()) {
            return Reject::wrong_next_commitment;
        }
    }
    const BlockHeader& tip = bundle.headers.back();
    std::uint64_t tip_epoch = epoch_of(tip.height);
    if (tip_epoch + 1 != bundle.committees.size()) return Reject::committee_unknown;
    if (bundle.next.epoch != tip_epoch + 1 || bundle.next.commitment() != tip.next_committee_commitment) {
        return Reject::committee_mismatch;
    }

    LightClient lc;
    lc.config_ = config;
    std::size_t keep = std::min<std::size_t>(bundle.headers.size(), std::max<std::uint64_t>(config.lag_bound, 1));
    lc.headers_.assign(bundle.headers.end() - static_cast<std::ptrdiff_t>(keep), bundle.headers.end());
    lc.current_ = bundle.committees.back();
    lc.next_ = bundle.next;
    lc.next_commitment_ = tip.next_committee_commitment;
    return lc;
}

bool LightClient::offer_committee(const SyncCommittee& committee) {
    if (next_) return next_->commitment() == committee.commitment();
    if (committee.epoch != current_.epoch + 1 || committee.commitment() != next_commitment_) return false;
    next_ = committee;
    return true;
}

Outcome LightClient::ingest_header(const BlockHeader& header, const std::optional<SyncCommittee>& committee) {
    const BlockHeader& tip = headers_.back();
    if (header.height != tip.height + 1) return Outcome::fail(Reject::gap);
    if (header.parent_digest != tip.digest()) return Outcome::fail(Reject::bad_parent);
    if (header.timestamp <= tip.timestamp) return Outcome::fail(Reject::timestamp);

    std::uint32_t threshold = config_.signature_threshold();
    std::uint64_t e = epoch_of(header.height);
    if (e == current_.epoch) {
        if (count_committee_signatures(header, current_) < threshold) {
            return Outcome::fail(Reject::insufficient_signatures);
        }
        if (header.next_committee_commitment != next_commitment_) return Outcome::fail(Reject::wrong_next_commitment);
        headers_.push_back(header);
        return Outcome::ok();
    }
    if (e != current_.epoch + 1) return Outcome::fail(Reject::committee_unknown);

    // Epoch boundary: verify under the committee the previous epoch committed to.
    if (!next_) {
        if (!committee) return Outcome::fail(Reject::committee_unknown);
        if (!offer_committee(*committee)) return Outcome::fail(Reject::committee_mismatch);
    } else if (committee && committee->commitment() != next_->commitment()) {
        return Outcome::fail(Reject::committee_mismatch);
    }
    if (count_committee_signatures(header, *next_) < threshold) {
        return Outcome::fail(Reject::insufficient_signatures);
    }
    current_ = std::move(*next_);
    next_.reset();
    next_commitment_ = header.next_committee_commitment;
    headers_.push_back(header);
    return Outcome::ok();
}

const BlockHeader* LightClient::header(std::uint64_t height) const {
    if (height < first_height() || height > tip_height()) return nullptr;
    return &headers_[height - first_height()];
}

Inclusion LightClient::verify_inclusion(const chain::InclusionProof& proof) const {
    const BlockHeader* h = header(proof.height);
    if (h == nullptr) return Inclusion::unknown_height;
    return merkle::fold(proof.leaf, proof.path) == h->tx_root ? Inclusion::included : Inclusion::not_included;
}

}  // namespace mercury::lightclient
