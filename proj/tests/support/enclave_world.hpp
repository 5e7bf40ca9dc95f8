#pragma once

#include <algorithm>
#include <map>
#include <memory>

#include "mercury/enclave.hpp"

namespace mercury::testing {

/// Two chains, their vaults and n enclaves wired with per-host filters.
/// Smaller than the harness: no clients of its own and no invariant checks.
struct EnclaveWorld {
    using Digest = crypto::Digest;

    struct Node {
        std::unique_ptr<enclave::Enclave> enclave;
        enclave::HostFilter filter;
        Address addr;
        std::multimap<Tick, enclave::Input> inbox;
        std::vector<enclave::Output> outputs;
    };

    enclave::Timing timing;
    Amount pool_x = 1'000'000;
    Amount pool_y = 2'500'000'000;
    chain::Chain s;
    chain::Chain t;
    crypto::Manufacturer manufacturer;
    Address vault_s_addr = Address::from_label("vault:S");
    Address vault_t_addr = Address::from_label("vault:T");
    std::shared_ptr<vault::Vault> vault_s;
    std::shared_ptr<vault::Vault> vault_t;
    Digest group_secret;
    std::vector<Node> nodes;
    std::vector<enclave::ClientReply> replies;
    Tick now = 0;

    static chain::ChainConfig chain_cfg(const std::string& id, Tick delta, std::uint64_t seed) {
        chain::ChainConfig c;
        c.chain_id = id;
        c.finality_delay = delta;
        c.committee_size = 4;
        c.rotation_period = 16;
        c.seed = seed;
        return c;
    }

    static Digest label(std::string_view what, std::uint64_t seed, std::uint64_t i = 0) {
        Encoder e;
        e.str("enclave-world");
        e.str(what);
        e.u64(seed);
        e.u64(i);
        return crypto::hash(e);
    }

    explicit EnclaveWorld(std::uint32_t n, std::uint64_t seed = 1)
        : s(chain_cfg("S", 3, seed)),
          t(chain_cfg("T", 3, seed + 1)),
          manufacturer(crypto::Scheme::simulated, label("mfr", seed)),
          group_secret(label("group", seed)) {
        vault::VaultConfig vs;
        vs.chain_id = "S";
        vs.program_digest = enclave::program_digest();
        vs.manufacturer_root = manufacturer.root_key();
        vs.challenge_window = timing.tau_w;
        vault::VaultConfig vt = vs;
        vt.chain_id = "T";
        const Address lp = Address::from_label("lp");
        vt.lp_shares = {{lp, pool_y}};
        vault_s = std::make_shared<vault::Vault>(vs);
        vault_t = std::make_shared<vault::Vault>(vt);
        s.deploy(vault_s_addr, vault_s);
        t.deploy(vault_t_addr, vault_t);
        t.mint(lp, pool_y);
        t.submit_tx(lp, pool_y, vault::calls::fund(vault_t_addr), now);
        while (now <= timing.delta_t) advance();

        enclave::ProgramConfig cfg;
        cfg.vault_s = vault_s_addr;
        cfg.vault_t = vault_t_addr;
        cfg.timing = timing;
        cfg.pool_x = pool_x;
        cfg.pool_y = pool_y;
        cfg.raft.cluster_size = n;
        cfg.lc_source = lightclient::LightClientConfig::from_chain(s.config(), 32);
        cfg.lc_target = lightclient::LightClientConfig::from_chain(t.config(), 32);
        cfg.genesis_source = s.committee(0).commitment();
        cfg.genesis_target = t.committee(0).commitment();
        cfg.manufacturer_root = manufacturer.root_key();

        std::vector<enclave::PeerInfo> peers;
        for (std::uint32_t i = 0; i < n; ++i) {
            auto c = cfg;
            c.raft.self = i;
            Node node;
            node.enclave = std::make_unique<enclave::Enclave>(c, manufacturer, label("eid", seed, i), group_secret);
            node.addr = Address::from_label("operator:" + std::to_string(i));
            for (auto* ch : {&s, &t}) {
                if (!node.enclave->bootstrap(ch->id(), lightclient::make_bundle(*ch, 32))) {
                    throw std::runtime_error("bootstrap rejected");
                }
            }
            peers.push_back(node.enclave->peer_info());
            nodes.push_back(std::move(node));
        }
        for (auto& node : nodes) {
            if (node.enclave->join(peers) != peers.size()) throw std::runtime_error("join rejected");
            for (auto [ch, at] : {std::pair{&s, vault_s_addr}, std::pair{&t, vault_t_addr}}) {
                auto reg = node.enclave->registration(ch->id());
                ch->submit_tx(node.addr, 0, vault::calls::register_operator(at, reg.quote, reg.proof, reg.key), now);
            }
        }
        for (int k = 0; k < 4; ++k) advance();
        if (vault_s->operators().size() != n || vault_t->operators().size() != n) {
            throw std::runtime_error("registration failed");
        }
    }

    void advance() {
        ++now;
        s.advance_tick(now);
        t.advance_tick(now);
    }

    /// Hands `out` from node i to its destinations through both filters.
    void route(std::uint32_t i, std::vector<enclave::Output> out) {
        auto& node = nodes[i];
        for (auto& o : out) {
            node.outputs.push_back(o);
            const auto cls = o.message_class();
            for (Tick sent : node.filter.route(cls, now)) {
                if (auto* env = std::get_if<enclave::Envelope>(&o.body)) {
                    auto& dst = nodes.at(env->to);
                    for (Tick at : dst.filter.route(cls, sent + 1)) dst.inbox.emplace(at, *env);
                } else if (auto* sub = std::get_if<enclave::Submission>(&o.body)) {
                    auto& ch = sub->chain == "S" ? s : t;
                    ch.submit_tx(node.addr, sub->value, sub->call, now, sub->dedup_key);
                } else if (auto* r = std::get_if<enclave::ClientReply>(&o.body)) {
                    replies.push_back(*r);
                }
            }
        }
    }

    void deliver(std::uint32_t i, const enclave::Input& in) { route(i, nodes[i].enclave->resume(in, now)); }

    /// Offers every unseen header and body, drains due envelopes, then ticks.
    void step() {
        advance();
        for (std::uint32_t i = 0; i < nodes.size(); ++i) {
            auto& node = nodes[i];
            if (!node.filter.available()) {
                node.inbox.clear();
                continue;
            }
            auto& e = *node.enclave;
            for (auto* ch : {&s, &t}) {
                for (auto h = e.lc_tip(ch->id()) + 1; h <= ch->tip_height(); ++h) {
                    enclave::HeaderInput in{ch->id(), ch->header(h), std::nullopt};
                    if (h % ch->config().rotation_period == 0) in.committee = ch->committee(ch->epoch_of(h));
                    deliver(i, in);
                }
                for (auto h = std::max<std::uint64_t>(e.body_cursor(ch->id()), 1); h <= e.lc_tip(ch->id()); ++h) {
                    const auto& b = ch->block(h);
                    deliver(i, enclave::BlockInput{ch->id(), h, b.txs, b.receipts});
                }
            }
            while (!node.inbox.empty() && node.inbox.begin()->first <= now) {
                auto in = node.inbox.begin()->second;
                node.inbox.erase(node.inbox.begin());
                deliver(i, in);
            }
            route(i, e.tick(now));
        }
    }

    void run(Tick ticks) {
        for (Tick k = 0; k < ticks; ++k) step();
    }

    struct Deposit {
        Digest id;
        Digest tx;
    };

    Deposit deposit(const Address& who, Amount v) {
        s.mint(who, v);
        auto sub = s.submit_tx(who, v, vault::calls::deposit(vault_s_addr), now);
        if (!sub.accepted) throw std::runtime_error("deposit rejected");
        while (!s.receipt(sub.tx_id)) step();
        return {s.receipt(sub.tx_id)->events.at(0).get<Digest>("id"), sub.tx_id};
    }

    enclave::ClientRequest request(const Deposit& d, const crypto::KeyPair& signer, const Address& sender,
                                   const Address& receiver) const {
        enclave::ExchangeRequest req{d.id, sender, "T", receiver};
        return enclave::make_client_request(req, signer, *s.transaction(d.tx), *s.receipt(d.tx),
                                            *s.prove_inclusion(d.tx));
    }

    void broadcast(const enclave::Input& in) {
        for (std::uint32_t i = 0; i < nodes.size(); ++i) {
            for (Tick at : nodes[i].filter.route(enclave::input_class(in), now)) nodes[i].inbox.emplace(at, in);
        }
    }
};

}  // namespace mercury::testing
