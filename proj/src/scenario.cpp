#include <fstream>
#include <random>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "mercury/harness.hpp"

namespace mercury::harness {

using enclave::FilterAction;
using enclave::MessageClass;

std::string_view action_kind_name(ClientAction::Kind k) {
    switch (k) {
        case ClientAction::Kind::deposit: return "deposit";
        case ClientAction::Kind::offline: return "offline";
        case ClientAction::Kind::challenge: return "challenge";
        case ClientAction::Kind::resolve: return "resolve";
        case ClientAction::Kind::htlc: return "htlc";
    }
    return "unknown";
}

std::string_view fault_action_name(FaultSpec::Action a) {
    switch (a) {
        case FaultSpec::Action::crash: return "crash";
        case FaultSpec::Action::suspend: return "suspend";
        case FaultSpec::Action::resume: return "resume";
        case FaultSpec::Action::policy: return "policy";
        case FaultSpec::Action::clear: return "clear";
    }
    return "unknown";
}

void Scenario::validate() const {
    auto fail = [](const std::string& what) { throw InvalidArgument("scenario: " + what); };
    if (operators == 0 || operators % 2 == 0) fail("operator count must be odd (n = 2f+1)");
    const auto& t = timing;
    if (t.delta_s == 0 || t.delta_t == 0 || t.delta_e == 0) fail("delays must be at least one tick");
    if (t.tau_c < 2 * t.delta_s + 2 * t.delta_e + t.delta_t) fail("tau_c must be at least 2*delta_s + 2*delta_e + delta_t");
    if (t.tau_w <= 2 * t.delta_s + t.delta_e) fail("tau_w must exceed 2*delta_s + delta_e");
    if (t.tau_w <= t.margin()) fail("tau_w must exceed the transfer deadline margin");
    if (effective_timelock() <= t.margin()) fail("htlc timelock must exceed the transfer deadline margin");
    if (batching.max_batch == 0 || batching.onchain_batch == 0 || batching.checkpoint_batch_size == 0) {
        fail("batch sizes must be positive");
    }
    if (pool.x == 0 || pool.y == 0) fail("pool reserves must be positive");
    if (horizon == 0) fail("horizon must be positive");
    if (election_base <= heartbeat) fail("election timeout must exceed the heartbeat");
    for (const auto* c : {&source, &target}) {
        if (c->committee_size == 0) fail("committee size must be positive");
        if (c->rotation_period == 0) fail("rotation period must be positive");
        if (c->committee_threshold.den == 0 || 2 * c->committee_threshold.num <= c->committee_threshold.den ||
            c->committee_threshold.num > c->committee_threshold.den) {
            fail("committee threshold must lie in (1/2, 1]");
        }
    }
    for (const auto& f : faults) {
        if (f.target == FaultSpec::Target::one && f.index >= operators) fail("fault targets a missing operator");
    }
    for (const auto& c : clients) {
        if (c.name.empty()) fail("clients need a name");
        if (c.count == 0) fail("client count must be positive");
        std::size_t deposits = 0;
        for (const auto& a : c.script) {
            if (a.kind == ClientAction::Kind::deposit) {
                if (mode != enclave::Mode::challenge) fail("deposit actions need challenge mode");
                if (a.value == 0) fail("deposit value must be positive");
                deposits++;
            }
            if (a.kind == ClientAction::Kind::htlc && mode != enclave::Mode::htlc) fail("htlc actions need htlc mode");
            if ((a.kind == ClientAction::Kind::challenge || a.kind == ClientAction::Kind::resolve) &&
                a.deposit >= deposits) {
                fail("challenge or resolve names a deposit not made earlier in the script");
            }
        }
    }
    if (random_faults.enabled && random_faults.generator != "FaultGenV1") fail("unknown fault generator");
}

namespace {

template <class T>
T get_or(const YAML::Node& n, const char* key, T fallback) {
    return n && n[key] ? n[key].as<T>() : fallback;
}

Rational rational_or(const YAML::Node& n, const char* key, Rational fallback) {
    return n && n[key] ? Rational::parse(n[key].as<std::string>()) : fallback;
}

ChainSpec parse_chain(const YAML::Node& n) {
    ChainSpec c;
    if (!n) return c;
    c.committee_size = get_or<std::uint32_t>(n, "committee_size", c.committee_size);
    c.rotation_period = get_or<Tick>(n, "rotation_period", c.rotation_period);
    c.committee_threshold = rational_or(n, "threshold", c.committee_threshold);
    if (n["scheme"]) c.scheme = crypto::parse_scheme(n["scheme"].as<std::string>());
    return c;
}

ClientAction::Kind parse_action_kind(const std::string& s) {
    for (auto k : {ClientAction::Kind::deposit, ClientAction::Kind::offline, ClientAction::Kind::challenge,
                   ClientAction::Kind::resolve, ClientAction::Kind::htlc}) {
        if (action_kind_name(k) == s) return k;
    }
    throw InvalidArgument("unknown client action " + s);
}

FaultSpec::Action parse_fault_action(const std::string& s) {
    for (auto a : {FaultSpec::Action::crash, FaultSpec::Action::suspend, FaultSpec::Action::resume,
                   FaultSpec::Action::policy, FaultSpec::Action::clear}) {
        if (fault_action_name(a) == s) return a;
    }
    throw InvalidArgument("unknown fault action " + s);
}

FilterAction parse_policy(const YAML::Node& n) {
    auto kind = get_or<std::string>(n, "policy", "deliver");
    if (kind == "deliver") return FilterAction::deliver();
    if (kind == "drop") return FilterAction::drop();
    if (kind == "delay") return FilterAction::delay(get_or<Tick>(n, "ticks", 1));
    if (kind == "replay") return FilterAction::replay(get_or<std::uint32_t>(n, "count", 1));
    throw InvalidArgument("unknown filter policy " + kind);
}

}  // namespace

Scenario parse_scenario(const std::string& text) {
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::Exception& e) {
        throw InvalidArgument(std::string("scenario is not valid YAML: ") + e.what());
    }
    Scenario s;
    try {
        s.name = get_or<std::string>(root, "name", s.name);
        s.seed = get_or<std::uint64_t>(root, "seed", s.seed);
        auto mode = get_or<std::string>(root, "mode", "challenge");
        if (mode == "challenge") {
            s.mode = enclave::Mode::challenge;
        } else if (mode == "htlc") {
            s.mode = enclave::Mode::htlc;
        } else {
            throw InvalidArgument("unknown mode " + mode);
        }
        s.operators = get_or<std::uint32_t>(root, "operators", s.operators);
        if (auto t = root["timing"]) {
            s.timing.delta_s = get_or<Tick>(t, "delta_s", s.timing.delta_s);
            s.timing.delta_t = get_or<Tick>(t, "delta_t", s.timing.delta_t);
            s.timing.delta_e = get_or<Tick>(t, "delta_e", s.timing.delta_e);
            s.timing.tau_c = get_or<Tick>(t, "tau_c", s.timing.tau_c);
            s.timing.tau_w = get_or<Tick>(t, "tau_w", s.timing.tau_w);
        }
        if (auto c = root["chains"]) {
            s.source = parse_chain(c["S"]);
            s.target = parse_chain(c["T"]);
        }
        if (auto p = root["pool"]) {
            s.pool.x = get_or<Amount>(p, "x", s.pool.x);
            s.pool.y = get_or<Amount>(p, "y", s.pool.y);
            s.pool.fee = get_or<Amount>(p, "fee", s.pool.fee);
            s.pool.lp_fraction = rational_or(p, "lp_fraction", s.pool.lp_fraction);
        }
        if (auto b = root["batching"]) {
            s.batching.max_batch = get_or<std::size_t>(b, "max_batch", s.batching.max_batch);
            s.batching.onchain_batch = get_or<std::size_t>(b, "onchain_batch", s.batching.onchain_batch);
            s.batching.checkpoint_batch_size =
                get_or<std::size_t>(b, "checkpoint_batch_size", s.batching.checkpoint_batch_size);
            s.batching.checkpoint_period = get_or<Tick>(b, "checkpoint_period", s.batching.checkpoint_period);
        }
        if (auto r = root["raft"]) {
            s.election_base = get_or<Tick>(r, "election_base", s.election_base);
            s.election_step = get_or<Tick>(r, "election_step", s.election_step);
            s.heartbeat = get_or<Tick>(r, "heartbeat", s.heartbeat);
        }
        s.htlc_timelock = get_or<Tick>(root, "htlc_timelock", s.htlc_timelock);
        s.horizon = get_or<Tick>(root, "horizon", s.horizon);
        s.registration_lag = get_or<std::uint64_t>(root, "registration_lag", s.registration_lag);

        for (const auto& c : root["clients"]) {
            ClientSpec spec;
            spec.name = c["name"].as<std::string>();
            spec.balance = get_or<Amount>(c, "balance", spec.balance);
            spec.count = get_or<std::uint32_t>(c, "count", spec.count);
            spec.automatic = get_or<bool>(c, "automatic", spec.automatic);
            for (const auto& a : c["script"]) {
                ClientAction act;
                act.kind = parse_action_kind(a["action"].as<std::string>());
                act.at = get_or<Tick>(a, "at", 0);
                act.value = get_or<Amount>(a, "value", 0);
                act.ticks = get_or<Tick>(a, "ticks", 0);
                act.deposit = get_or<std::size_t>(a, "deposit", 0);
                spec.script.push_back(act);
            }
            s.clients.push_back(std::move(spec));
        }
        for (const auto& f : root["faults"]) {
            FaultSpec fault;
            fault.at = get_or<Tick>(f, "at", 0);
            auto target = get_or<std::string>(f, "target", "all");
            if (target == "all") {
                fault.target = FaultSpec::Target::all;
            } else if (target == "leader") {
                fault.target = FaultSpec::Target::leader;
            } else {
                fault.target = FaultSpec::Target::one;
                fault.index = static_cast<std::uint32_t>(std::stoul(target));
            }
            fault.action = parse_fault_action(f["action"].as<std::string>());
            if (fault.action == FaultSpec::Action::policy) {
                fault.message_class = enclave::parse_class(f["class"].as<std::string>());
                fault.policy = parse_policy(f);
            }
            s.faults.push_back(fault);
        }
        if (auto r = root["random_faults"]) {
            s.random_faults.enabled = get_or<bool>(r, "enabled", true);
            s.random_faults.generator = get_or<std::string>(r, "generator", s.random_faults.generator);
            s.random_faults.events = get_or<std::uint32_t>(r, "events", s.random_faults.events);
            s.random_faults.window = get_or<Tick>(r, "window", s.random_faults.window);
        }
    } catch (const YAML::Exception& e) {
        throw InvalidArgument(std::string("malformed scenario: ") + e.what());
    } catch (const std::logic_error& e) {
        throw InvalidArgument(std::string("malformed scenario: ") + e.what());
    }
    s.validate();
    return s;
}

Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidArgument("cannot open scenario file " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_scenario(buf.str());
}

std::vector<FaultSpec> fault_gen_v1(std::uint64_t seed, std::uint32_t operators, const RandomFaults& spec,
                                    const enclave::Timing& timing) {
    // Draws use plain modulo on mt19937_64 output so the schedule depends only
    // on the seed, not on the standard library's distribution algorithms.
    std::mt19937_64 rng(seed ^ 0x4661756c7447656eULL);
    auto draw = [&](std::uint64_t bound) { return bound == 0 ? 0 : rng() % bound; };
    const std::uint32_t f = (operators - 1) / 2;
    const Tick max_outage = 2 * timing.tau_w;
    std::uint32_t crashes = 0;
    std::vector<FaultSpec> out;
    auto heal_policy = [&](Tick at, std::uint32_t index, MessageClass c) {
        FaultSpec h;
        h.at = at;
        h.target = FaultSpec::Target::one;
        h.index = index;
        h.action = FaultSpec::Action::policy;
        h.message_class = c;
        h.policy = FilterAction::deliver();
        out.push_back(h);
    };
    for (std::uint32_t e = 0; e < spec.events; ++e) {
        Tick at = draw(spec.window + 1);
        Tick lasting = 1 + draw(max_outage);
        auto kind = draw(5);
        if (kind == 0 && crashes >= f) kind = 1;
        switch (kind) {
            case 0: {
                FaultSpec c;
                c.at = at;
                c.target = FaultSpec::Target::leader;
                c.action = FaultSpec::Action::crash;
                out.push_back(c);
                crashes++;
                break;
            }
            case 1: {
                FaultSpec down;
                down.at = at;
                down.target = FaultSpec::Target::all;
                down.action = FaultSpec::Action::suspend;
                FaultSpec up = down;
                up.at = at + lasting;
                up.action = FaultSpec::Action::resume;
                out.push_back(down);
                out.push_back(up);
                break;
            }
            case 2: {
                // Withhold chain events from a random subset of hosts.
                std::uint32_t k = 1 + static_cast<std::uint32_t>(draw(operators));
                std::uint32_t first = static_cast<std::uint32_t>(draw(operators));
                for (std::uint32_t j = 0; j < k; ++j) {
                    std::uint32_t i = (first + j) % operators;
                    FaultSpec w;
                    w.at = at;
                    w.index = i;
                    w.action = FaultSpec::Action::policy;
                    w.message_class = MessageClass::chain_event;
                    w.policy = FilterAction::drop();
                    out.push_back(w);
                    heal_policy(at + lasting, i, MessageClass::chain_event);
                }
                break;
            }
            case 3: {
                std::uint32_t i = static_cast<std::uint32_t>(draw(operators));
                FaultSpec d;
                d.at = at;
                d.index = i;
                d.action = FaultSpec::Action::policy;
                d.message_class = MessageClass::consensus;
                d.policy = FilterAction::delay(1 + draw(5));
                out.push_back(d);
                heal_policy(at + lasting, i, MessageClass::consensus);
                break;
            }
            default: {
                static constexpr MessageClass kReplayable[] = {MessageClass::consensus, MessageClass::client_request,
                                                               MessageClass::chain_submission,
                                                               MessageClass::chain_header};
                std::uint32_t i = static_cast<std::uint32_t>(draw(operators));
                MessageClass c = kReplayable[draw(4)];
                FaultSpec r;
                r.at = at;
                r.index = i;
                r.action = FaultSpec::Action::policy;
                r.message_class = c;
                r.policy = FilterAction::replay(1 + static_cast<std::uint32_t>(draw(3)));
                out.push_back(r);
                heal_policy(at + lasting, i, c);
                break;
            }
        }
    }
    std::stable_sort(out.begin(), out.end(), [](const FaultSpec& a, const FaultSpec& b) { return a.at < b.at; });
    return out;
}

Scenario random_scenario_v1(std::uint64_t seed) {
    std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ULL + 1);
    auto draw = [&](std::uint64_t bound) { return bound == 0 ? 0 : rng() % bound; };
    Scenario s;
    s.name = "random-v1-" + std::to_string(seed);
    s.seed = seed;
    s.operators = 3 + 2 * static_cast<std::uint32_t>(seed % 3);
    s.pool.fee = draw(2) == 0 ? 0 : 10;
    s.batching.max_batch = 1 + draw(8);
    s.batching.onchain_batch = 1 + draw(4);
    s.batching.checkpoint_batch_size = 1 + draw(4);
    s.batching.checkpoint_period = 20 + draw(40);
    s.horizon = 4000;
    const Tick tau = s.timing.tau_c + s.timing.tau_w;
    const Tick gaps[] = {0, s.timing.tau_c, tau, 1 + draw(2 * tau)};
    std::uint32_t clients = 1 + static_cast<std::uint32_t>(draw(3));
    for (std::uint32_t c = 0; c < clients; ++c) {
        ClientSpec spec;
        spec.name = "client" + std::to_string(c);
        spec.balance = 10'000'000;
        std::uint32_t deposits = 1 + static_cast<std::uint32_t>(draw(2));
        for (std::uint32_t d = 0; d < deposits; ++d) {
            ClientAction dep;
            dep.kind = ClientAction::Kind::deposit;
            dep.at = draw(80);
            dep.value = 1000 + draw(50'000);
            spec.script.push_back(dep);
        }
        std::stable_sort(spec.script.begin(), spec.script.end(),
                         [](const ClientAction& a, const ClientAction& b) { return a.at < b.at; });
        if (draw(4) == 0) {
            // Griefing: challenge the first deposit whether or not it was paid.
            ClientAction grief;
            grief.kind = ClientAction::Kind::challenge;
            grief.at = spec.script.back().at + s.timing.tau_c + draw(s.timing.tau_c);
            grief.deposit = 0;
            spec.script.push_back(grief);
        }
        if (draw(3) == 0) {
            ClientAction off;
            off.kind = ClientAction::Kind::offline;
            off.at = spec.script.back().at + 1;
            off.ticks = gaps[draw(4)];
            if (off.ticks > 0) spec.script.push_back(off);
        }
        s.clients.push_back(std::move(spec));
    }
    s.random_faults.enabled = true;
    s.random_faults.events = 1 + static_cast<std::uint32_t>(draw(4));
    s.random_faults.window = 100;
    s.validate();
    return s;
}

Scenario offline_client_scenario(Tick gap, bool operators_down, std::uint64_t seed) {
    Scenario s;
    s.name = "offline-gap-" + std::to_string(gap) + (operators_down ? "-down" : "-up");
    s.seed = seed;
    s.operators = 3 + 2 * static_cast<std::uint32_t>(seed % 3);
    s.horizon = 2 * gap + 1500;
    ClientSpec c;
    c.name = "alice";
    ClientAction dep;
    dep.kind = ClientAction::Kind::deposit;
    dep.at = 5;
    dep.value = 10'000 + 1000 * (seed % 7);
    ClientAction off;
    off.kind = ClientAction::Kind::offline;
    off.at = 5 + s.timing.delta_s + 1;
    off.ticks = gap;
    c.script = {dep};
    if (gap > 0) c.script.push_back(off);
    s.clients.push_back(c);
    if (operators_down) {
        FaultSpec down;
        down.at = 0;
        down.target = FaultSpec::Target::all;
        down.action = FaultSpec::Action::suspend;
        FaultSpec up = down;
        up.at = s.timing.tau_c + 2 * s.timing.tau_w;
        up.action = FaultSpec::Action::resume;
        s.faults = {down, up};
    }
    s.validate();
    return s;
}

}  // namespace mercury::harness
