#include <fmt/format.h>

#include <json.hpp>

#include "mercury/harness.hpp"

namespace mercury::harness {

using Json = nlohmann::ordered_json;

std::size_t RunReport::count(std::string_view state) const {
    std::size_t n = 0;
    for (const auto& d : deposits) n += d.state == state ? 1 : 0;
    for (const auto& l : locks) n += l.state == state ? 1 : 0;
    return n;
}

const CallCost* RunReport::cost_of(std::string_view method) const {
    for (const auto& c : costs) {
        if (c.method == method) return &c;
    }
    return nullptr;
}

Format parse_format(std::string_view name) {
    if (name == "json-lines" || name == "jsonl") return Format::json_lines;
    if (name == "table") return Format::table;
    throw InvalidArgument("unknown report format " + std::string(name));
}

namespace {

template <class T>
Json optional_json(const std::optional<T>& v) {
    return v ? Json(*v) : Json(nullptr);
}

Json cost_json(const chain::CostMeter& m) {
    Json j;
    j["storage_writes"] = m.storage_writes;
    j["storage_deletes"] = m.storage_deletes;
    j["sig_verifications"] = m.sig_verifications;
    j["signature_checks"] = m.signature_checks;
    j["hash_ops"] = m.hash_ops;
    return j;
}

}  // namespace

std::string to_json_lines(const RunReport& r) {
    std::string out;
    auto line = [&](Json j) {
        out += j.dump();
        out += '\n';
    };
    Json run;
    run["record"] = "run";
    run["scenario"] = r.scenario;
    run["seed"] = r.seed;
    run["mode"] = r.mode;
    run["operators"] = r.operators;
    run["threshold"] = r.threshold;
    run["ready_at"] = r.ready_at;
    run["ticks"] = r.ticks;
    run["quiescent"] = r.quiescent;
    run["deposits"] = r.deposits.size();
    run["confirmed"] = r.count("confirmed");
    run["refunded"] = r.count("refunded");
    run["pending"] = r.count("pending");
    run["locks"] = r.locks.size();
    run["claimed"] = r.count("claimed");
    run["locked"] = r.count("locked");
    run["elections"] = r.elections;
    run["committed_entries"] = r.committed_entries;
    run["transfers_executed"] = r.transfers_executed;
    run["transfer_batches"] = r.transfer_batches;
    run["checkpoints"] = r.checkpoints;
    run["checkpoint_deletes"] = r.checkpoint_deletes;
    run["checkpoint_sizes"] = r.checkpoint_sizes;
    run["outputs_scanned"] = r.outputs_scanned;
    run["unclaimed_transfers"] = r.unclaimed_transfers;
    run["ok"] = r.ok();
    line(std::move(run));

    for (const auto& d : r.deposits) {
        Json j;
        j["record"] = "deposit";
        j["id"] = d.id;
        j["client"] = d.client;
        j["value"] = d.value;
        j["deposited_at"] = d.deposited_at;
        j["state"] = d.state;
        j["retired_by"] = d.retired_by;
        j["transfer_amount"] = optional_json(d.transfer_amount);
        j["transfer_at"] = optional_json(d.transfer_at);
        j["settled_at"] = optional_json(d.settled_at);
        j["challenge_started_at"] = optional_json(d.challenge_started_at);
        line(std::move(j));
    }
    for (const auto& l : r.locks) {
        Json j;
        j["record"] = "lock";
        j["id"] = l.id;
        j["client"] = l.client;
        j["amount"] = l.amount;
        j["timelock"] = l.timelock;
        j["state"] = l.state;
        j["spent_at"] = optional_json(l.spent_at);
        j["transfer_amount"] = optional_json(l.transfer_amount);
        j["transfer_at"] = optional_json(l.transfer_at);
        line(std::move(j));
    }
    for (const auto& c : r.costs) {
        Json j;
        j["record"] = "cost";
        j["chain"] = c.chain;
        j["method"] = c.method;
        j["calls"] = c.calls;
        j["reverts"] = c.reverts;
        j["cost"] = cost_json(c.cost);
        line(std::move(j));
    }
    for (const auto& [name, ok] : r.verdicts) {
        Json j;
        j["record"] = "verdict";
        j["property"] = name;
        j["holds"] = ok;
        line(std::move(j));
    }
    for (const auto& v : r.violations) {
        Json j;
        j["record"] = "violation";
        j["detail"] = v;
        line(std::move(j));
    }
    return out;
}

std::string to_table(const std::vector<RunReport>& reports) {
    std::string out = fmt::format("{:<32} {:>6} {:>3} {:>3} {:>6} {:>5} {:>5} {:>5} {:>5} {:>6} {:>6} {:>5} {:>5}  {}\n",
                                  "scenario", "seed", "n", "m", "ticks", "conf", "refd", "pend", "locks", "xfers",
                                  "batch", "ckpt", "elect", "verdict");
    for (const auto& r : reports) {
        out += fmt::format("{:<32} {:>6} {:>3} {:>3} {:>6} {:>5} {:>5} {:>5} {:>5} {:>6} {:>6} {:>5} {:>5}  {}\n",
                           r.scenario.size() > 32 ? r.scenario.substr(0, 32) : r.scenario, r.seed, r.operators,
                           r.threshold, r.ticks, r.count("confirmed") + r.count("claimed"), r.count("refunded"),
                           r.count("pending") + r.count("locked"), r.locks.size(), r.transfers_executed,
                           r.transfer_batches, r.checkpoints, r.elections, r.ok() ? "ok" : "VIOLATION");
        for (const auto& v : r.violations) out += fmt::format("    {}\n", v);
    }
    return out;
}

std::string render(const std::vector<RunReport>& reports, Format f) {
    if (f == Format::table) return to_table(reports);
    std::string out;
    for (const auto& r : reports) out += to_json_lines(r);
    return out;
}

}  // namespace mercury::harness
