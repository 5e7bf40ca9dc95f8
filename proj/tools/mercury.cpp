#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "mercury/harness.hpp"

using namespace mercury;
using namespace mercury::harness;

namespace {

struct Common {
    std::optional<std::uint64_t> seed;
    std::string report_path;
    std::string format = "table";
};

/// Writes json-lines to --report when given and the chosen format to stdout.
void emit(const Common& opt, const std::vector<RunReport>& reports) {
    if (!opt.report_path.empty()) {
        std::ofstream out(opt.report_path);
        if (!out) throw InvalidArgument("cannot write report to " + opt.report_path);
        out << render(reports, Format::json_lines);
    }
    std::cout << render(reports, parse_format(opt.format));
}

bool clean(const std::vector<RunReport>& reports) {
    return std::all_of(reports.begin(), reports.end(), [](const RunReport& r) { return r.ok(); });
}

std::vector<std::uint64_t> parse_values(const std::string& text) {
    std::vector<std::uint64_t> out;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto comma = text.find(',', pos);
        auto token = text.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
        if (!token.empty()) out.push_back(std::stoull(token));
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    if (out.empty()) throw InvalidArgument("--values needs a comma-separated list");
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Deterministic cross-chain exchange simulator"};
    app.require_subcommand(1);
    Common opt;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--seed", opt.seed, "Override the scenario seed");
        sub->add_option("--report", opt.report_path, "Write json-lines records to this file");
        sub->add_option("--format", opt.format, "Output format")->check(CLI::IsMember({"json-lines", "table"}));
    };

    std::string scenario_path;
    auto* run_cmd = app.add_subcommand("run", "Run one scenario file");
    run_cmd->add_option("scenario", scenario_path, "Scenario file")->required();
    add_common(run_cmd);

    std::string template_path, axis, values;
    auto* sweep_cmd = app.add_subcommand("sweep", "Run a scenario once per axis value");
    sweep_cmd->add_option("template", template_path, "Scenario template")->required();
    sweep_cmd->add_option("--axis", axis, "operators | batch_size | onchain_batch | checkpoint_batch_size")->required();
    sweep_cmd->add_option("--values", values, "Comma-separated values")->required();
    add_common(sweep_cmd);

    std::uint64_t seeds = 500;
    auto* check_cmd = app.add_subcommand("check", "Randomized atomicity and offline-client property suite");
    check_cmd->add_option("--seeds", seeds, "Randomized scenarios, seeds 1..N");
    add_common(check_cmd);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run_cmd) {
            auto sc = load_scenario(scenario_path);
            if (opt.seed) sc.seed = *opt.seed;
            std::vector<RunReport> reports{run(sc)};
            emit(opt, reports);
            return clean(reports) ? 0 : 1;
        }
        if (*sweep_cmd) {
            auto sc = load_scenario(template_path);
            if (opt.seed) sc.seed = *opt.seed;
            auto vals = parse_values(values);
            auto reports = sweep(sc, axis, vals);
            emit(opt, reports);
            if (axis == "onchain_batch") {
                std::cout << "\nbatch_length  transfers  sig_verifications/tx  storage_writes/tx\n";
                for (const auto& a : amortization_table(reports, vals)) {
                    std::cout << a.batch_length << "  " << a.transfers << "  " << a.sig_verifications_per_tx << "  "
                              << a.storage_writes_per_tx << "\n";
                }
            }
            return clean(reports) ? 0 : 1;
        }
        std::vector<RunReport> reports;
        const std::uint64_t base = opt.seed.value_or(0);
        for (std::uint64_t s = 1; s <= seeds; ++s) reports.push_back(run(random_scenario_v1(base + s)));
        const auto& t = enclave::Timing{};
        for (Tick gap : {Tick{0}, t.tau_c, t.tau_c + t.tau_w, 10 * (t.tau_c + t.tau_w)}) {
            for (bool down : {false, true}) reports.push_back(run(offline_client_scenario(gap, down, base + 1)));
        }
        emit(opt, reports);
        std::size_t bad = 0;
        for (const auto& r : reports) bad += r.ok() ? 0 : 1;
        std::cout << reports.size() << " runs, " << bad << " with violations\n";
        return bad == 0 ? 0 : 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
