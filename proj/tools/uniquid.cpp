#include "uniquid/error.hpp"
#include "uniquid/harness/runners.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace uniquid;
using namespace uniquid::harness;

namespace {

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::string joined(const std::vector<std::string>& lines) {
    std::string out;
    for (const auto& l : lines) out += l + "\n";
    return out;
}

void print_assertions(const Report& r) {
    for (const auto& a : r.assertions) {
        std::cout << (a.pass ? "PASS  " : "FAIL  ") << a.name;
        if (!a.detail.empty()) std::cout << "  (" << a.detail << ")";
        std::cout << "\n";
    }
}

int cmd_run(const fs::path& file, std::optional<std::uint64_t> seed, const fs::path& out_dir) {
    Scenario s = Scenario::load(file);
    if (seed) s.seed = *seed;
    const Report report = run_scenario(s);
    fs::create_directories(out_dir);
    const std::string stem = s.name + ".seed" + std::to_string(s.seed);
    write_file(out_dir / (stem + ".report.json"), report.text());
    write_file(out_dir / (stem + ".decisions.log"), joined(report.decision_log));
    write_file(out_dir / (stem + ".table.tsv"), joined(report.table));
    std::cout << s.name << " (" << s.kind << ", seed " << s.seed << ")\n";
    print_assertions(report);
    std::cout << "trace " << to_hex(report.trace_digest) << "\n";
    std::cout << "report " << (out_dir / (stem + ".report.json")).string() << "\n";
    return report.passed() ? 0 : 1;
}

int cmd_bound(std::uint64_t block_size, std::uint64_t tx_size, double mining_time) {
    ledger::LedgerParams p;
    p.block_size_bytes = block_size;
    p.tx_size_bytes = tx_size;
    p.avg_mining_time_min = mining_time;
    const double v = ledger::theoretical_upper_bound(p);
    std::ostringstream s;
    if (v == std::floor(v) && std::abs(v) < 1e15) {
        s << static_cast<long long>(v);
    } else {
        s << std::setprecision(10) << v;
    }
    std::cout << s.str() << " enrolments/minute\n";
    return 0;
}

int cmd_verify(const fs::path& file) {
    const std::string stored = read_file(file);
    const json j = json::parse(stored);
    if (j.value("schema", std::string()) != kReportSchema) {
        throw Error(ErrorCode::ScenarioConfig, "not a " + std::string(kReportSchema) + " report");
    }
    const Report again = run_scenario(Scenario::from_json(j.at("scenario")));
    const bool same = again.text() == stored;
    std::cout << (same ? "identical" : "differs") << " " << file.string() << "\n";
    print_assertions(again);
    return same && again.passed() ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"UniquID ledger, access control and scenario simulator"};
    app.require_subcommand(1);

    auto* run = app.add_subcommand("run", "Run a scenario file and write its report");
    std::string scenario_file;
    std::optional<std::uint64_t> seed;
    std::string out_dir = "reports";
    run->add_option("scenario", scenario_file, "Scenario JSON file")->required()->check(CLI::ExistingFile);
    run->add_option("--seed", seed, "Override the scenario seed");
    run->add_option("--out", out_dir, "Output directory")->capture_default_str();

    auto* bound = app.add_subcommand("bound", "Enrolment throughput upper bound");
    std::uint64_t block_size = 1'000'000;
    std::uint64_t tx_size = ledger::Transaction::kSize;
    double mining_time = 2.5;
    bound->add_option("--block-size", block_size, "Block size in bytes")->capture_default_str();
    bound->add_option("--tx-size", tx_size, "Transaction size in bytes")->capture_default_str();
    bound->add_option("--mining-time", mining_time, "Average mining time in minutes")->capture_default_str();

    auto* verify = app.add_subcommand("verify", "Re-run a report's scenario and compare byte for byte");
    std::string report_file;
    verify->add_option("report", report_file, "Report JSON file")->required()->check(CLI::ExistingFile);

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return cmd_run(scenario_file, seed, out_dir);
        if (bound->parsed()) return cmd_bound(block_size, tx_size, mining_time);
        if (verify->parsed()) return cmd_verify(report_file);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
