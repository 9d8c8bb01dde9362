#pragma once

#include "uniquid/ledger/block.hpp"
#include "uniquid/netsim/simulator.hpp"
#include "uniquid/node/protocol.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace uniquid::harness {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;
using netsim::SimTime;

struct Stats {
    double mean = 0;
    double se = 0;  // sample standard deviation / sqrt(n); 0 for one sample
    std::size_t count = 0;
};

// Throws Error(EmptyStats) on an empty input.
Stats summarize(std::span<const double> samples);

struct LinkSpec {
    std::string a;
    std::string b;
    netsim::LatencyModel latency;
};

struct CutSpec {
    std::string label;
    std::vector<std::string> side_a;
    std::vector<std::string> side_b;
    SimTime start = 0;
    SimTime end = netsim::kForever;
};

struct NodeSpec {
    std::string name;
    std::string role;
    node::NodePolicy policy;
};

// Everything a run depends on. A scenario plus its seed pins the run.
struct Scenario {
    std::string name;
    std::string kind;
    std::uint64_t seed = 1;
    ledger::LedgerParams ledger;
    netsim::LatencyModel default_latency = netsim::LatencyModel::constant(20);
    std::vector<LinkSpec> links;
    std::vector<CutSpec> partitions;
    std::vector<NodeSpec> roster;
    json workload = json::object();

    // Throw Error(ScenarioConfig) on a missing, mistyped or out-of-range field.
    static Scenario from_json(const json& j);
    static Scenario load(const std::filesystem::path& path);
    [[nodiscard]] ordered_json to_json() const;

    [[nodiscard]] const NodeSpec* find_node(const std::string& name) const;
};

inline constexpr std::string_view kReportSchema = "uniquid-report/1";

struct Assertion {
    std::string name;
    bool pass = false;
    std::string detail;
};

struct Report {
    Scenario scenario;
    ordered_json results = ordered_json::object();
    std::vector<Assertion> assertions;
    Hash256 trace_digest;
    std::vector<std::string> decision_log;
    // Tab-separated rows, header first; written next to the report.
    std::vector<std::string> table;

    void check(std::string name, bool pass, std::string detail = {});
    [[nodiscard]] bool passed() const;
    [[nodiscard]] ordered_json to_json() const;
    // Canonical text: two-space indented JSON plus a trailing newline.
    [[nodiscard]] std::string text() const;
};

// Workload field readers; all throw Error(ScenarioConfig).
double workload_number(const Scenario& s, const std::string& key, std::optional<double> fallback = {});
std::int64_t workload_int(const Scenario& s, const std::string& key,
                          std::optional<std::int64_t> fallback = {});
bool workload_flag(const Scenario& s, const std::string& key, bool fallback);

// Resolves named cut sides to endpoints. Throws Error(ScenarioConfig) for
// unknown names; the simulator validates the schedule itself.
netsim::PartitionSchedule resolve_partitions(const Scenario& s,
                                             const std::map<std::string, netsim::EndpointId>& names);
void apply_links(netsim::Simulator& sim, const Scenario& s,
                 const std::map<std::string, netsim::EndpointId>& names);

} // namespace uniquid::harness
