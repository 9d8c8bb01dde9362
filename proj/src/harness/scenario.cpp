#include "uniquid/harness/scenario.hpp"

#include "uniquid/error.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

namespace uniquid::harness {

namespace {

[[noreturn]] void bad(const std::string& what) { throw Error(ErrorCode::ScenarioConfig, what); }

const json& field(const json& j, const std::string& key) {
    if (!j.is_object() || !j.contains(key)) bad("missing field '" + key + "'");
    return j.at(key);
}

template <typename T>
T read(const json& j, const std::string& key, std::optional<T> fallback = {}) {
    if (!j.is_object() || !j.contains(key) || j.at(key).is_null()) {
        if (fallback) return *fallback;
        bad("missing field '" + key + "'");
    }
    const json& v = j.at(key);
    if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) bad("field '" + key + "' must be a string");
    } else if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) bad("field '" + key + "' must be a boolean");
    } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) bad("field '" + key + "' must be an integer");
        if constexpr (std::is_unsigned_v<T>) {
            if (v.get<std::int64_t>() < 0 && !v.is_number_unsigned()) {
                bad("field '" + key + "' must be non-negative");
            }
        }
    } else {
        if (!v.is_number()) bad("field '" + key + "' must be a number");
    }
    return v.get<T>();
}

netsim::LatencyModel latency_from(const json& j) {
    const auto model = read<std::string>(j, "model");
    netsim::LatencyModel m;
    if (model == "constant") {
        m = netsim::LatencyModel::constant(read<SimTime>(j, "ms"));
    } else if (model == "uniform") {
        m = netsim::LatencyModel::uniform(read<SimTime>(j, "min_ms"), read<SimTime>(j, "max_ms"));
        if (m.b < m.a) bad("uniform latency needs min_ms <= max_ms");
    } else if (model == "exponential") {
        m = netsim::LatencyModel::exponential(read<SimTime>(j, "mean_ms"));
    } else {
        bad("unknown latency model '" + model + "'");
    }
    if (m.a < 0) bad("latency must be non-negative");
    return m;
}

ordered_json latency_to(const netsim::LatencyModel& m) {
    using K = netsim::LatencyModel::Kind;
    switch (m.kind) {
    case K::Constant: return {{"model", "constant"}, {"ms", m.a}};
    case K::Uniform: return {{"model", "uniform"}, {"min_ms", m.a}, {"max_ms", m.b}};
    case K::Exponential: return {{"model", "exponential"}, {"mean_ms", m.a}};
    }
    return {};
}

node::NodePolicy policy_from(const json& j) {
    node::NodePolicy p;
    if (!j.is_object()) bad("policy must be an object");
    if (j.contains("threshold_ms")) {
        const json& t = j.at("threshold_ms");
        if (t.is_string() && t.get<std::string>() == "inf") {
            p.freshness_threshold = node::kWaitForever;
        } else if (t.is_number_integer()) {
            p.freshness_threshold = t.get<SimTime>();
        } else {
            bad("threshold_ms must be an integer or \"inf\"");
        }
    }
    if (j.contains("cache_ttl_min") && !j.at("cache_ttl_min").is_null()) {
        p.cache_ttl_min = read<double>(j, "cache_ttl_min");
    }
    p.fetch_retry_ms = read<SimTime>(j, "fetch_retry_ms", p.fetch_retry_ms);
    p.request_deadline_ms = read<SimTime>(j, "request_deadline_ms", p.request_deadline_ms);
    if (j.contains("refresh_interval_ms") && !j.at("refresh_interval_ms").is_null()) {
        p.refresh_interval_ms = read<SimTime>(j, "refresh_interval_ms");
    }
    try {
        p.validate();
    } catch (const Error& e) {
        bad(std::string("policy: ") + e.what());
    }
    return p;
}

ordered_json policy_to(const node::NodePolicy& p) {
    ordered_json j;
    if (p.pure_consistency()) {
        j["threshold_ms"] = "inf";
    } else {
        j["threshold_ms"] = p.freshness_threshold;
    }
    j["cache_ttl_min"] = p.cache_ttl_min ? ordered_json(*p.cache_ttl_min) : ordered_json(nullptr);
    j["fetch_retry_ms"] = p.fetch_retry_ms;
    j["request_deadline_ms"] = p.request_deadline_ms;
    j["refresh_interval_ms"] =
        p.refresh_interval_ms ? ordered_json(*p.refresh_interval_ms) : ordered_json(nullptr);
    return j;
}

std::vector<std::string> names_from(const json& j, const std::string& key) {
    const json& v = field(j, key);
    if (!v.is_array()) bad("field '" + key + "' must be a list of node names");
    std::vector<std::string> out;
    for (const auto& item : v) {
        if (!item.is_string()) bad("field '" + key + "' must be a list of node names");
        out.push_back(item.get<std::string>());
    }
    return out;
}

} // namespace

Stats summarize(std::span<const double> samples) {
    if (samples.empty()) throw Error(ErrorCode::EmptyStats, "no samples to summarize");
    const double n = static_cast<double>(samples.size());
    const double mean = std::accumulate(samples.begin(), samples.end(), 0.0) / n;
    double se = 0;
    if (samples.size() > 1) {
        double ss = 0;
        for (double x : samples) ss += (x - mean) * (x - mean);
        se = std::sqrt(ss / (n - 1)) / std::sqrt(n);
    }
    return {mean, se, samples.size()};
}

Scenario Scenario::from_json(const json& j) {
    if (!j.is_object()) bad("scenario must be a JSON object");
    Scenario s;
    try {
        s.name = read<std::string>(j, "name");
        s.kind = read<std::string>(j, "kind");
        s.seed = read<std::uint64_t>(j, "seed", std::uint64_t{1});

        if (j.contains("ledger")) {
            const json& l = j.at("ledger");
            s.ledger.block_size_bytes = read<std::uint64_t>(l, "block_size_bytes", s.ledger.block_size_bytes);
            s.ledger.tx_size_bytes = read<std::uint64_t>(l, "tx_size_bytes", s.ledger.tx_size_bytes);
            s.ledger.avg_mining_time_min = read<double>(l, "avg_mining_time_min", s.ledger.avg_mining_time_min);
            s.ledger.difficulty_bits = read<unsigned>(l, "difficulty_bits", s.ledger.difficulty_bits);
            try {
                s.ledger.validate();
            } catch (const Error& e) {
                bad(std::string("ledger: ") + e.what());
            }
        }

        if (j.contains("network")) {
            const json& n = j.at("network");
            if (n.contains("latency")) s.default_latency = latency_from(n.at("latency"));
            if (n.contains("links")) {
                for (const auto& l : n.at("links")) {
                    s.links.push_back({read<std::string>(l, "a"), read<std::string>(l, "b"),
                                       latency_from(field(l, "latency"))});
                }
            }
            if (n.contains("partitions")) {
                for (const auto& c : n.at("partitions")) {
                    CutSpec cut;
                    cut.label = read<std::string>(c, "label");
                    cut.side_a = names_from(c, "a");
                    cut.side_b = names_from(c, "b");
                    cut.start = read<SimTime>(c, "start_ms");
                    cut.end = read<SimTime>(c, "end_ms", netsim::kForever);
                    s.partitions.push_back(std::move(cut));
                }
            }
        }

        if (j.contains("nodes")) {
            std::set<std::string> seen;
            for (const auto& n : j.at("nodes")) {
                NodeSpec spec;
                spec.name = read<std::string>(n, "name");
                spec.role = read<std::string>(n, "role", std::string("device"));
                if (n.contains("policy")) spec.policy = policy_from(n.at("policy"));
                if (!seen.insert(spec.name).second) bad("duplicate node name '" + spec.name + "'");
                s.roster.push_back(std::move(spec));
            }
        }

        if (j.contains("workload")) {
            if (!j.at("workload").is_object()) bad("workload must be an object");
            s.workload = j.at("workload");
        }
    } catch (const json::exception& e) {
        bad(std::string("malformed scenario: ") + e.what());
    }
    return s;
}

Scenario Scenario::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) bad("cannot open scenario file " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        bad("scenario file is not valid JSON: " + std::string(e.what()));
    }
    return from_json(j);
}

ordered_json Scenario::to_json() const {
    ordered_json j;
    j["name"] = name;
    j["kind"] = kind;
    j["seed"] = seed;
    j["ledger"] = {{"block_size_bytes", ledger.block_size_bytes},
                   {"tx_size_bytes", ledger.tx_size_bytes},
                   {"avg_mining_time_min", ledger.avg_mining_time_min},
                   {"difficulty_bits", ledger.difficulty_bits}};
    ordered_json net;
    net["latency"] = latency_to(default_latency);
    net["links"] = ordered_json::array();
    for (const auto& l : links) {
        net["links"].push_back({{"a", l.a}, {"b", l.b}, {"latency", latency_to(l.latency)}});
    }
    net["partitions"] = ordered_json::array();
    for (const auto& c : partitions) {
        net["partitions"].push_back(
            {{"label", c.label},
             {"a", c.side_a},
             {"b", c.side_b},
             {"start_ms", c.start},
             {"end_ms", c.end == netsim::kForever ? ordered_json(nullptr) : ordered_json(c.end)}});
    }
    j["network"] = std::move(net);
    j["nodes"] = ordered_json::array();
    for (const auto& n : roster) {
        j["nodes"].push_back({{"name", n.name}, {"role", n.role}, {"policy", policy_to(n.policy)}});
    }
    j["workload"] = ordered_json::parse(workload.dump());
    return j;
}

const NodeSpec* Scenario::find_node(const std::string& node_name) const {
    for (const auto& n : roster) {
        if (n.name == node_name) return &n;
    }
    return nullptr;
}

void Report::check(std::string assertion, bool pass, std::string detail) {
    assertions.push_back({std::move(assertion), pass, std::move(detail)});
}

bool Report::passed() const {
    for (const auto& a : assertions) {
        if (!a.pass) return false;
    }
    return true;
}

ordered_json Report::to_json() const {
    ordered_json j;
    j["schema"] = kReportSchema;
    j["hash"] = kHashName;
    j["signature"] = kSignatureName;
    j["scenario"] = scenario.to_json();
    j["results"] = results;
    j["assertions"] = ordered_json::array();
    for (const auto& a : assertions) {
        j["assertions"].push_back({{"name", a.name}, {"pass", a.pass}, {"detail", a.detail}});
    }
    j["decision_log"] = decision_log;
    j["trace_digest"] = to_hex(trace_digest);
    j["passed"] = passed();
    return j;
}

std::string Report::text() const { return to_json().dump(2) + "\n"; }

double workload_number(const Scenario& s, const std::string& key, std::optional<double> fallback) {
    try {
        return read<double>(s.workload, key, fallback);
    } catch (const json::exception& e) {
        bad(key + ": " + e.what());
    }
}

std::int64_t workload_int(const Scenario& s, const std::string& key,
                          std::optional<std::int64_t> fallback) {
    try {
        return read<std::int64_t>(s.workload, key, fallback);
    } catch (const json::exception& e) {
        bad(key + ": " + e.what());
    }
}

bool workload_flag(const Scenario& s, const std::string& key, bool fallback) {
    return read<bool>(s.workload, key, fallback);
}

netsim::PartitionSchedule resolve_partitions(const Scenario& s,
                                             const std::map<std::string, netsim::EndpointId>& names) {
    auto lookup = [&](const std::string& n) {
        auto it = names.find(n);
        if (it == names.end()) bad("partition names unknown node '" + n + "'");
        return it->second;
    };
    netsim::PartitionSchedule out;
    for (const auto& c : s.partitions) {
        netsim::PartitionCut cut;
        cut.label = c.label;
        for (const auto& n : c.side_a) cut.side_a.push_back(lookup(n));
        for (const auto& n : c.side_b) cut.side_b.push_back(lookup(n));
        cut.start = c.start;
        cut.end = c.end;
        out.push_back(std::move(cut));
    }
    return out;
}

void apply_links(netsim::Simulator& sim, const Scenario& s,
                 const std::map<std::string, netsim::EndpointId>& names) {
    sim.set_default_link({s.default_latency, true});
    for (const auto& l : s.links) {
        auto a = names.find(l.a);
        auto b = names.find(l.b);
        if (a == names.end() || b == names.end()) bad("link names an unknown node");
        sim.set_link(a->second, b->second, {l.latency, true});
    }
}

} // namespace uniquid::harness
