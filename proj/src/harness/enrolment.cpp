#include "uniquid/harness/runners.hpp"

#include "uniquid/contracts/state.hpp"
#include "uniquid/error.hpp"
#include "uniquid/node/ledger_service.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <iomanip>
#include <queue>
#include <sstream>

namespace uniquid::harness {

namespace {

using contracts::AnnouncedIdentity;
using contracts::Identity;
using netsim::Simulator;

[[noreturn]] void bad(const std::string& what) { throw Error(ErrorCode::ScenarioConfig, what); }

double mean_latency_ms(const netsim::LatencyModel& m) {
    if (m.kind == netsim::LatencyModel::Kind::Uniform) return static_cast<double>(m.a + m.b) / 2.0;
    return static_cast<double>(m.a);
}

double jittered(Rng& rng, double mean, double jitter) {
    return mean * (1.0 + jitter * (2.0 * rng.uniform01() - 1.0));
}

std::string fixed(double v, int digits = 6) {
    std::ostringstream out;
    out << std::fixed << std::setprecision(digits) << v;
    return out.str();
}

struct Announce {
    std::size_t index = 0;
    AnnouncedIdentity identity;
};

struct IdRecord {
    std::size_t client = 0;
    double generation_ms = 0;
    SimTime generated_at = 0;
    std::optional<SimTime> announced_at;
    std::optional<Hash256> digest;
    bool acked = false;
};

struct EnrolmentConfig {
    std::size_t clients = 7;
    std::size_t identities = 1000;
    std::size_t cap = 5;
    double generation_ms = 6.61;
    double generation_jitter = 0.1;
    double service_ms = 0;
    double service_jitter = 0.5;
    SimTime submit_retry_ms = 5'000;
    SimTime horizon_ms = 7LL * 24 * 60 * ledger::kMillisPerMinute;
};

struct Outcome {
    std::vector<IdRecord> ids;
    std::vector<std::optional<SimTime>> included;
    std::vector<std::pair<std::uint32_t, SimTime>> blocks;  // (tx count, mined at)
    std::vector<std::size_t> peak_channels;
    std::size_t imprinted = 0;
    SimTime makespan = 0;
    std::size_t submissions = 0;
    Hash256 trace_digest;
};

Outcome simulate(const Scenario& s, const EnrolmentConfig& cfg) {
    Simulator sim(s.seed);
    node::LedgerService ledger(sim, node::LedgerServiceConfig{s.ledger, false});

    std::map<std::string, netsim::EndpointId> names{{"ledger", ledger.endpoint()}};
    std::vector<netsim::EndpointId> clients;
    for (std::size_t c = 0; c < cfg.clients; ++c) {
        const std::string name = "client-" + std::to_string(c);
        clients.push_back(sim.add_endpoint(name, cfg.cap));
        names.emplace(name, clients.back());
    }
    const netsim::EndpointId imprinter_ep = sim.add_endpoint("imprinter");
    names.emplace("imprinter", imprinter_ep);
    apply_links(sim, s, names);
    sim.load_schedule(resolve_partitions(s, names));

    Rng setup(sim.rng().next_u64());
    const Identity manufacturer = Identity::generate(setup);
    contracts::Imprinter imprinter(Identity::generate(setup));
    const contracts::ContractState imprinter_view;

    Outcome out;
    out.ids.resize(cfg.identities);
    out.included.resize(cfg.identities);
    std::unordered_map<Hash256, std::size_t> by_digest;
    std::unordered_map<std::uint64_t, std::size_t> by_request;
    std::uint64_t next_request = 1;

    ledger.on_block([&](const ledger::Block& block, SimTime at) {
        out.blocks.emplace_back(static_cast<std::uint32_t>(block.txs.size()), at);
        for (const auto& tx : block.txs) {
            auto it = by_digest.find(tx.digest());
            if (it == by_digest.end() || out.included[it->second]) continue;
            out.included[it->second] = at;
            ++out.imprinted;
            out.makespan = at;
        }
        if (out.imprinted == cfg.identities) ledger.stop();
    });

    std::function<void(std::size_t, const ledger::Transaction&)> submit;
    submit = [&](std::size_t index, const ledger::Transaction& tx) {
        if (out.ids[index].acked) return;
        const std::uint64_t rid = next_request++;
        by_request.emplace(rid, index);
        ++out.submissions;
        sim.send(imprinter_ep, ledger.endpoint(), std::string(node::msg::kSubmit),
                 node::msg::Submit{rid, tx});
        sim.schedule_in(cfg.submit_retry_ms, {}, [&submit, index, tx] { submit(index, tx); });
    };

    sim.set_handler(imprinter_ep, [&](const netsim::Message& m) {
        if (m.kind == "announce") {
            const auto& a = m.as<Announce>();
            IdRecord& rec = out.ids[a.index];
            if (rec.announced_at) return;
            rec.announced_at = sim.now();
            auto tx = imprinter.imprint(a.identity, manufacturer.public_key(), imprinter_view);
            rec.digest = tx.digest();
            by_digest.emplace(tx.digest(), a.index);
            submit(a.index, tx);
        } else if (m.kind == node::msg::kSubmitAck) {
            const auto& ack = m.as<node::msg::SubmitAck>();
            auto it = by_request.find(ack.request_id);
            if (it != by_request.end() && ack.accepted) out.ids[it->second].acked = true;
        }
    });

    const auto split = split_identities(cfg.identities, cfg.clients);
    std::size_t index = 0;
    for (std::size_t c = 0; c < cfg.clients; ++c) {
        Rng client_rng(sim.rng().next_u64());
        double clock = 0;
        for (std::size_t k = 0; k < split[c]; ++k, ++index) {
            const double duration = jittered(client_rng, cfg.generation_ms, cfg.generation_jitter);
            clock += duration;
            IdRecord& rec = out.ids[index];
            rec.client = c;
            rec.generation_ms = duration;
            rec.generated_at = std::llround(clock);
            const std::uint64_t key_seed = client_rng.next_u64();
            const std::size_t i = index;
            const netsim::EndpointId from = clients[c];
            sim.schedule_at(rec.generated_at, {}, [&, i, from, key_seed] {
                Rng key_rng(key_seed);
                AnnouncedIdentity device = AnnouncedIdentity::of(Identity::generate(key_rng));
                sim.open_channel(from, imprinter_ep, [&, i, from, device](netsim::ChannelId ch) {
                    const auto hold = std::llround(jittered(sim.rng(), cfg.service_ms, cfg.service_jitter));
                    sim.schedule_in(hold, {}, [&, i, from, device, ch] {
                        sim.send(from, imprinter_ep, "announce", Announce{i, device});
                        sim.close_channel(ch);
                    });
                });
            });
        }
    }

    ledger.start();
    sim.run(cfg.horizon_ms);

    for (auto ep : clients) out.peak_channels.push_back(netsim::peak_open_channels(sim, ep));
    out.trace_digest = sim.trace_digest();
    return out;
}

EnrolmentConfig config_from(const Scenario& s) {
    EnrolmentConfig cfg;
    auto positive = [&](const std::string& key, std::int64_t fallback) {
        const auto v = workload_int(s, key, fallback);
        if (v < 1) bad(key + " must be at least 1");
        return static_cast<std::size_t>(v);
    };
    cfg.clients = positive("clients", 7);
    cfg.identities = positive("identities", 1000);
    cfg.cap = positive("channel_cap", 5);
    cfg.generation_ms = workload_number(s, "generation_ms", 6.61);
    cfg.generation_jitter = workload_number(s, "generation_jitter", 0.1);
    cfg.service_jitter = workload_number(s, "service_jitter", 0.5);
    cfg.submit_retry_ms = workload_int(s, "submit_retry_ms", 5'000);
    cfg.horizon_ms = static_cast<SimTime>(workload_number(s, "horizon_min", 7.0 * 24 * 60) *
                                          ledger::kMillisPerMinute);
    if (!(cfg.generation_ms > 0)) bad("generation_ms must be positive");
    for (double j : {cfg.generation_jitter, cfg.service_jitter}) {
        if (!(j >= 0 && j < 1)) bad("jitter must lie in [0, 1)");
    }
    if (cfg.submit_retry_ms < 1) bad("submit_retry_ms must be positive");

    const bool has_service = s.workload.contains("service_time_min");
    const bool has_target = s.workload.contains("fit_announce_mean_min");
    if (has_service == has_target) {
        bad("workload needs exactly one of service_time_min and fit_announce_mean_min");
    }
    if (has_service) {
        cfg.service_ms = workload_number(s, "service_time_min") * ledger::kMillisPerMinute;
        if (!(cfg.service_ms > 0)) bad("service_time_min must be positive");
    } else {
        cfg.service_ms = fit_service_time_ms(split_identities(cfg.identities, cfg.clients), cfg.cap,
                                             cfg.generation_ms, mean_latency_ms(s.default_latency),
                                             workload_number(s, "fit_announce_mean_min"));
    }
    return cfg;
}

ordered_json stats_json(const Stats& st, const char* unit) {
    return {{"mean", st.mean}, {"se", st.se}, {"count", st.count}, {"unit", unit}};
}

} // namespace

std::vector<std::size_t> split_identities(std::size_t identities, std::size_t clients) {
    if (clients == 0) bad("at least one client is required");
    std::vector<std::size_t> out(clients, identities / clients);
    for (std::size_t i = 0; i < identities % clients; ++i) ++out[i];
    return out;
}

double announce_model_mean_min(const std::vector<std::size_t>& ids_per_client, std::size_t cap,
                               double generation_ms, double service_ms, double latency_ms) {
    double total = 0;
    std::size_t count = 0;
    for (std::size_t n : ids_per_client) {
        std::priority_queue<double, std::vector<double>, std::greater<>> free_at;
        for (std::size_t i = 0; i < cap && i < n; ++i) free_at.push(0.0);
        for (std::size_t k = 0; k < n; ++k) {
            const double born = static_cast<double>(k + 1) * generation_ms;
            const double start = std::max(born, free_at.top());
            free_at.pop();
            free_at.push(start + service_ms);
            total += start + service_ms + latency_ms - born;
            ++count;
        }
    }
    return count == 0 ? 0.0 : total / static_cast<double>(count) / ledger::kMillisPerMinute;
}

double fit_service_time_ms(const std::vector<std::size_t>& ids_per_client, std::size_t cap,
                           double generation_ms, double latency_ms, double target_min) {
    auto f = [&](double service) {
        return announce_model_mean_min(ids_per_client, cap, generation_ms, service, latency_ms);
    };
    if (!(target_min > f(0.0))) bad("announce target is below the contention-free floor");
    double lo = 0;
    double hi = target_min * ledger::kMillisPerMinute;
    while (f(hi) < target_min) hi *= 2;
    for (int i = 0; i < 200 && hi - lo > 1e-9; ++i) {
        const double mid = (lo + hi) / 2;
        (f(mid) < target_min ? lo : hi) = mid;
    }
    return (lo + hi) / 2;
}

Report run_enrolment(const Scenario& s) {
    const EnrolmentConfig cfg = config_from(s);
    const double bound = ledger::theoretical_upper_bound(s.ledger);
    const double interval_min = s.ledger.avg_mining_time_min;

    Report report;
    report.scenario = s;
    const Outcome out = simulate(s, cfg);
    report.trace_digest = out.trace_digest;

    std::vector<double> gen;
    std::vector<double> announce;
    std::vector<double> imprint;
    report.table.push_back("index\tclient\tgeneration_ms\tannounce_min\timprint_min\tincluded_min");
    for (std::size_t i = 0; i < out.ids.size(); ++i) {
        const IdRecord& r = out.ids[i];
        gen.push_back(r.generation_ms);
        std::string a = "-";
        std::string m = "-";
        std::string inc = "-";
        if (r.announced_at) {
            const double v = static_cast<double>(*r.announced_at - r.generated_at) / ledger::kMillisPerMinute;
            announce.push_back(v);
            a = fixed(v);
            if (out.included[i]) {
                const double w = static_cast<double>(*out.included[i] - *r.announced_at) / ledger::kMillisPerMinute;
                imprint.push_back(w);
                m = fixed(w);
                inc = fixed(static_cast<double>(*out.included[i]) / ledger::kMillisPerMinute);
            }
        }
        report.table.push_back(std::to_string(i) + "\t" + std::to_string(r.client) + "\t" +
                               fixed(r.generation_ms) + "\t" + a + "\t" + m + "\t" + inc);
    }

    const Stats g = summarize(gen);
    const double makespan_min = static_cast<double>(out.makespan) / ledger::kMillisPerMinute;
    const double sustained = out.makespan > 0 ? static_cast<double>(out.imprinted) / makespan_min : 0.0;
    double peak_block_rate = 0;
    for (const auto& [count, at] : out.blocks) {
        peak_block_rate = std::max(peak_block_rate, static_cast<double>(count) / interval_min);
    }

    ordered_json r;
    r["clients"] = cfg.clients;
    r["identities"] = cfg.identities;
    r["channel_cap"] = cfg.cap;
    r["service_time_min"] = cfg.service_ms / ledger::kMillisPerMinute;
    r["service_time_fitted"] = s.workload.contains("fit_announce_mean_min");
    r["imprinted"] = out.imprinted;
    r["submissions"] = out.submissions;
    r["blocks"] = out.blocks.size();
    r["makespan_min"] = makespan_min;
    r["sustained_rate_per_min"] = sustained;
    r["peak_block_rate_per_min"] = peak_block_rate;
    r["upper_bound_per_min"] = bound;
    ordered_json stages;
    stages["generation"] = stats_json(g, "ms");
    std::optional<Stats> a;
    std::optional<Stats> m;
    if (!announce.empty()) stages["announce"] = stats_json(*(a = summarize(announce)), "min");
    if (!imprint.empty()) stages["imprint"] = stats_json(*(m = summarize(imprint)), "min");
    r["stages"] = stages;
    r["peak_open_channels"] = out.peak_channels;

    report.check("all identities imprinted", out.imprinted == cfg.identities,
                 std::to_string(out.imprinted) + "/" + std::to_string(cfg.identities));
    report.check("sustained rate within upper bound", sustained <= bound,
                 fixed(sustained, 3) + " <= " + fixed(bound, 3));
    report.check("every block within upper bound", peak_block_rate <= bound,
                 fixed(peak_block_rate, 3) + " <= " + fixed(bound, 3));
    const std::size_t peak = out.peak_channels.empty()
                                 ? 0
                                 : *std::max_element(out.peak_channels.begin(), out.peak_channels.end());
    report.check("channel cap respected", peak <= cfg.cap,
                 std::to_string(peak) + " <= " + std::to_string(cfg.cap));

    if (workload_flag(s, "expect_ordering", false)) {
        const double gen_min = g.mean / ledger::kMillisPerMinute;
        const bool ok = a && m && gen_min < m->mean && m->mean < a->mean;
        report.check("generation < imprint < announce", ok,
                     a && m ? fixed(gen_min, 9) + " < " + fixed(m->mean, 3) + " < " + fixed(a->mean, 3)
                            : "stage samples missing");
    }
    if (s.workload.contains("min_rate_per_min")) {
        const double want = workload_number(s, "min_rate_per_min");
        report.check("sustained rate reaches target", sustained >= want,
                     fixed(sustained, 3) + " >= " + fixed(want, 3));
    }
    if (s.workload.contains("max_imprint_min")) {
        const double limit = workload_number(s, "max_imprint_min");
        bool ok = !imprint.empty();
        for (double v : imprint) ok = ok && v > 0 && v <= limit;
        report.check("imprint latency within bound", ok, "(0, " + fixed(limit, 3) + "] min");
    }
    if (s.workload.contains("compare_cap")) {
        EnrolmentConfig other = cfg;
        const auto cap = workload_int(s, "compare_cap");
        if (cap <= static_cast<std::int64_t>(cfg.cap)) bad("compare_cap must exceed channel_cap");
        other.cap = static_cast<std::size_t>(cap);
        const Outcome alt = simulate(s, other);
        const double alt_min = static_cast<double>(alt.makespan) / ledger::kMillisPerMinute;
        r["compare"] = {{"channel_cap", other.cap},
                        {"imprinted", alt.imprinted},
                        {"makespan_min", alt_min},
                        {"sustained_rate_per_min",
                         alt.makespan > 0 ? static_cast<double>(alt.imprinted) / alt_min : 0.0},
                        {"trace_digest", to_hex(alt.trace_digest)}};
        report.check("raising the cap shortens enrolment",
                     alt.imprinted == cfg.identities && alt.makespan < out.makespan,
                     fixed(makespan_min, 3) + " min at cap " + std::to_string(cfg.cap) + " vs " +
                         fixed(alt_min, 3) + " min at cap " + std::to_string(other.cap));
    }
    report.results = std::move(r);
    return report;
}

} // namespace uniquid::harness
