#include "uniquid/harness/runners.hpp"

#include "uniquid/contracts/state.hpp"
#include "uniquid/error.hpp"
#include "uniquid/node/ledger_service.hpp"
#include "uniquid/node/node.hpp"

#include <algorithm>
#include <memory>
#include <set>

namespace uniquid::harness {

namespace {

using contracts::AnnouncedIdentity;
using contracts::Identity;
using netsim::Simulator;
using node::AccessDecision;
using node::Basis;
using node::Node;
using node::NodePolicy;
using node::Outcome;

[[noreturn]] void bad(const std::string& what) { throw Error(ErrorCode::ScenarioConfig, what); }

NodePolicy with_threshold(SimTime t) {
    NodePolicy p;
    p.freshness_threshold = t;
    return p;
}

// Ledger, administrator, imprinter and the scenario's devices on one
// simulator. Setup contracts are mined before the clock starts.
struct Stage {
    Simulator sim;
    node::LedgerService ledger;
    Rng rng;
    Identity admin;
    Identity imprinter;
    std::map<std::string, netsim::EndpointId> names;
    std::vector<std::unique_ptr<Node>> nodes;
    std::uint64_t serial = 0;

    explicit Stage(const Scenario& s)
        : sim(s.seed),
          ledger(sim, node::LedgerServiceConfig{s.ledger, false}),
          rng(sim.rng().next_u64()),
          admin(Identity::generate(rng)),
          imprinter(Identity::generate(rng)) {
        names.emplace("ledger", ledger.endpoint());
    }

    Node& add(const Scenario& s, const std::string& name, NodePolicy fallback, bool full_replica,
              bool online) {
        const NodeSpec* spec = s.find_node(name);
        node::NodeConfig cfg{name, spec != nullptr ? spec->policy : fallback, s.ledger, full_replica};
        std::optional<netsim::EndpointId> ledger_ep;
        if (online) ledger_ep = ledger.endpoint();
        nodes.push_back(std::make_unique<Node>(sim, Identity::generate(rng), cfg, ledger_ep));
        names.emplace(name, nodes.back()->endpoint());
        return *nodes.back();
    }

    netsim::EndpointId add_endpoint(const std::string& name) {
        auto ep = sim.add_endpoint(name);
        names.emplace(name, ep);
        return ep;
    }

    void imprint_all() {
        for (const auto& n : nodes) {
            ledger.submit(contracts::create_imprinting_contract(AnnouncedIdentity::of(n->identity()),
                                                                admin.public_key(), imprinter,
                                                                ledger.state()));
        }
        ledger.mine_now();
    }

    ledger::Transaction grant(const Node& provider, const Node& requestor, contracts::AclMask acl) {
        auto tx = contracts::create_grant(ledger.state(), admin, provider.id(), requestor.id(), acl,
                                          std::nullopt, serial++);
        ledger.submit(tx);
        return tx;
    }

    // Roster entries must name devices the scenario kind knows about.
    void wire(const Scenario& s) {
        for (const auto& spec : s.roster) {
            if (!names.count(spec.name)) bad("roster names unknown node '" + spec.name + "'");
        }
        apply_links(sim, s, names);
        sim.load_schedule(resolve_partitions(s, names));
    }

    void finish(Report& report) {
        report.trace_digest = sim.trace_digest();
        std::vector<const AccessDecision*> all;
        for (const auto& n : nodes) {
            for (const auto& d : n->decision_log()) all.push_back(&d);
        }
        std::stable_sort(all.begin(), all.end(), [](const auto* a, const auto* b) {
            return a->decided_at < b->decided_at;
        });
        for (const auto* d : all) report.decision_log.push_back(d->line());
        const std::size_t crossed = netsim::deliveries_across_cuts(sim);
        report.check("no delivery crossed an active cut", crossed == 0, std::to_string(crossed));
    }
};

bool cut_between(const Simulator& sim, netsim::EndpointId x, netsim::EndpointId y, SimTime from,
                 SimTime to) {
    return std::any_of(sim.cut_history().begin(), sim.cut_history().end(), [&](const auto& c) {
        return c.separates(x, y) && c.start <= to && c.end > from;
    });
}

bool cut_covers(const Simulator& sim, netsim::EndpointId x, netsim::EndpointId y, SimTime from,
                SimTime to) {
    return std::any_of(sim.cut_history().begin(), sim.cut_history().end(), [&](const auto& c) {
        return c.separates(x, y) && c.start <= from && c.end > to;
    });
}

std::vector<SimTime> request_times(const Scenario& s, SimTime first_default, SimTime interval_default,
                                   SimTime end_default) {
    const SimTime first = workload_int(s, "first_request_ms", first_default);
    const SimTime interval = workload_int(s, "request_interval_ms", interval_default);
    const SimTime end = workload_int(s, "end_ms", end_default);
    if (first < 0 || interval < 1 || end < first) bad("request schedule is empty or malformed");
    std::vector<SimTime> out;
    for (SimTime t = first; t <= end; t += interval) out.push_back(t);
    return out;
}

ordered_json decision_json(const AccessDecision& d) {
    return {{"outcome", node::to_string(d.outcome)},
            {"basis", node::to_string(d.basis)},
            {"requested_ms", d.requested_at},
            {"decided_ms", d.decided_at},
            {"wait_ms", d.wait()},
            {"reason", d.reason}};
}

std::string ms(SimTime t) { return std::to_string(t) + " ms"; }

} // namespace

Report run_stale_permission_attack(const Scenario& s) {
    Stage st(s);
    Node& provider = st.add(s, "provider", with_threshold(2'000), false, true);
    Node& requestor = st.add(s, "requestor", {}, false, true);
    const auto slot = static_cast<unsigned>(workload_int(s, "slot", 0));
    if (slot >= contracts::kAclSlots) bad("slot out of range");
    const SimTime revoke_at = workload_int(s, "revoke_at_ms");
    const SimTime timeout = workload_int(s, "request_timeout_ms", 120'000);
    const std::string fault = s.workload.value("fault_label", std::string("fault"));
    const bool sync_on_heal = workload_flag(s, "sync_on_heal", true);
    const auto times = request_times(s, 30'000, 30'000, 600'000);

    const CutSpec* cut = nullptr;
    for (const auto& c : s.partitions) {
        if (c.label == fault) cut = &c;
    }
    if (cut == nullptr) bad("no partition labelled '" + fault + "'");
    if (cut->end == netsim::kForever) bad("the fault partition must heal");
    if (revoke_at <= cut->start || revoke_at >= cut->end) bad("revocation must fall inside the fault");

    st.imprint_all();
    const Hash256 granted = st.grant(provider, requestor, contracts::AclMask{1} << slot).digest();
    st.ledger.mine_now();
    st.wire(s);

    std::optional<SimTime> t_r;
    std::optional<SimTime> t_s;
    const SimTime t_h = cut->end;
    st.sim.schedule_at(workload_int(s, "initial_sync_ms", 1'000), "initial-sync", [&] { provider.sync(); });
    st.sim.schedule_at(revoke_at, "revoke", [&] {
        st.ledger.submit(contracts::create_revocation(st.ledger.state(), st.admin, granted));
        st.ledger.mine_now();
        t_r = st.sim.now();
    });
    if (sync_on_heal) {
        st.sim.schedule_at(t_h, "sync-on-heal", [&] {
            provider.sync([&](bool ok) {
                if (ok && !t_s) t_s = st.sim.now();
            });
        });
    }
    std::vector<AccessDecision> seen;
    for (SimTime t : times) {
        st.sim.schedule_at(t, "request", [&] {
            requestor.request_access(provider.endpoint(), provider.id(), slot, timeout,
                                     [&](const AccessDecision& d) { seen.push_back(d); });
        });
    }
    st.sim.run_until(times.back() + timeout + 1);

    // Without a heal-triggered sync the first fresh ledger answer closes the window.
    if (!t_s) {
        for (const auto& d : provider.decision_log()) {
            if (d.basis == Basis::FreshLedger && d.decided_at >= t_h) {
                t_s = d.decided_at;
                break;
            }
        }
    }

    Report report;
    report.scenario = s;
    std::vector<AccessDecision> stale;
    std::size_t after_resync = 0;
    std::size_t denied_after_resync = 0;
    bool cut_grants_cached = true;
    for (const auto& d : provider.decision_log()) {
        if (t_r && d.granted() && d.contract == granted && d.decided_at > *t_r) stale.push_back(d);
        if (d.granted() && d.decided_at > cut->start && d.decided_at < t_h &&
            d.basis != Basis::LocalCache) {
            cut_grants_cached = false;
        }
        if (t_s && d.requested_at > *t_s) {
            ++after_resync;
            if (d.outcome == Outcome::Denied) ++denied_after_resync;
        }
    }
    const bool stale_cached = std::all_of(stale.begin(), stale.end(), [](const auto& d) {
        return d.basis == Basis::LocalCache;
    });
    const bool none_after = std::none_of(stale.begin(), stale.end(), [&](const auto& d) {
        return t_s && d.decided_at > *t_s;
    });

    report.table.push_back("requested_ms\tdecided_ms\toutcome\tbasis\twait_ms\tstale");
    ordered_json decisions = ordered_json::array();
    for (const auto& d : provider.decision_log()) {
        const bool is_stale = t_r && d.granted() && d.contract == granted && d.decided_at > *t_r;
        report.table.push_back(std::to_string(d.requested_at) + "\t" + std::to_string(d.decided_at) +
                               "\t" + std::string(node::to_string(d.outcome)) + "\t" +
                               std::string(node::to_string(d.basis)) + "\t" +
                               std::to_string(d.wait()) + "\t" + (is_stale ? "yes" : "no"));
        auto j = decision_json(d);
        j["stale"] = is_stale;
        decisions.push_back(std::move(j));
    }

    ordered_json r;
    r["threshold_ms"] = provider.policy().freshness_threshold == node::kWaitForever
                            ? ordered_json("inf")
                            : ordered_json(provider.policy().freshness_threshold);
    r["cut_start_ms"] = cut->start;
    r["revocation_mined_ms"] = t_r ? ordered_json(*t_r) : ordered_json();
    r["heal_ms"] = t_h;
    r["resync_ms"] = t_s ? ordered_json(*t_s) : ordered_json();
    r["stale_window_ms"] = t_r && t_s ? ordered_json(*t_s - *t_r) : ordered_json();
    r["stale_grants"] = stale.size();
    r["last_stale_grant_ms"] = stale.empty() ? ordered_json() : ordered_json(stale.back().decided_at);
    r["requests"] = times.size();
    r["requestor_outcomes"] = seen.size();
    r["decisions"] = std::move(decisions);
    report.results = std::move(r);

    report.check("revocation mined during the fault", t_r.has_value() && *t_r > cut->start && *t_r < t_h,
                 t_r ? ms(*t_r) : "not mined");
    report.check("provider resynchronised after heal", t_s.has_value() && *t_s >= t_h,
                 t_s ? ms(*t_s) : "never");
    report.check("stale window observed", !stale.empty(), std::to_string(stale.size()) + " stale grants");
    report.check("stale grants come from the local cache", stale_cached);
    report.check("no stale grant after resynchronisation", t_s.has_value() && none_after);
    report.check("grants during the fault come from the local cache", cut_grants_cached);
    report.check("requests after resynchronisation are denied",
                 after_resync > 0 && denied_after_resync == after_resync,
                 std::to_string(denied_after_resync) + "/" + std::to_string(after_resync));
    st.finish(report);
    return report;
}

namespace {

// Traditional IAM unlock: the phone logs in at the cloud, presents the token
// to the vehicle, and the vehicle introspects it at the cloud before acting.
struct IamMessage {
    std::uint64_t attempt = 0;
    std::uint64_t token = 0;
    bool granted = false;
};

struct Attempt {
    std::string label;
    SimTime started = 0;
    std::uint64_t sent_before = 0;
    std::optional<SimTime> finished;
    std::uint64_t messages = 0;
    bool granted = false;
    std::string basis = "-";
};

} // namespace

Report run_smart_vehicle(const Scenario& s) {
    Stage st(s);
    Node& vehicle = st.add(s, "vehicle", with_threshold(0), false, true);
    Node& phone = st.add(s, "phone", {}, false, true);
    const netsim::EndpointId cloud = st.add_endpoint("cloud");
    const auto slot = static_cast<unsigned>(workload_int(s, "unlock_slot", 0));
    if (slot >= contracts::kAclSlots) bad("unlock_slot out of range");
    const SimTime timeout = workload_int(s, "request_timeout_ms", 5'000);
    const SimTime healthy_at = workload_int(s, "healthy_at_ms", 10'000);
    const SimTime outage_at = workload_int(s, "outage_at_ms");
    if (timeout < 1) bad("request_timeout_ms must be positive");

    st.imprint_all();
    st.grant(vehicle, phone, contracts::AclMask{1} << slot);
    st.ledger.mine_now();
    st.wire(s);

    std::vector<Attempt> attempts;
    std::set<std::uint64_t> tokens;
    Rng token_rng(st.sim.rng().next_u64());

    auto close = [&](std::size_t i, bool granted, std::string basis) {
        Attempt& a = attempts[i];
        if (a.finished) return;
        a.finished = st.sim.now();
        a.messages = st.sim.sent_count() - a.sent_before;
        a.granted = granted;
        a.basis = std::move(basis);
    };
    auto begin = [&](std::string label) {
        Attempt a;
        a.label = std::move(label);
        a.started = st.sim.now();
        a.sent_before = st.sim.sent_count();
        attempts.push_back(std::move(a));
        return attempts.size() - 1;
    };

    st.sim.set_handler(cloud, [&](const netsim::Message& m) {
        const auto& in = m.as<IamMessage>();
        if (m.kind == "iam-login") {
            const std::uint64_t token = token_rng.next_u64();
            tokens.insert(token);
            st.sim.send(cloud, m.from, "iam-token", IamMessage{in.attempt, token, true});
        } else if (m.kind == "iam-introspect") {
            st.sim.send(cloud, m.from, "iam-active", IamMessage{in.attempt, in.token, tokens.count(in.token) > 0});
        }
    });
    vehicle.set_fallback_handler([&](const netsim::Message& m) {
        const auto& in = m.as<IamMessage>();
        if (m.kind == "iam-unlock") {
            st.sim.send(vehicle.endpoint(), cloud, "iam-introspect", in);
        } else if (m.kind == "iam-active") {
            st.sim.send(vehicle.endpoint(), phone.endpoint(), "iam-result", in);
        }
    });
    phone.set_fallback_handler([&](const netsim::Message& m) {
        const auto& in = m.as<IamMessage>();
        if (m.kind == "iam-token") {
            st.sim.send(phone.endpoint(), vehicle.endpoint(), "iam-unlock", in);
        } else if (m.kind == "iam-result") {
            close(in.attempt, in.granted, "auth-server");
        }
    });

    auto uniquid_unlock = [&](const std::string& label) {
        const std::size_t i = begin(label);
        phone.request_access(vehicle.endpoint(), vehicle.id(), slot, timeout,
                             [&, i](const AccessDecision& d) {
                                 close(i, d.granted(), std::string(node::to_string(d.basis)));
                             });
    };
    auto baseline_unlock = [&](const std::string& label) {
        const std::size_t i = begin(label);
        st.sim.send(phone.endpoint(), cloud, "iam-login", IamMessage{i, 0, false});
        st.sim.schedule_in(timeout, "iam-timeout", [&, i] { close(i, false, "None"); });
    };

    st.sim.schedule_at(workload_int(s, "presync_ms", 1'000), "presync", [&] { vehicle.sync(); });
    st.sim.schedule_at(healthy_at, "unlock", [&] { uniquid_unlock("uniquid-connected"); });
    st.sim.schedule_at(healthy_at + 2 * timeout, "unlock", [&] { baseline_unlock("baseline-connected"); });
    st.sim.schedule_at(outage_at, "unlock", [&] { uniquid_unlock("uniquid-outage"); });
    st.sim.schedule_at(outage_at + 2 * timeout, "unlock", [&] { baseline_unlock("baseline-outage"); });
    st.sim.run_until(std::max(healthy_at, outage_at) + 4 * timeout);

    Report report;
    report.scenario = s;
    report.table.push_back("flow\tstarted_ms\tfinished_ms\tgranted\tbasis\tmessages");
    ordered_json flows = ordered_json::object();
    for (auto& a : attempts) {
        if (!a.finished) close(static_cast<std::size_t>(&a - attempts.data()), false, "None");
        report.table.push_back(a.label + "\t" + std::to_string(a.started) + "\t" +
                               std::to_string(*a.finished) + "\t" + (a.granted ? "yes" : "no") +
                               "\t" + a.basis + "\t" + std::to_string(a.messages));
        flows[a.label] = {{"granted", a.granted},
                          {"basis", a.basis},
                          {"messages", a.messages},
                          {"latency_ms", *a.finished - a.started}};
    }
    const bool outage_real = cut_covers(st.sim, vehicle.endpoint(), cloud, outage_at,
                                        outage_at + 3 * timeout) &&
                             cut_covers(st.sim, phone.endpoint(), cloud, outage_at,
                                        outage_at + 3 * timeout);
    ordered_json r;
    r["unlock_slot"] = slot;
    r["flows"] = std::move(flows);
    report.results = std::move(r);

    const Attempt& uc = attempts[0];
    const Attempt& bc = attempts[1];
    const Attempt& uo = attempts[2];
    const Attempt& bo = attempts[3];
    auto msgs = [](const Attempt& a) { return std::to_string(a.messages) + " messages"; };
    report.check("cloud unreachable throughout the outage flows", outage_real);
    report.check("unlock granted while connected", uc.granted, uc.basis);
    report.check("baseline unlock granted while connected", bc.granted && bc.messages == 6, msgs(bc));
    report.check("unlock granted from the local cache during the outage",
                 uo.granted && uo.basis == "LocalCache", uo.basis);
    report.check("baseline unlock fails during the outage", !bo.granted, bo.basis);
    report.check("cached unlock uses fewer messages than the baseline",
                 uo.messages < bc.messages, msgs(uo) + " vs " + msgs(bc));
    st.finish(report);
    return report;
}

Report run_sensor_network(const Scenario& s) {
    Stage st(s);
    Node& op = st.add(s, "operator", {}, true, true);
    Node& consumer = st.add(s, "consumer", {}, false, false);
    const auto n = workload_int(s, "sensors", 3);
    if (n < 1 || n > 64) bad("sensors must lie in [1, 64]");
    std::vector<Node*> sensors;
    for (std::int64_t i = 0; i < n; ++i) {
        sensors.push_back(&st.add(s, "sensor-" + std::to_string(i), with_threshold(0), false, false));
    }
    std::vector<contracts::AclMask> acl;
    if (s.workload.contains("acl")) {
        if (!s.workload["acl"].is_array() || s.workload["acl"].size() != sensors.size()) {
            bad("acl must list one mask per sensor");
        }
        for (const auto& v : s.workload["acl"]) {
            if (!v.is_number_unsigned()) bad("acl masks must be unsigned integers");
            acl.push_back(v.get<contracts::AclMask>());
        }
    } else {
        for (std::size_t i = 0; i < sensors.size(); ++i) acl.push_back(contracts::AclMask{1} << (i % 8));
    }
    const auto probe = static_cast<unsigned>(workload_int(s, "probe_slots", 4));
    if (probe < 1 || probe > contracts::kAclSlots) bad("probe_slots out of range");
    const auto upgrade = static_cast<unsigned>(workload_int(s, "upgrade_slot", probe - 1));
    if (upgrade >= probe || (acl[0] >> upgrade & 1U)) bad("upgrade_slot must be a probed slot sensor-0 lacks");
    const SimTime gap = workload_int(s, "visit_gap_ms", 60'000);
    const SimTime timeout = workload_int(s, "request_timeout_ms", 10'000);
    if (gap < 2 * timeout) bad("visit_gap_ms must leave room for the probes");

    st.imprint_all();
    for (std::size_t i = 0; i < sensors.size(); ++i) st.grant(*sensors[i], consumer, acl[i]);
    st.ledger.mine_now();
    st.wire(s);

    struct Probe {
        std::size_t sensor = 0;
        unsigned slot = 0;
        bool expected = false;
        std::optional<AccessDecision> got;
    };
    std::vector<node::DispatchReport> visits(sensors.size());
    std::vector<Probe> probes;
    auto ask = [&](std::size_t i, unsigned slot, bool expected) {
        const std::size_t k = probes.size();
        probes.push_back(Probe{i, slot, expected, {}});
        consumer.request_access(sensors[i]->endpoint(), sensors[i]->id(), slot, timeout,
                                [&, k](const AccessDecision& d) { probes[k].got = d; });
    };

    st.sim.schedule_at(1'000, "operator-sync", [&] { op.sync(); });
    for (std::size_t i = 0; i < sensors.size(); ++i) {
        st.sim.schedule_at(static_cast<SimTime>(i + 1) * gap, "visit", [&, i] {
            node::dispatch_blocks(op, *sensors[i], [&, i](const node::DispatchReport& rep) {
                visits[i] = rep;
                for (unsigned slot = 0; slot < probe; ++slot) ask(i, slot, (acl[i] >> slot & 1U) != 0);
            });
        });
    }

    const SimTime update_at = static_cast<SimTime>(sensors.size() + 1) * gap;
    const contracts::AclMask upgraded = acl[0] | (contracts::AclMask{1} << upgrade);
    st.sim.schedule_at(update_at, "upgrade", [&] {
        st.grant(*sensors[0], consumer, upgraded);
        st.ledger.mine_now();
        st.ledger.mine_now();
        op.sync();
    });

    const Identity rogue = Identity::generate(st.rng);
    node::DispatchReport forged;
    node::DispatchReport clean;
    std::uint64_t height_before = 0;
    std::uint64_t height_after_forged = 0;
    std::size_t forged_probe = 0;
    std::size_t clean_probe = 0;
    st.sim.schedule_at(update_at + gap, "forged-visit", [&] {
        height_before = sensors[0]->height();
        node::dispatch_blocks(
            op, *sensors[0],
            [&](const node::DispatchReport& rep) {
                forged = rep;
                height_after_forged = sensors[0]->height();
                forged_probe = probes.size();
                ask(0, upgrade, false);
            },
            [&](std::vector<ledger::Block>& batch) {
                if (batch.empty() || batch.front().txs.empty()) return;
                batch.front().txs.front() = contracts::encode_grant(
                    sensors[0]->id(), consumer.id(), ~contracts::AclMask{0}, std::nullopt, 0, rogue.keys());
            });
    });
    st.sim.schedule_at(update_at + 2 * gap, "clean-visit", [&] {
        node::dispatch_blocks(op, *sensors[0], [&](const node::DispatchReport& rep) {
            clean = rep;
            clean_probe = probes.size();
            ask(0, upgrade, true);
        });
    });
    st.sim.run_until(update_at + 3 * gap);

    Report report;
    report.scenario = s;
    report.table.push_back("sensor\tslot\texpected\toutcome\tbasis");
    std::size_t matched = 0;
    std::size_t answered = 0;
    for (const auto& p : probes) {
        const bool granted = p.got && p.got->granted();
        if (p.got) ++answered;
        if (p.got && granted == p.expected) ++matched;
        report.table.push_back(sensors[p.sensor]->name() + "\t" + std::to_string(p.slot) + "\t" +
                               (p.expected ? "grant" : "deny") + "\t" +
                               (p.got ? std::string(node::to_string(p.got->outcome)) : "-") + "\t" +
                               (p.got ? std::string(node::to_string(p.got->basis)) : "-"));
    }
    bool first_ok = true;
    ordered_json visit_json = ordered_json::array();
    for (std::size_t i = 0; i < sensors.size(); ++i) {
        const auto& v = visits[i];
        first_ok = first_ok && v.offered > 0 && v.accepted == v.offered && v.rejected == 0;
        visit_json.push_back({{"sensor", sensors[i]->name()},
                              {"offered", v.offered},
                              {"accepted", v.accepted},
                              {"rejected", v.rejected}});
    }
    std::size_t sensor_to_ledger = 0;
    std::set<netsim::EndpointId> offline;
    for (const auto* x : sensors) offline.insert(x->endpoint());
    offline.insert(consumer.endpoint());
    for (const auto& rec : st.sim.trace()) {
        if (rec.kind != netsim::TraceKind::Send) continue;
        if ((offline.count(rec.a) && rec.b == st.ledger.endpoint()) ||
            (offline.count(rec.b) && rec.a == st.ledger.endpoint())) {
            ++sensor_to_ledger;
        }
    }

    ordered_json r;
    r["sensors"] = sensors.size();
    r["acl"] = acl;
    r["operator_height"] = op.height();
    r["first_visits"] = std::move(visit_json);
    r["forged_visit"] = {{"offered", forged.offered}, {"accepted", forged.accepted}, {"rejected", forged.rejected}};
    r["clean_visit"] = {{"offered", clean.offered}, {"accepted", clean.accepted}, {"rejected", clean.rejected}};
    r["probes"] = probes.size();
    r["probes_matching_acl"] = matched;
    report.results = std::move(r);

    auto counts = [](const node::DispatchReport& d) {
        return std::to_string(d.accepted) + " accepted, " + std::to_string(d.rejected) + " rejected of " +
               std::to_string(d.offered);
    };
    const auto* fp = forged_probe < probes.size() ? &probes[forged_probe] : nullptr;
    const auto* cp = clean_probe < probes.size() && clean_probe > 0 ? &probes[clean_probe] : nullptr;
    report.check("every sensor accepted the operator's blocks", first_ok);
    report.check("every probe answered and matched the ACL",
                 answered == probes.size() && matched == probes.size(),
                 std::to_string(matched) + "/" + std::to_string(probes.size()));
    report.check("forged block rejected with its descendants",
                 forged.offered >= 2 && forged.accepted == 0 && forged.rejected == forged.offered &&
                     height_after_forged == height_before,
                 counts(forged));
    report.check("forged grant not honoured", fp != nullptr && fp->got && !fp->got->granted());
    report.check("clean revisit delivers the update",
                 clean.offered > 0 && clean.accepted == clean.offered && cp != nullptr && cp->got &&
                     cp->got->granted(),
                 counts(clean));
    report.check("offline devices never exchanged messages with the ledger", sensor_to_ledger == 0,
                 std::to_string(sensor_to_ledger));
    st.finish(report);
    return report;
}

Report run_cap_dichotomy(const Scenario& s) {
    Stage st(s);
    std::vector<Node*> providers;
    for (const auto& spec : s.roster) {
        if (spec.role == "provider") providers.push_back(&st.add(s, spec.name, {}, false, true));
    }
    if (providers.empty()) bad("cap-dichotomy needs at least one provider in nodes");
    Node& requestor = st.add(s, "requestor", {}, false, true);
    const SimTime timeout = workload_int(s, "request_timeout_ms", 120'000);
    const auto times = request_times(s, 10'000, 15'000, 300'000);

    st.imprint_all();
    for (auto* p : providers) st.grant(*p, requestor, ~contracts::AclMask{0});
    st.ledger.mine_now();
    st.wire(s);
    for (auto* p : providers) {
        const auto& lat = st.sim.link(p->endpoint(), st.ledger.endpoint()).latency;
        if (lat.kind != netsim::LatencyModel::Kind::Constant) {
            bad("provider-ledger latency must be constant");
        }
    }

    const SimTime initial_sync = workload_int(s, "initial_sync_ms", 1'000);
    for (auto* p : providers) st.sim.schedule_at(initial_sync, "initial-sync", [p] { p->sync(); });
    std::size_t answered = 0;
    for (SimTime t : times) {
        for (auto* p : providers) {
            st.sim.schedule_at(t, "request", [&, p] {
                requestor.request_access(p->endpoint(), p->id(), 0, timeout,
                                         [&](const AccessDecision&) { ++answered; });
            });
        }
    }
    st.sim.run_until(times.back() + timeout + 1);

    Report report;
    report.scenario = s;
    report.table.push_back("provider\tthreshold_ms\trequested_ms\toutcome\tbasis\twait_ms\texpected_wait_ms");
    bool zero_ok = true;
    bool inf_no_cache = true;
    bool inf_timeouts_cut = true;
    bool finite_ok = true;
    bool proofs_ok = true;
    std::size_t checked_finite = 0;
    ordered_json per = ordered_json::object();
    for (const auto* p : providers) {
        const SimTime th = p->policy().freshness_threshold;
        const SimTime rtt = 2 * st.sim.link(p->endpoint(), st.ledger.endpoint()).latency.a;
        std::map<std::string, std::size_t> tally;
        std::vector<double> waits;
        for (const auto& d : p->decision_log()) {
            ++tally[std::string(node::to_string(d.outcome)) + "/" + std::string(node::to_string(d.basis))];
            waits.push_back(static_cast<double>(d.wait()));
            std::string expected = "-";
            if (d.granted() && !(d.contract && p->proves(*d.contract))) proofs_ok = false;
            if (th == 0) {
                if (d.wait() != 0 || d.outcome == Outcome::TimedOut || d.basis == Basis::FreshLedger) {
                    zero_ok = false;
                }
                expected = "0";
            } else if (th == node::kWaitForever) {
                if (d.basis == Basis::LocalCache) inf_no_cache = false;
                if (d.outcome == Outcome::TimedOut &&
                    !cut_between(st.sim, p->endpoint(), st.ledger.endpoint(), d.requested_at, d.decided_at)) {
                    inf_timeouts_cut = false;
                }
            } else {
                const SimTime t0 = d.requested_at;
                const bool isolated = cut_covers(st.sim, p->endpoint(), st.ledger.endpoint(), t0, t0 + th);
                const bool connected = !cut_between(st.sim, p->endpoint(), st.ledger.endpoint(), t0,
                                                    t0 + std::min(th, rtt));
                std::optional<SimTime> want;
                if (isolated) want = th;
                else if (connected) want = std::min(th, rtt);
                if (want) {
                    ++checked_finite;
                    expected = std::to_string(*want);
                    const Basis basis = *want == rtt && rtt <= th ? Basis::FreshLedger : Basis::LocalCache;
                    if (d.wait() != *want || d.basis != basis) finite_ok = false;
                } else if (d.wait() > th) {
                    finite_ok = false;
                }
            }
            report.table.push_back(p->name() + "\t" +
                                   (th == node::kWaitForever ? std::string("inf") : std::to_string(th)) +
                                   "\t" + std::to_string(d.requested_at) + "\t" +
                                   std::string(node::to_string(d.outcome)) + "\t" +
                                   std::string(node::to_string(d.basis)) + "\t" +
                                   std::to_string(d.wait()) + "\t" + expected);
        }
        ordered_json pj;
        pj["threshold_ms"] = th == node::kWaitForever ? ordered_json("inf") : ordered_json(th);
        pj["ledger_rtt_ms"] = rtt;
        pj["decisions"] = p->decision_log().size();
        pj["tally"] = tally;
        if (!waits.empty()) {
            const Stats w = summarize(waits);
            pj["wait_ms"] = {{"mean", w.mean}, {"se", w.se}, {"count", w.count}};
        }
        per[p->name()] = std::move(pj);
    }
    const std::size_t expected_answers = times.size() * providers.size();
    ordered_json r;
    r["requests"] = expected_answers;
    r["answered"] = answered;
    r["providers"] = std::move(per);
    report.results = std::move(r);

    report.check("every request reached a decision", answered == expected_answers,
                 std::to_string(answered) + "/" + std::to_string(expected_answers));
    report.check("zero-threshold providers answer at once from the cache", zero_ok);
    report.check("infinite-threshold providers never answer from the cache", inf_no_cache);
    report.check("infinite-threshold providers time out only under partition", inf_timeouts_cut);
    report.check("finite-threshold waits equal min(T, rtt) connected and T isolated", finite_ok,
                 std::to_string(checked_finite) + " decisions classified");
    report.check("every grant cites a proven contract", proofs_ok);
    st.finish(report);
    return report;
}

Report run_scenario(const Scenario& s) {
    if (s.kind == "enrolment") return run_enrolment(s);
    if (s.kind == "stale-permission") return run_stale_permission_attack(s);
    if (s.kind == "smart-vehicle") return run_smart_vehicle(s);
    if (s.kind == "sensor-network") return run_sensor_network(s);
    if (s.kind == "cap-dichotomy") return run_cap_dichotomy(s);
    bad("unknown scenario kind '" + s.kind + "'");
}

} // namespace uniquid::harness
