#include <doctest.h>

#include "uniquid/contracts/state.hpp"
#include "uniquid/error.hpp"
#include "uniquid/node/ledger_service.hpp"
#include "uniquid/node/node.hpp"

#include <memory>
#include <sstream>

using namespace uniquid;
using namespace uniquid::node;
using contracts::AnnouncedIdentity;
using netsim::LatencyModel;
using netsim::Simulator;
using ledger::SimMillis;

namespace {

constexpr SimTime kHop = 50;

ledger::LedgerParams fast_params() {
    ledger::LedgerParams p;
    p.difficulty_bits = 8;
    return p;
}

NodePolicy threshold(SimTime t) {
    NodePolicy p;
    p.freshness_threshold = t;
    return p;
}

// Ledger, one administrator, a provider device and a requestor device.
struct World {
    Simulator sim;
    Rng rng;
    LedgerService ledger;
    Identity admin;
    Identity imprinter;
    std::unique_ptr<Node> provider;
    std::unique_ptr<Node> requestor;

    explicit World(NodePolicy provider_policy, std::uint64_t seed = 7)
        : sim(seed),
          rng(seed),
          ledger(sim, LedgerServiceConfig{fast_params(), false}),
          admin(Identity::generate(rng)),
          imprinter(Identity::generate(rng)) {
        sim.set_default_link({LatencyModel::constant(kHop), true});
        provider = std::make_unique<Node>(
            sim, Identity::generate(rng), NodeConfig{"provider", provider_policy, fast_params()},
            ledger.endpoint());
        requestor = std::make_unique<Node>(sim, Identity::generate(rng),
                                           NodeConfig{"requestor", {}, fast_params()},
                                           ledger.endpoint());
        submit(contracts::create_imprinting_contract(AnnouncedIdentity::of(provider->identity()),
                                                     admin.public_key(), imprinter,
                                                     ledger.state()));
        submit(contracts::create_imprinting_contract(AnnouncedIdentity::of(requestor->identity()),
                                                     admin.public_key(), imprinter,
                                                     ledger.state()));
        ledger.mine_now();
    }

    void submit(const ledger::Transaction& tx) { ledger.submit(tx); }

    Hash256 grant(contracts::AclMask acl, std::optional<SimMillis> expiry = std::nullopt) {
        auto tx = contracts::create_grant(ledger.state(), admin, provider->id(), requestor->id(),
                                          acl, expiry, serial++);
        submit(tx);
        ledger.mine_now();
        return tx.digest();
    }

    void revoke(const Hash256& digest) {
        submit(contracts::create_revocation(ledger.state(), admin, digest));
        ledger.mine_now();
    }

    void sync_provider() {
        bool ok = false;
        provider->sync([&](bool r) { ok = r; });
        sim.run_until(sim.now() + 10 * kHop);
        REQUIRE(ok);
    }

    void isolate_provider(const std::string& label = "fault") {
        sim.cut({label, {provider->endpoint()}, {ledger.endpoint()}, 0, netsim::kForever});
    }

    // Runs the full handshake and returns what the requestor concluded.
    AccessDecision ask(unsigned slot, SimTime timeout = 120'000) {
        std::optional<AccessDecision> out;
        requestor->request_access(provider->endpoint(), provider->id(), slot, timeout,
                                  [&](const AccessDecision& d) { out = d; });
        sim.run_until(sim.now() + timeout + 1);
        REQUIRE(out.has_value());
        return *out;
    }

    const AccessDecision& last_provider_decision() const {
        REQUIRE_FALSE(provider->decision_log().empty());
        return provider->decision_log().back();
    }

    std::uint64_t serial = 0;
};

// Every Granted record cites a contract committed under a header the
// provider holds.
void check_proof_gate(const Node& provider) {
    for (const auto& d : provider.decision_log()) {
        if (!d.granted()) continue;
        REQUIRE(d.contract.has_value());
        const auto* entry = provider.cache().get(provider.id(), d.requestor_id);
        if (entry != nullptr && entry->tx_digest == *d.contract) {
            CHECK(entry->proof.root == provider.headers().at(entry->contract.valid_from).merkle_root);
        }
    }
}

} // namespace

TEST_CASE("node policy validation") {
    NodePolicy p;
    p.freshness_threshold = -1;
    CHECK_THROWS_AS(p.validate(), Error);
    CHECK_NOTHROW(threshold(0).validate());
    CHECK_NOTHROW(threshold(kWaitForever).validate());
    CHECK(threshold(0).pure_availability());
    CHECK(threshold(kWaitForever).pure_consistency());
}

TEST_CASE("access request signatures bind every field") {
    Rng rng(3);
    auto alice = Identity::generate(rng);
    auto bob = Identity::generate(rng);
    auto r = AccessRequest::make(alice, bob.id(), 4, 99);
    CHECK(r.authentic());
    auto tweak = r;
    tweak.slot = 5;
    CHECK_FALSE(tweak.authentic());
    tweak = r;
    tweak.nonce = 100;
    CHECK_FALSE(tweak.authentic());
    tweak = r;
    tweak.requestor_id = bob.id();
    CHECK_FALSE(tweak.authentic());
    tweak = r;
    tweak.requestor_pubkey = bob.public_key();
    CHECK_FALSE(tweak.authentic());
}

TEST_CASE("sync brings headers and the provider's grant with a proof") {
    World w(threshold(0));
    Hash256 g = w.grant(0b1);
    w.sync_provider();
    CHECK(w.provider->height() == w.ledger.chain().height());
    CHECK(w.provider->blocks().empty());
    const auto* entry = w.provider->cache().get(w.provider->id(), w.requestor->id());
    REQUIRE(entry != nullptr);
    CHECK(entry->tx_digest == g);
    CHECK(ledger::verify_proof_for_hash(
        ledger::merkle_leaf_hash(w.ledger.chain().at(entry->contract.valid_from).txs.at(entry->contract.index).bytes()),
        entry->proof));
    CHECK(entry->proof.root == w.provider->headers().at(entry->contract.valid_from).merkle_root);
    CHECK(w.provider->sync_status().last_success == w.sim.now() - 8 * kHop);
}

TEST_CASE("sync during a partition keeps prior state and records the failure") {
    World w(threshold(0));
    w.grant(0b1);
    w.sync_provider();
    const auto before = w.provider->height();
    w.isolate_provider();
    w.grant(0b10);
    bool result = true;
    w.provider->sync([&](bool ok) { result = ok; });
    w.sim.run_until(w.sim.now() + 20'000);
    CHECK_FALSE(result);
    CHECK(w.provider->height() == before);
    CHECK(w.provider->sync_status().failures == 1);
    CHECK(w.provider->cache().size() == 1);
}

TEST_CASE("handshake: four messages, cache decision at threshold zero") {
    World w(threshold(0));
    Hash256 g = w.grant(0b1);
    w.sync_provider();
    auto sent = w.sim.sent_count();
    auto d = w.ask(0);
    CHECK(w.sim.sent_count() - sent == 4);
    CHECK(d.outcome == Outcome::Granted);
    CHECK(d.basis == Basis::LocalCache);
    CHECK(d.contract == g);
    CHECK(w.last_provider_decision().wait() == 0);
    check_proof_gate(*w.provider);
}

TEST_CASE("CAP examples") {
    SUBCASE("cached grant, partition, threshold 0 -> Granted from cache") {
        World w(threshold(0));
        w.grant(0b1);
        w.sync_provider();
        w.isolate_provider();
        auto d = w.ask(0);
        CHECK(d.outcome == Outcome::Granted);
        CHECK(d.basis == Basis::LocalCache);
        CHECK(w.last_provider_decision().wait() == 0);
    }
    SUBCASE("cached grant, partition, threshold infinite -> TimedOut") {
        NodePolicy p = threshold(kWaitForever);
        p.request_deadline_ms = 30'000;
        World w(p);
        w.grant(0b1);
        w.sync_provider();
        w.isolate_provider();
        auto d = w.ask(0);
        CHECK(d.outcome == Outcome::TimedOut);
        CHECK(w.last_provider_decision().outcome == Outcome::TimedOut);
        CHECK(w.last_provider_decision().wait() == 30'000);
        for (const auto& rec : w.provider->decision_log()) CHECK_FALSE(rec.granted());
    }
    SUBCASE("threshold infinite, link healthy -> fresh grant") {
        World w(threshold(kWaitForever));
        w.grant(0b1);
        auto d = w.ask(0);
        CHECK(d.outcome == Outcome::Granted);
        CHECK(d.basis == Basis::FreshLedger);
        CHECK(w.last_provider_decision().wait() == 2 * kHop);
    }
    SUBCASE("heal before the deadline lets a consistency node answer fresh") {
        NodePolicy p = threshold(kWaitForever);
        p.fetch_retry_ms = 1'000;
        World w(p);
        w.grant(0b1);
        w.sync_provider();
        w.isolate_provider();
        w.sim.schedule_in(5'000, {}, [&] { w.sim.heal("fault"); });
        auto d = w.ask(0);
        CHECK(d.outcome == Outcome::Granted);
        CHECK(d.basis == Basis::FreshLedger);
    }
    SUBCASE("no grant anywhere -> Denied") {
        for (SimTime t : {SimTime{0}, SimTime{500}, kWaitForever}) {
            World w(threshold(t));
            w.sync_provider();
            auto d = w.ask(0);
            CHECK(d.outcome == Outcome::Denied);
            CHECK(d.reason == "no grant");
        }
    }
}

TEST_CASE("finite threshold waits exactly min(T, fetch latency)") {
    const SimTime rtt = 2 * kHop;
    for (SimTime t : {SimTime{1}, SimTime{60}, SimTime{99}, SimTime{100}, SimTime{101}, SimTime{500}}) {
        CAPTURE(t);
        {
            World w(threshold(t));
            w.grant(0b1);
            w.sync_provider();
            auto d = w.ask(0);
            CHECK(d.outcome == Outcome::Granted);
            const auto& rec = w.last_provider_decision();
            CHECK(rec.wait() == std::min(t, rtt));
            CHECK(rec.basis == (t < rtt ? Basis::LocalCache : Basis::FreshLedger));
        }
        {
            World w(threshold(t));
            w.grant(0b1);
            w.sync_provider();
            w.isolate_provider();
            auto d = w.ask(0);
            CHECK(d.outcome == Outcome::Granted);
            CHECK(w.last_provider_decision().wait() == t);
            CHECK(w.last_provider_decision().basis == Basis::LocalCache);
        }
    }
}

TEST_CASE("stale grant window after revocation") {
    World w(threshold(500));
    Hash256 g = w.grant(0b1);
    w.sync_provider();
    w.isolate_provider();
    w.revoke(g);

    auto stale = w.ask(0);
    CHECK(stale.outcome == Outcome::Granted);
    CHECK(stale.basis == Basis::LocalCache);
    CHECK(stale.contract == g);

    w.sim.heal("fault");
    w.sync_provider();
    CHECK(w.provider->cache().size() == 0);
    for (int i = 0; i < 3; ++i) {
        auto after = w.ask(0);
        CHECK(after.outcome == Outcome::Denied);
        CHECK(after.contract != g);
    }
}

TEST_CASE("ACL slots, expiry and cache ttl") {
    SUBCASE("slot outside the mask") {
        World w(threshold(0));
        w.grant(0b0101);
        w.sync_provider();
        CHECK(w.ask(0).outcome == Outcome::Granted);
        CHECK(w.ask(1).outcome == Outcome::Denied);
        CHECK(w.last_provider_decision().reason == "slot not permitted");
        CHECK(w.ask(2).outcome == Outcome::Granted);
    }
    SUBCASE("expired grant") {
        World w(threshold(0));
        w.grant(0b1, SimMillis{60'000});
        w.sync_provider();
        CHECK(w.ask(0).outcome == Outcome::Granted);
        w.sim.run_until(60'000);
        CHECK(w.ask(0).outcome == Outcome::Denied);
        CHECK(w.last_provider_decision().reason == "grant expired");
    }
    SUBCASE("cache older than ttl") {
        NodePolicy p = threshold(0);
        p.cache_ttl_min = 1.0;
        World w(p);
        w.grant(0b1);
        w.sync_provider();
        CHECK(w.ask(0).outcome == Outcome::Granted);
        w.sim.run_until(w.sim.now() + 61'000);
        CHECK(w.ask(0).outcome == Outcome::Denied);
        w.sync_provider();
        CHECK(w.ask(0).outcome == Outcome::Granted);
    }
}

TEST_CASE("nonces are single use and requests must verify") {
    World w(threshold(0));
    w.grant(0b1);
    w.sync_provider();

    std::uint64_t nonce = w.provider->issue_challenge(w.requestor->id(), 0);
    auto req = AccessRequest::make(w.requestor->identity(), w.provider->id(), 0, nonce);
    std::vector<AccessDecision> seen;
    auto collect = [&](const AccessDecision& d) { seen.push_back(d); };
    w.provider->authorize(req, collect);
    w.provider->authorize(req, collect);
    REQUIRE(seen.size() == 2);
    CHECK(seen[0].granted());
    CHECK(seen[1].outcome == Outcome::Denied);
    CHECK(seen[1].reason == "unknown or reused nonce");

    nonce = w.provider->issue_challenge(w.requestor->id(), 0);
    req = AccessRequest::make(w.requestor->identity(), w.provider->id(), 0, nonce);
    req.signature.data[0] ^= 1;
    w.provider->authorize(req, collect);
    CHECK(seen.back().reason == "signature does not verify");

    nonce = w.provider->issue_challenge(w.requestor->id(), 0);
    req = AccessRequest::make(w.requestor->identity(), w.provider->id(), 3, nonce);
    w.provider->authorize(req, collect);
    CHECK(seen.back().reason == "challenge issued for another request");

    Rng rng(1);
    auto stranger = Identity::generate(rng);
    nonce = w.provider->issue_challenge(stranger.id(), 0);
    req = AccessRequest::make(stranger, w.provider->id(), 0, nonce);
    w.provider->authorize(req, collect);
    CHECK(seen.back().outcome == Outcome::Denied);
    CHECK(seen.back().reason == "no grant");
}

TEST_CASE("proof gate: unanchored contracts never ground a grant") {
    World w(threshold(0));
    w.sync_provider();
    // A rogue peer pushes a well-signed grant that no block commits to.
    auto forged = contracts::encode_grant(w.provider->id(), w.requestor->id(), 0b1, std::nullopt, 0,
                                          w.admin.keys());
    msg::SyncReply reply;
    reply.relevant.push_back(
        ProvenTx{forged, {0, 0}, ledger::build_proof_from_hashes({ledger::merkle_leaf_hash(forged.bytes())}, 0)});
    auto rogue = w.sim.add_endpoint("rogue");
    w.sim.send(rogue, w.provider->endpoint(), std::string(msg::kSyncReply), reply);
    w.sim.run_until(w.sim.now() + 10 * kHop);
    CHECK(w.provider->cache().size() == 0);
    CHECK(w.ask(0).outcome == Outcome::Denied);
    check_proof_gate(*w.provider);
}

TEST_CASE("requestor times out when the provider is unreachable") {
    World w(threshold(0));
    w.grant(0b1);
    w.sync_provider();
    w.sim.cut({"p2p", {w.requestor->endpoint()}, {w.provider->endpoint()}, 0, netsim::kForever});
    auto d = w.ask(0, 5'000);
    CHECK(d.outcome == Outcome::TimedOut);
    CHECK(d.observer == "requestor");
    CHECK(w.provider->decision_log().empty());
}

TEST_CASE("decision log export") {
    World w(threshold(0));
    Hash256 g = w.grant(0b1);
    w.sync_provider();
    w.ask(0);
    std::ostringstream out;
    export_decision_log(out, w.provider->decision_log());
    const std::string line = out.str();
    CHECK(line.find("observer=provider") != std::string::npos);
    CHECK(line.find("decision=Granted basis=LocalCache") != std::string::npos);
    CHECK(line.find("contract=" + to_hex(g)) != std::string::npos);
    CHECK(line.find("reason=-") != std::string::npos);
    CHECK(line.back() == '\n');
}

namespace {

struct DispatchWorld {
    Simulator sim{11};
    Rng rng{11};
    LedgerService ledger{sim, LedgerServiceConfig{fast_params(), true}};
    Node carrier{sim, Identity::generate(rng), NodeConfig{"carrier", {}, fast_params(), true}, ledger.endpoint()};
    Node sensor{sim, Identity::generate(rng), NodeConfig{"sensor", {}, fast_params()}};

    DispatchWorld() { sim.set_default_link({LatencyModel::constant(kHop), true}); }

    void mine(int n) {
        for (int i = 0; i < n; ++i) ledger.mine_now();
    }
    void sync_carrier() {
        carrier.sync();
        sim.run_until(sim.now() + 10 * kHop);
    }
    DispatchReport dispatch(Node::Tamper tamper = {}) {
        std::optional<DispatchReport> out;
        dispatch_blocks(carrier, sensor, [&](const DispatchReport& r) { out = r; }, std::move(tamper));
        sim.run_until(sim.now() + 10 * kHop);
        REQUIRE(out.has_value());
        return *out;
    }
};

} // namespace

TEST_CASE("dispatch_blocks examples") {
    SUBCASE("carrier ten blocks ahead") {
        DispatchWorld w;
        w.mine(10);
        w.sync_carrier();
        CHECK(w.carrier.blocks().size() == 10);
        auto r = w.dispatch();
        CHECK(r.offered == 10);
        CHECK(r.accepted == 10);
        CHECK(r.rejected == 0);
        CHECK(w.sensor.height() == 10);
        CHECK(w.sensor.headers().back() == w.ledger.chain().at(9).header);
    }
    SUBCASE("tampered block and its descendants are rejected") {
        for (std::size_t bad = 0; bad < 10; ++bad) {
            CAPTURE(bad);
            DispatchWorld w;
            w.mine(10);
            w.sync_carrier();
            auto r = w.dispatch([bad](std::vector<Block>& batch) { batch[bad].header.timestamp_ms += 1; });
            CHECK(r.offered == 10);
            CHECK(r.accepted == bad);
            CHECK(r.rejected == 10 - bad);
            CHECK(w.sensor.height() == bad);
        }
    }
    SUBCASE("carrier behind target") {
        DispatchWorld w;
        w.mine(3);
        w.sync_carrier();
        CHECK(w.dispatch().accepted == 3);
        DispatchWorld fresh;
        auto r = fresh.dispatch();
        CHECK(r.offered == 0);
        CHECK(r.accepted == 0);
    }
    SUBCASE("incremental dispatch sends only the missing suffix") {
        DispatchWorld w;
        w.mine(4);
        w.sync_carrier();
        CHECK(w.dispatch().accepted == 4);
        w.mine(2);
        w.sync_carrier();
        auto r = w.dispatch();
        CHECK(r.offered == 2);
        CHECK(r.accepted == 2);
        CHECK(w.sensor.height() == 6);
    }
}

TEST_CASE("CAP dichotomy over random partition schedules") {
    Rng pick(2024);
    std::size_t fallbacks = 0;
    for (int trial = 0; trial < 60; ++trial) {
        const int mode = static_cast<int>(pick.below(3));
        const SimTime t = mode == 0 ? 0 : mode == 1 ? 1 + static_cast<SimTime>(pick.below(400)) : kWaitForever;
        NodePolicy policy = threshold(t);
        policy.request_deadline_ms = 20'000;
        World w(policy, 100 + static_cast<std::uint64_t>(trial));
        w.grant(0b1);
        w.sync_provider();
        const SimTime base = w.sim.now();
        const SimTime start = base + static_cast<SimTime>(pick.below(10'000));
        const SimTime end = start + 1 + static_cast<SimTime>(pick.below(30'000));
        w.sim.load_schedule({{"cut", {w.provider->endpoint()}, {w.ledger.endpoint()}, start, end}});
        for (int i = 0; i < 8; ++i) {
            const SimTime at = base + static_cast<SimTime>(pick.below(45'000));
            w.sim.schedule_at(at, {}, [&w] {
                w.requestor->request_access(w.provider->endpoint(), w.provider->id(), 0, 60'000);
            });
        }
        w.sim.run_until(base + 200'000);
        REQUIRE(w.provider->decision_log().size() == 8);
        for (const auto& d : w.provider->decision_log()) {
            if (t == kWaitForever) {
                CHECK_FALSE(d.basis == Basis::LocalCache);
            }
            if (t == 0) {
                CHECK(d.outcome != Outcome::TimedOut);
                CHECK(d.wait() == 0);
            }
            if (t != 0 && t != kWaitForever) {
                const SimTime rtt = 2 * kHop;
                const SimTime req = d.requested_at;
                if (d.basis == Basis::LocalCache) {
                    CHECK(d.wait() == t);
                    ++fallbacks;
                } else {
                    CHECK(d.wait() == rtt);
                    CHECK(rtt <= t);
                }
                // Away from the cut edges the outcome is fixed by the schedule.
                if (req + rtt < start || req > end) {
                    CHECK(d.wait() == std::min(t, rtt));
                } else if (req >= start && req + rtt < end) {
                    CHECK(d.wait() == t);
                }
            }
            if (d.granted()) {
                REQUIRE(d.contract.has_value());
            }
        }
        check_proof_gate(*w.provider);
        CHECK(netsim::deliveries_across_cuts(w.sim) == 0);
    }
    CHECK(fallbacks > 0);
}
