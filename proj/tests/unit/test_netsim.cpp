#include <doctest.h>

#include "uniquid/error.hpp"
#include "uniquid/netsim/simulator.hpp"

#include <map>
#include <memory>

using namespace uniquid;
using namespace uniquid::netsim;

namespace {

struct Inbox {
    std::vector<std::pair<SimTime, std::uint64_t>> got;  // (time, message id)
};

EndpointId endpoint_with_inbox(Simulator& sim, const std::string& name, Inbox& inbox,
                               std::size_t cap = kUnlimited) {
    EndpointId ep = sim.add_endpoint(name, cap);
    sim.set_handler(ep, [&sim, &inbox](const Message& m) { inbox.got.emplace_back(sim.now(), m.id); });
    return ep;
}

void expect_conflict(const auto& fn) {
    try {
        fn();
        FAIL("expected ScheduleConflict");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::ScheduleConflict);
    }
}

} // namespace

TEST_CASE("open_channel: per-endpoint caps") {
    SUBCASE("cap 5, six opens") {
        Simulator sim(1);
        auto a = sim.add_endpoint("client", 5);
        auto b = sim.add_endpoint("imprinter");
        int opened = 0;
        std::vector<ChannelId> ids;
        for (int i = 0; i < 6; ++i) ids.push_back(sim.open_channel(a, b, [&](ChannelId) { ++opened; }));
        sim.run();
        CHECK(opened == 5);
        CHECK(sim.open_channels(a) == 5);
        CHECK(sim.queued_channels(a) == 1);
        CHECK_FALSE(sim.is_open(ids[5]));
        sim.close_channel(ids[0]);
        sim.run();
        CHECK(opened == 6);
        CHECK(sim.is_open(ids[5]));
        CHECK(peak_open_channels(sim, a) == 5);
    }
    SUBCASE("cap 50, fifty opens") {
        Simulator sim(1);
        auto a = sim.add_endpoint("client", 50);
        auto b = sim.add_endpoint("imprinter");
        for (int i = 0; i < 50; ++i) sim.open_channel(a, b, {});
        CHECK(sim.open_channels(a) == 50);
        CHECK(sim.queued_channels(a) == 0);
    }
    SUBCASE("cap 1, sequential reuse") {
        Simulator sim(1);
        auto a = sim.add_endpoint("client", 1);
        auto b = sim.add_endpoint("imprinter");
        auto first = sim.open_channel(a, b, {});
        CHECK(sim.is_open(first));
        sim.close_channel(first);
        auto second = sim.open_channel(a, b, {});
        CHECK(sim.is_open(second));
    }
    SUBCASE("zero cap is refused") {
        Simulator sim(1);
        CHECK_THROWS_AS(sim.add_endpoint("bad", 0), Error);
    }
}

TEST_CASE("cap conservation under random open/close churn") {
    Simulator sim(77);
    std::vector<EndpointId> clients;
    for (int i = 0; i < 4; ++i) clients.push_back(sim.add_endpoint("c" + std::to_string(i), 1 + i));
    auto server = sim.add_endpoint("server");
    for (int i = 0; i < 400; ++i) {
        EndpointId c = clients[sim.rng().below(clients.size())];
        SimTime at = static_cast<SimTime>(sim.rng().below(10'000));
        SimTime hold = 1 + static_cast<SimTime>(sim.rng().below(500));
        sim.schedule_at(at, {}, [&sim, c, server, hold] {
            sim.open_channel(c, server, [&sim, hold](ChannelId id) {
                sim.schedule_in(hold, {}, [&sim, id] { sim.close_channel(id); });
            });
        });
    }
    sim.run();
    for (std::size_t i = 0; i < clients.size(); ++i) {
        CHECK(peak_open_channels(sim, clients[i]) <= sim.channel_cap(clients[i]));
        CHECK(peak_open_channels(sim, clients[i]) == 1 + i);
        CHECK(sim.open_channels(clients[i]) == 0);
    }
}

TEST_CASE("constant latency: delivery = send + L") {
    Simulator sim(3);
    Inbox in;
    auto a = sim.add_endpoint("a");
    auto b = endpoint_with_inbox(sim, "b", in);
    sim.set_default_link({LatencyModel::constant(40), true});
    std::map<std::uint64_t, SimTime> sent;
    for (int i = 0; i < 20; ++i) {
        sim.schedule_at(i * 7, {}, [&, a, b] { sent[sim.send(a, b, "ping", i)] = sim.now(); });
    }
    sim.run();
    REQUIRE(in.got.size() == 20);
    for (auto [t, id] : in.got) CHECK(t == sent.at(id) + 40);
}

TEST_CASE("latency models") {
    Rng rng(11);
    auto u = LatencyModel::uniform(10, 20);
    auto e = LatencyModel::exponential(100);
    double sum = 0;
    for (int i = 0; i < 20000; ++i) {
        SimTime x = u.sample(rng);
        CHECK(x >= 10);
        CHECK(x <= 20);
        sum += static_cast<double>(e.sample(rng));
    }
    CHECK(sum / 20000.0 == doctest::Approx(100.0).epsilon(0.05));
}

TEST_CASE("partitions: hermetic cuts, in-flight drops, heal") {
    Simulator sim(5);
    Inbox in;
    auto a = sim.add_endpoint("a");
    auto b = endpoint_with_inbox(sim, "b", in);
    sim.set_default_link({LatencyModel::constant(100), true});
    sim.load_schedule({{"fault", {a}, {b}, 1000, 2000}});

    std::vector<std::uint64_t> ids;
    for (SimTime t : {0, 950, 1500, 1999, 2000, 2500}) {
        sim.schedule_at(t, {}, [&, a, b] { ids.push_back(sim.send(a, b, "m", {})); });
    }
    sim.run_until(999);
    CHECK(sim.reachable(a, b));
    sim.run_until(1000);
    CHECK_FALSE(sim.reachable(a, b));
    sim.run();
    CHECK(sim.reachable(a, b));

    // 0 arrives before the cut; 950 is in flight at cut start; 1500 and
    // 1999 are sent during the cut; 2000 and 2500 go after the heal.
    std::vector<std::uint64_t> delivered;
    for (auto [t, id] : in.got) delivered.push_back(id);
    CHECK(delivered == std::vector<std::uint64_t>{ids[0], ids[4], ids[5]});
    CHECK(deliveries_across_cuts(sim) == 0);
    REQUIRE(sim.cut_history().size() == 1);
    CHECK(sim.cut_history()[0].end == 2000);
}

TEST_CASE("pub/sub fan-out and queueing on heal") {
    Simulator sim(9);
    Inbox i1, i2, i3;
    auto pub = sim.add_endpoint("pub");
    auto s1 = endpoint_with_inbox(sim, "s1", i1);
    auto s2 = endpoint_with_inbox(sim, "s2", i2);
    auto s3 = endpoint_with_inbox(sim, "s3", i3);
    sim.set_default_link({LatencyModel::constant(10), true});
    for (auto s : {s1, s2, s3, pub}) sim.subscribe("announce", s);

    CHECK(sim.publish("announce", "id", 1, pub) == 3);
    sim.run();
    CHECK(i1.got.size() == 1);
    CHECK(i2.got.size() == 1);
    CHECK(i3.got.size() == 1);

    sim.cut({"iso", {s3}, {pub, s1, s2}, 0, kForever});
    CHECK(sim.publish("announce", "id", 2, pub) == 2);
    sim.run();
    CHECK(i3.got.size() == 1);

    sim.set_pubsub_queueing(true);
    CHECK(sim.publish("announce", "id", 3, pub) == 3);
    sim.run_until(sim.now() + 500);
    CHECK(i3.got.size() == 1);
    SimTime heal_at = sim.now();
    sim.heal("iso");
    sim.run();
    REQUIRE(i3.got.size() == 2);
    CHECK(i3.got.back().first == heal_at + 10);
    CHECK(deliveries_across_cuts(sim) == 0);
}

TEST_CASE("schedule validation") {
    Simulator sim(1);
    auto a = sim.add_endpoint("a");
    auto b = sim.add_endpoint("b");
    auto c = sim.add_endpoint("c");
    expect_conflict([&] { sim.load_schedule({{"x", {a}, {a, b}, 0, 10}}); });
    expect_conflict([&] { sim.load_schedule({{"x", {a}, {b}, 10, 10}}); });
    expect_conflict([&] { sim.load_schedule({{"x", {}, {b}, 0, 10}}); });
    expect_conflict([&] { sim.load_schedule({{"x", {a}, {b}, 0, 10}, {"y", {b}, {a}, 5, 20}}); });
    expect_conflict([&] { sim.load_schedule({{"x", {a}, {b}, 0, 10}, {"x", {a}, {c}, 20, 30}}); });
    expect_conflict([&] { sim.load_schedule({{"x", {a}, {EndpointId{7}}, 0, 10}}); });
    // Back-to-back and disjoint-side cuts are fine.
    CHECK_NOTHROW(sim.load_schedule({{"x", {a}, {b}, 0, 10}, {"y", {a}, {b}, 10, 20}, {"z", {a}, {c}, 5, 15}}));
}

TEST_CASE("run_until: ordering, counts, determinism") {
    auto scenario = [](std::uint64_t seed) {
        auto sim = std::make_unique<Simulator>(seed);
        auto a = sim->add_endpoint("a", 2);
        auto b = sim->add_endpoint("b");
        sim->set_handler(b, [](const Message&) {});
        sim->set_default_link({LatencyModel::uniform(5, 50), true});
        sim->load_schedule({{"blip", {a}, {b}, 300, 400}});
        for (int i = 0; i < 100; ++i) {
            sim->schedule_at(i * 9, "tick", [s = sim.get(), a, b] {
                s->open_channel(a, b, [s, a, b](ChannelId id) {
                    s->send(a, b, "data", {});
                    s->schedule_in(20, {}, [s, id] { s->close_channel(id); });
                });
            });
        }
        return sim;
    };
    auto s1 = scenario(42);
    auto s2 = scenario(42);
    auto s3 = scenario(43);
    std::size_t first = s1->run_until(450);
    CHECK(first > 0);
    CHECK(s1->now() == 450);
    std::size_t rest = s1->run();
    CHECK(first + rest == s2->run());
    s3->run();
    CHECK(s1->trace_digest() == s2->trace_digest());
    CHECK(s1->trace_digest() != s3->trace_digest());

    SimTime prev = 0;
    for (const auto& r : s1->trace()) {
        CHECK(r.time >= prev);
        prev = r.time;
    }
    CHECK(deliveries_across_cuts(*s1) == 0);
    CHECK(peak_open_channels(*s1, 0) <= 2);
}

TEST_CASE("cancelled timers do not fire") {
    Simulator sim(1);
    int fired = 0;
    auto t = sim.schedule_in(10, {}, [&] { ++fired; });
    sim.schedule_in(5, {}, [&] { ++fired; });
    sim.cancel(t);
    CHECK(sim.run() == 1);
    CHECK(fired == 1);
}
