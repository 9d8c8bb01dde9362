#pragma once

#include "uniquid/crypto.hpp"

#include <any>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <map>
#include <queue>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace uniquid::netsim {

// Simulated milliseconds.
using SimTime = std::int64_t;
using EndpointId = std::uint32_t;
using TimerId = std::uint64_t;
using ChannelId = std::uint64_t;

inline constexpr SimTime kForever = std::numeric_limits<SimTime>::max();
inline constexpr std::size_t kUnlimited = std::numeric_limits<std::size_t>::max();

struct LatencyModel {
    enum class Kind { Constant, Uniform, Exponential };

    Kind kind = Kind::Constant;
    SimTime a = 0;  // constant value, uniform low bound, or exponential mean
    SimTime b = 0;  // uniform high bound

    static LatencyModel constant(SimTime value) { return {Kind::Constant, value, value}; }
    static LatencyModel uniform(SimTime lo, SimTime hi) { return {Kind::Uniform, lo, hi}; }
    static LatencyModel exponential(SimTime mean) { return {Kind::Exponential, mean, 0}; }

    SimTime sample(Rng& rng) const;
};

struct LinkModel {
    LatencyModel latency = LatencyModel::constant(0);
    bool up = true;
};

struct Message {
    std::uint64_t id = 0;
    EndpointId from = 0;
    EndpointId to = 0;
    std::string kind;
    std::string topic;  // empty for point-to-point traffic
    SimTime sent_at = 0;
    std::any payload;

    template <typename T>
    [[nodiscard]] const T& as() const {
        return std::any_cast<const T&>(payload);
    }
};

using Handler = std::function<void(const Message&)>;

// A network cut: while active, nothing crosses between the two sides.
struct PartitionCut {
    std::string label;
    std::vector<EndpointId> side_a;
    std::vector<EndpointId> side_b;
    SimTime start = 0;
    SimTime end = kForever;

    [[nodiscard]] bool separates(EndpointId x, EndpointId y) const;
};

using PartitionSchedule = std::vector<PartitionCut>;

// Throws Error(ScheduleConflict) for empty or overlapping sides, an empty
// interval, or two overlapping cuts over the same pair of sides.
void validate_schedule(const PartitionSchedule& schedule, std::size_t endpoint_count);

enum class TraceKind {
    Send,
    Deliver,
    Drop,
    Hold,
    ChannelQueued,
    ChannelOpen,
    ChannelClose,
    Cut,
    Heal,
    Timer,
};

std::string_view to_string(TraceKind kind);

struct TraceRecord {
    SimTime time = 0;
    std::uint64_t seq = 0;
    TraceKind kind = TraceKind::Timer;
    EndpointId a = 0;
    EndpointId b = 0;
    std::uint64_t ref = 0;  // message or channel id
    std::string label;

    [[nodiscard]] std::string line() const;
};

// Single-threaded discrete-event network. Events run in (time, sequence)
// order; every observable step lands in the trace, whose digest pins a run.
class Simulator {
public:
    explicit Simulator(std::uint64_t seed);

    Simulator(const Simulator&) = delete;
    Simulator& operator=(const Simulator&) = delete;

    [[nodiscard]] SimTime now() const noexcept { return now_; }
    [[nodiscard]] Rng& rng() noexcept { return rng_; }

    EndpointId add_endpoint(std::string name, std::size_t channel_cap = kUnlimited);
    void set_handler(EndpointId ep, Handler handler);
    [[nodiscard]] const std::string& name(EndpointId ep) const { return endpoints_.at(ep).name; }
    [[nodiscard]] std::size_t endpoint_count() const noexcept { return endpoints_.size(); }
    [[nodiscard]] std::size_t channel_cap(EndpointId ep) const { return endpoints_.at(ep).cap; }

    void set_default_link(LinkModel link) { default_link_ = link; }
    // Symmetric.
    void set_link(EndpointId a, EndpointId b, LinkModel link);
    [[nodiscard]] const LinkModel& link(EndpointId a, EndpointId b) const;

    TimerId schedule_at(SimTime when, std::string label, std::function<void()> fn);
    TimerId schedule_in(SimTime delay, std::string label, std::function<void()> fn) {
        return schedule_at(now_ + delay, std::move(label), std::move(fn));
    }
    void cancel(TimerId id) { cancelled_.insert(id); }

    // Point-to-point send. Returns the message id. A message that cannot be
    // delivered (link down, cut active at send time, or a cut starting while
    // it is in flight) is dropped and traced.
    std::uint64_t send(EndpointId from, EndpointId to, std::string kind, std::any payload);

    void subscribe(const std::string& topic, EndpointId ep);
    // Held publications are delivered on heal when enabled.
    void set_pubsub_queueing(bool enabled) { pubsub_queueing_ = enabled; }
    // One delivery per subscriber other than the sender; returns how many
    // deliveries were scheduled or held.
    std::size_t publish(const std::string& topic, std::string kind, std::any payload,
                        EndpointId sender);

    // Opens a sender-side channel slot when below the sender's cap, or
    // queues the request FIFO until a slot frees. `on_open` runs as an event.
    ChannelId open_channel(EndpointId sender, EndpointId receiver,
                           std::function<void(ChannelId)> on_open);
    void close_channel(ChannelId id);
    [[nodiscard]] std::size_t open_channels(EndpointId ep) const { return endpoints_.at(ep).open; }
    [[nodiscard]] std::size_t queued_channels(EndpointId ep) const {
        return endpoints_.at(ep).waiting.size();
    }
    [[nodiscard]] bool is_open(ChannelId id) const;

    // Validates the whole schedule, then plans its cut/heal events.
    void load_schedule(const PartitionSchedule& schedule);
    // Immediate cut or heal by label.
    void cut(PartitionCut cut);
    void heal(const std::string& label);
    [[nodiscard]] bool reachable(EndpointId a, EndpointId b) const;

    std::size_t run_until(SimTime t_end);
    // Runs until no events remain (or the safety horizon passes).
    std::size_t run(SimTime horizon = kForever);

    [[nodiscard]] const std::vector<TraceRecord>& trace() const noexcept { return trace_; }
    [[nodiscard]] Hash256 trace_digest() const;
    // Every cut that has been active, with its actual heal time.
    [[nodiscard]] const std::vector<PartitionCut>& cut_history() const noexcept { return cut_log_; }
    [[nodiscard]] std::uint64_t sent_count() const noexcept { return next_message_ - 1; }

private:
    struct Endpoint {
        std::string name;
        std::size_t cap = kUnlimited;
        std::size_t open = 0;
        Handler handler;
        std::deque<ChannelId> waiting;
    };
    struct Event {
        SimTime time;
        std::uint64_t seq;
        TimerId id;
        bool operator>(const Event& o) const {
            return time != o.time ? time > o.time : seq > o.seq;
        }
    };
    struct Channel {
        EndpointId sender;
        EndpointId receiver;
        bool open = false;
        bool closed = false;
        std::function<void(ChannelId)> on_open;
    };
    struct Held {
        Message msg;
    };

    void record(TraceKind kind, EndpointId a, EndpointId b, std::uint64_t ref, std::string label);
    void dispatch(Message msg);
    void deliver(Message msg);
    bool crossed_cut(EndpointId a, EndpointId b, SimTime from, SimTime to) const;
    void activate_channel(ChannelId id);
    void flush_held();
    std::uint64_t key(EndpointId a, EndpointId b) const;

    Rng rng_;
    SimTime now_ = 0;
    std::uint64_t seq_ = 0;
    TimerId next_timer_ = 1;
    std::uint64_t next_message_ = 1;
    ChannelId next_channel_ = 1;

    std::vector<Endpoint> endpoints_;
    LinkModel default_link_;
    std::unordered_map<std::uint64_t, LinkModel> links_;

    std::priority_queue<Event, std::vector<Event>, std::greater<>> queue_;
    std::unordered_map<TimerId, std::function<void()>> actions_;
    std::unordered_set<TimerId> cancelled_;

    std::map<std::string, std::vector<EndpointId>> topics_;
    bool pubsub_queueing_ = false;
    std::vector<Held> held_;

    std::unordered_map<ChannelId, Channel> channels_;

    std::vector<PartitionCut> active_cuts_;
    std::vector<PartitionCut> cut_log_;

    std::vector<TraceRecord> trace_;
};

// Trace audits.

// Deliveries between endpoints separated by a cut that was active at any
// point of the message's flight. Zero for a hermetic run.
std::size_t deliveries_across_cuts(const Simulator& sim);
// Highest number of simultaneously open channels seen for `ep`.
std::size_t peak_open_channels(const Simulator& sim, EndpointId ep);

} // namespace uniquid::netsim
