#include "uniquid/netsim/simulator.hpp"

#include "uniquid/error.hpp"


#include <algorithm>
#include <cmath>
#include <memory>
#include <sstream>

namespace uniquid::netsim {

namespace {

bool contains(const std::vector<EndpointId>& v, EndpointId x) {
    return std::find(v.begin(), v.end(), x) != v.end();
}

std::vector<EndpointId> sorted(std::vector<EndpointId> v) {
    std::sort(v.begin(), v.end());
    return v;
}

} // namespace

SimTime LatencyModel::sample(Rng& rng) const {
    switch (kind) {
    case Kind::Constant:
        return a;
    case Kind::Uniform:
        return a + static_cast<SimTime>(rng.below(static_cast<std::uint64_t>(b - a) + 1));
    case Kind::Exponential: {
        double u = rng.uniform01();
        return static_cast<SimTime>(std::llround(-static_cast<double>(a) * std::log1p(-u)));
    }
    }
    return a;
}

bool PartitionCut::separates(EndpointId x, EndpointId y) const {
    return (contains(side_a, x) && contains(side_b, y)) || (contains(side_a, y) && contains(side_b, x));
}

void validate_schedule(const PartitionSchedule& schedule, std::size_t endpoint_count) {
    for (std::size_t i = 0; i < schedule.size(); ++i) {
        const auto& c = schedule[i];
        if (c.side_a.empty() || c.side_b.empty()) {
            throw Error(ErrorCode::ScheduleConflict, "cut '" + c.label + "' has an empty side");
        }
        if (c.start < 0 || c.end <= c.start) {
            throw Error(ErrorCode::ScheduleConflict, "cut '" + c.label + "' has an empty interval");
        }
        for (EndpointId x : c.side_a) {
            if (contains(c.side_b, x)) {
                throw Error(ErrorCode::ScheduleConflict,
                            "cut '" + c.label + "' places an endpoint on both sides");
            }
        }
        for (EndpointId x : c.side_a) {
            if (x >= endpoint_count) throw Error(ErrorCode::ScheduleConflict, "unknown endpoint in cut");
        }
        for (EndpointId x : c.side_b) {
            if (x >= endpoint_count) throw Error(ErrorCode::ScheduleConflict, "unknown endpoint in cut");
        }
        for (std::size_t j = 0; j < i; ++j) {
            const auto& o = schedule[j];
            if (o.label == c.label) {
                throw Error(ErrorCode::ScheduleConflict, "duplicate cut label '" + c.label + "'");
            }
            bool same_pair = (sorted(o.side_a) == sorted(c.side_a) && sorted(o.side_b) == sorted(c.side_b)) ||
                             (sorted(o.side_a) == sorted(c.side_b) && sorted(o.side_b) == sorted(c.side_a));
            bool overlap = o.start < c.end && c.start < o.end;
            if (same_pair && overlap) {
                throw Error(ErrorCode::ScheduleConflict,
                            "cuts '" + o.label + "' and '" + c.label + "' overlap on the same sides");
            }
        }
    }
}

std::string_view to_string(TraceKind kind) {
    switch (kind) {
    case TraceKind::Send: return "send";
    case TraceKind::Deliver: return "deliver";
    case TraceKind::Drop: return "drop";
    case TraceKind::Hold: return "hold";
    case TraceKind::ChannelQueued: return "chan-queued";
    case TraceKind::ChannelOpen: return "chan-open";
    case TraceKind::ChannelClose: return "chan-close";
    case TraceKind::Cut: return "cut";
    case TraceKind::Heal: return "heal";
    case TraceKind::Timer: return "timer";
    }
    return "?";
}

std::string TraceRecord::line() const {
    std::ostringstream os;
    os << time << ' ' << seq << ' ' << to_string(kind) << ' ' << a << ' ' << b << ' ' << ref << ' '
       << label;
    return os.str();
}

Simulator::Simulator(std::uint64_t seed) : rng_(seed) {}

EndpointId Simulator::add_endpoint(std::string name, std::size_t channel_cap) {
    if (channel_cap == 0) {
        throw Error(ErrorCode::ScenarioConfig, "channel cap must be at least 1");
    }
    endpoints_.push_back(Endpoint{std::move(name), channel_cap, 0, {}, {}});
    return static_cast<EndpointId>(endpoints_.size() - 1);
}

void Simulator::set_handler(EndpointId ep, Handler handler) {
    endpoints_.at(ep).handler = std::move(handler);
}

std::uint64_t Simulator::key(EndpointId a, EndpointId b) const {
    if (a > b) std::swap(a, b);
    return (static_cast<std::uint64_t>(a) << 32) | b;
}

void Simulator::set_link(EndpointId a, EndpointId b, LinkModel link) {
    links_[key(a, b)] = link;
}

const LinkModel& Simulator::link(EndpointId a, EndpointId b) const {
    auto it = links_.find(key(a, b));
    return it == links_.end() ? default_link_ : it->second;
}

TimerId Simulator::schedule_at(SimTime when, std::string label, std::function<void()> fn) {
    if (when < now_) when = now_;
    TimerId id = next_timer_++;
    actions_.emplace(id, [this, label = std::move(label), fn = std::move(fn)] {
        if (!label.empty()) record(TraceKind::Timer, 0, 0, 0, label);
        fn();
    });
    queue_.push(Event{when, seq_++, id});
    return id;
}

void Simulator::record(TraceKind kind, EndpointId a, EndpointId b, std::uint64_t ref,
                       std::string label) {
    trace_.push_back(TraceRecord{now_, trace_.size(), kind, a, b, ref, std::move(label)});
}

bool Simulator::reachable(EndpointId a, EndpointId b) const {
    if (a == b) return true;
    if (!link(a, b).up) return false;
    return std::none_of(active_cuts_.begin(), active_cuts_.end(),
                        [&](const PartitionCut& c) { return c.separates(a, b); });
}

bool Simulator::crossed_cut(EndpointId a, EndpointId b, SimTime from, SimTime to) const {
    for (const auto& c : cut_log_) {
        if (c.separates(a, b) && c.start <= to && c.end > from) return true;
    }
    return false;
}

std::uint64_t Simulator::send(EndpointId from, EndpointId to, std::string kind, std::any payload) {
    Message msg;
    msg.id = next_message_++;
    msg.from = from;
    msg.to = to;
    msg.kind = std::move(kind);
    msg.sent_at = now_;
    msg.payload = std::move(payload);
    const std::uint64_t id = msg.id;
    record(TraceKind::Send, from, to, id, msg.kind);
    dispatch(std::move(msg));
    return id;
}

void Simulator::dispatch(Message msg) {
    if (!reachable(msg.from, msg.to)) {
        if (!msg.topic.empty() && pubsub_queueing_) {
            record(TraceKind::Hold, msg.from, msg.to, msg.id, msg.kind);
            held_.push_back(Held{std::move(msg)});
        } else {
            record(TraceKind::Drop, msg.from, msg.to, msg.id, msg.kind);
        }
        return;
    }
    SimTime latency = link(msg.from, msg.to).latency.sample(rng_);
    TimerId id = next_timer_++;
    auto shared = std::make_shared<Message>(std::move(msg));
    actions_.emplace(id, [this, shared] { deliver(std::move(*shared)); });
    queue_.push(Event{now_ + latency, seq_++, id});
}

void Simulator::deliver(Message msg) {
    // The message left at msg.sent_at (or at the heal that released it).
    if (!reachable(msg.from, msg.to) || crossed_cut(msg.from, msg.to, msg.sent_at, now_)) {
        record(TraceKind::Drop, msg.from, msg.to, msg.id, msg.kind);
        return;
    }
    record(TraceKind::Deliver, msg.from, msg.to, msg.id, msg.kind);
    Handler handler = endpoints_.at(msg.to).handler;
    if (handler) handler(msg);
}

void Simulator::subscribe(const std::string& topic, EndpointId ep) {
    auto& subs = topics_[topic];
    if (!contains(subs, ep)) subs.push_back(ep);
}

std::size_t Simulator::publish(const std::string& topic, std::string kind, std::any payload,
                               EndpointId sender) {
    std::size_t count = 0;
    auto it = topics_.find(topic);
    if (it == topics_.end()) return 0;
    for (EndpointId sub : it->second) {
        if (sub == sender) continue;
        Message msg;
        msg.id = next_message_++;
        msg.from = sender;
        msg.to = sub;
        msg.kind = kind;
        msg.topic = topic;
        msg.sent_at = now_;
        msg.payload = payload;
        record(TraceKind::Send, sender, sub, msg.id, topic + "/" + kind);
        bool deliverable = reachable(sender, sub) || pubsub_queueing_;
        dispatch(std::move(msg));
        if (deliverable) ++count;
    }
    return count;
}

void Simulator::flush_held() {
    std::vector<Held> still;
    for (auto& h : held_) {
        if (reachable(h.msg.from, h.msg.to)) {
            h.msg.sent_at = now_;
            record(TraceKind::Send, h.msg.from, h.msg.to, h.msg.id, h.msg.kind + "/released");
            dispatch(std::move(h.msg));
        } else {
            still.push_back(std::move(h));
        }
    }
    held_ = std::move(still);
}

ChannelId Simulator::open_channel(EndpointId sender, EndpointId receiver,
                                  std::function<void(ChannelId)> on_open) {
    ChannelId id = next_channel_++;
    channels_.emplace(id, Channel{sender, receiver, false, false, std::move(on_open)});
    auto& ep = endpoints_.at(sender);
    if (ep.open < ep.cap) {
        activate_channel(id);
    } else {
        record(TraceKind::ChannelQueued, sender, receiver, id, {});
        ep.waiting.push_back(id);
    }
    return id;
}

void Simulator::activate_channel(ChannelId id) {
    auto& ch = channels_.at(id);
    auto& ep = endpoints_.at(ch.sender);
    ++ep.open;
    ch.open = true;
    record(TraceKind::ChannelOpen, ch.sender, ch.receiver, id, {});
    if (ch.on_open) {
        TimerId t = next_timer_++;
        actions_.emplace(t, [this, id] {
            auto it = channels_.find(id);
            if (it != channels_.end() && it->second.open && it->second.on_open) {
                it->second.on_open(id);
            }
        });
        queue_.push(Event{now_, seq_++, t});
    }
}

void Simulator::close_channel(ChannelId id) {
    auto it = channels_.find(id);
    if (it == channels_.end()) return;
    Channel& ch = it->second;
    EndpointId sender = ch.sender;
    auto& ep = endpoints_.at(sender);
    if (ch.open) {
        --ep.open;
        record(TraceKind::ChannelClose, ch.sender, ch.receiver, id, {});
    } else {
        ep.waiting.erase(std::remove(ep.waiting.begin(), ep.waiting.end(), id), ep.waiting.end());
    }
    channels_.erase(it);
    while (ep.open < ep.cap && !ep.waiting.empty()) {
        ChannelId next = ep.waiting.front();
        ep.waiting.pop_front();
        activate_channel(next);
    }
}

bool Simulator::is_open(ChannelId id) const {
    auto it = channels_.find(id);
    return it != channels_.end() && it->second.open;
}

void Simulator::load_schedule(const PartitionSchedule& schedule) {
    validate_schedule(schedule, endpoints_.size());
    for (const auto& c : schedule) {
        schedule_at(c.start, {}, [this, c] {
            PartitionCut active = c;
            active.end = kForever;
            cut(std::move(active));
        });
        if (c.end != kForever) {
            schedule_at(c.end, {}, [this, label = c.label] { heal(label); });
        }
    }
}

void Simulator::cut(PartitionCut c) {
    c.start = now_;
    c.end = kForever;
    record(TraceKind::Cut, 0, 0, cut_log_.size(), c.label);
    active_cuts_.push_back(c);
    cut_log_.push_back(std::move(c));
}

void Simulator::heal(const std::string& label) {
    auto it = std::find_if(active_cuts_.begin(), active_cuts_.end(),
                           [&](const PartitionCut& c) { return c.label == label; });
    if (it == active_cuts_.end()) return;
    active_cuts_.erase(it);
    for (auto log = cut_log_.rbegin(); log != cut_log_.rend(); ++log) {
        if (log->label == label && log->end == kForever) {
            log->end = now_;
            break;
        }
    }
    record(TraceKind::Heal, 0, 0, 0, label);
    flush_held();
}

std::size_t Simulator::run_until(SimTime t_end) {
    std::size_t executed = 0;
    while (!queue_.empty() && queue_.top().time <= t_end) {
        Event ev = queue_.top();
        queue_.pop();
        now_ = ev.time;
        auto node = actions_.extract(ev.id);
        if (cancelled_.erase(ev.id) > 0 || node.empty()) continue;
        node.mapped()();
        ++executed;
    }
    if (t_end != kForever && now_ < t_end) now_ = t_end;
    return executed;
}

std::size_t Simulator::run(SimTime horizon) {
    return run_until(horizon);
}

Hash256 Simulator::trace_digest() const {
    Sha256 st;
    for (const auto& r : trace_) {
        std::string l = r.line();
        l.push_back('\n');
        st.update(ByteSpan(reinterpret_cast<const Byte*>(l.data()), l.size()));
    }
    return st.finish();
}

std::size_t deliveries_across_cuts(const Simulator& sim) {
    // Works on trace positions so same-millisecond events keep their order.
    const auto& trace = sim.trace();
    const auto& cuts = sim.cut_history();
    constexpr std::size_t kOpen = std::numeric_limits<std::size_t>::max();
    std::vector<std::size_t> cut_pos(cuts.size(), kOpen);
    std::vector<std::size_t> heal_pos(cuts.size(), kOpen);
    for (std::size_t i = 0; i < trace.size(); ++i) {
        const auto& r = trace[i];
        if (r.kind == TraceKind::Cut && r.ref < cuts.size()) cut_pos[r.ref] = i;
        if (r.kind == TraceKind::Heal) {
            for (std::size_t c = cuts.size(); c-- > 0;) {
                if (cuts[c].label == r.label && cut_pos[c] < i && heal_pos[c] == kOpen) {
                    heal_pos[c] = i;
                    break;
                }
            }
        }
    }
    std::unordered_map<std::uint64_t, std::size_t> sent;
    std::size_t bad = 0;
    for (std::size_t i = 0; i < trace.size(); ++i) {
        const auto& r = trace[i];
        if (r.kind == TraceKind::Send) {
            sent[r.ref] = i;
        } else if (r.kind == TraceKind::Deliver) {
            std::size_t from = sent.count(r.ref) ? sent.at(r.ref) : i;
            for (std::size_t c = 0; c < cuts.size(); ++c) {
                if (!cuts[c].separates(r.a, r.b) || cut_pos[c] > i) continue;
                if (heal_pos[c] > i || cut_pos[c] > from) ++bad;
            }
        }
    }
    return bad;
}

std::size_t peak_open_channels(const Simulator& sim, EndpointId ep) {
    std::size_t open = 0;
    std::size_t peak = 0;
    for (const auto& r : sim.trace()) {
        if (r.a != ep) continue;
        if (r.kind == TraceKind::ChannelOpen) peak = std::max(peak, ++open);
        if (r.kind == TraceKind::ChannelClose) --open;
    }
    return peak;
}

} // namespace uniquid::netsim
