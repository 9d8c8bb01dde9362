#include "uniquid/node/node.hpp"

#include "uniquid/error.hpp"

#include <algorithm>
#include <set>

namespace uniquid::node {

using netsim::Message;

void ContractCache::put(const Id160& provider, const Id160& requestor, CacheEntry entry) {
    entries_.insert_or_assign(Key{provider, requestor}, std::move(entry));
}

void ContractCache::erase(const Id160& provider, const Id160& requestor) {
    entries_.erase(Key{provider, requestor});
}

const CacheEntry* ContractCache::get(const Id160& provider, const Id160& requestor) const {
    auto it = entries_.find(Key{provider, requestor});
    return it == entries_.end() ? nullptr : &it->second;
}

Node::Node(netsim::Simulator& sim, Identity identity, NodeConfig config,
           std::optional<EndpointId> ledger)
    : sim_(sim),
      identity_(std::move(identity)),
      config_(std::move(config)),
      ledger_(ledger),
      endpoint_(sim.add_endpoint(config_.name)),
      rng_(sim.rng().next_u64()) {
    config_.policy.validate();
    config_.params.validate();
    sim_.set_handler(endpoint_, [this](const Message& m) { handle(m); });
    schedule_refresh();
}

void Node::set_policy(NodePolicy policy) {
    policy.validate();
    config_.policy = policy;
}

void Node::schedule_refresh() {
    if (!config_.policy.refresh_interval_ms || !ledger_) return;
    sim_.schedule_in(*config_.policy.refresh_interval_ms, {}, [this] {
        sync();
        schedule_refresh();
    });
}

// Ledger synchronization

void Node::sync(SyncDone done) {
    ++sync_status_.attempts;
    if (!ledger_) {
        ++sync_status_.failures;
        if (done) done(false);
        return;
    }
    const std::uint64_t rid = next_request_++;
    syncs_.emplace(rid, std::move(done));
    sim_.send(endpoint_, *ledger_, std::string(msg::kSync),
              msg::Sync{rid, id(), height(), config_.full_replica});
    sim_.schedule_in(config_.sync_timeout_ms, {}, [this, rid] {
        auto it = syncs_.find(rid);
        if (it == syncs_.end()) return;
        SyncDone cb = std::move(it->second);
        syncs_.erase(it);
        ++sync_status_.failures;
        if (cb) cb(false);
    });
}

void Node::on_sync_reply(const msg::SyncReply& reply) {
    if (!reply.blocks.empty()) {
        accept_blocks(reply.blocks);
    } else {
        for (const auto& h : reply.headers) {
            if (h.height < height()) continue;
            if (!append_header(h)) break;
        }
        for (const auto& item : reply.relevant) {
            if (item.at.height >= height()) continue;
            const Hash256& root = headers_[item.at.height].merkle_root;
            if (item.proof.root != root ||
                !ledger::verify_proof_for_hash(ledger::merkle_leaf_hash(item.tx.bytes()),
                                               item.proof)) {
                continue;
            }
            remember(item);
        }
    }
    sync_status_.last_success = sim_.now();
    cache_refreshed_at_ = sim_.now();
    rebuild_cache();

    auto it = syncs_.find(reply.request_id);
    if (it == syncs_.end()) return;
    SyncDone cb = std::move(it->second);
    syncs_.erase(it);
    if (cb) cb(true);
}

bool Node::append_header(const BlockHeader& header) {
    const BlockHeader* prev = headers_.empty() ? nullptr : &headers_.back();
    if (!ledger::validate_header(header, prev, config_.params)) return false;
    headers_.push_back(header);
    return true;
}

void Node::absorb(const Block& block) {
    headers_.push_back(block.header);
    std::vector<Hash256> leaves;
    leaves.reserve(block.txs.size());
    for (const auto& tx : block.txs) leaves.push_back(ledger::merkle_leaf_hash(tx.bytes()));
    for (std::uint32_t i = 0; i < block.txs.size(); ++i) {
        const Transaction& tx = block.txs[i];
        contracts::Contract c;
        try {
            c = contracts::decode(tx);
        } catch (const Error&) {
            continue;
        }
        if (!involves(c, id())) continue;
        remember(ProvenTx{tx, {block.header.height, i},
                          ledger::build_proof_from_hashes(leaves, i)});
    }
    if (config_.full_replica) blocks_.push_back(block);
}

void Node::remember(const ProvenTx& item) {
    const Hash256 digest = item.tx.digest();
    if (proofs_.contains(digest)) return;
    contracts::Contract c;
    try {
        c = contracts::decode(item.tx);
    } catch (const Error&) {
        return;
    }
    if (auto* g = std::get_if<AccessContract>(&c)) {
        g->valid_from = item.at.height;
        g->index = item.at.index;
    }
    relevant_.push_back(contracts::ContractEvent{item.tx, item.at, std::move(c)});
    proofs_.emplace(digest, item);
}

void Node::rebuild_cache() {
    cache_ = ContractCache{};
    if (headers_.empty()) return;
    const std::uint64_t tip = height() - 1;
    std::set<Id160> requestors;
    for (const auto& ev : relevant_) {
        if (const auto* g = std::get_if<AccessContract>(&ev.contract); g && g->provider_id == id()) {
            requestors.insert(g->requestor_id);
        }
    }
    for (const auto& r : requestors) {
        auto grant = contracts::resolve(relevant_, id(), r, tip);
        if (!grant) continue;
        const ProvenTx& proven = proofs_.at(grant->digest);
        cache_.put(id(), r, CacheEntry{*grant, grant->digest, proven.proof, height(), sim_.now()});
    }
}

DispatchReport Node::accept_blocks(const std::vector<Block>& blocks) {
    DispatchReport report;
    report.offered = blocks.size();
    bool broken = false;
    for (const auto& block : blocks) {
        if (!broken && block.header.height < height()) continue;
        const BlockHeader* prev = headers_.empty() ? nullptr : &headers_.back();
        if (!broken && ledger::validate_block(block, prev, config_.params)) {
            absorb(block);
            ++report.accepted;
        } else {
            broken = true;
            ++report.rejected;
        }
    }
    if (report.accepted > 0) rebuild_cache();
    return report;
}

// Access handshake

void Node::request_access(EndpointId provider, const Id160& provider_id, unsigned slot,
                          SimTime timeout, DecisionDone done) {
    const std::uint64_t rid = next_request_++;
    const SimTime started = sim_.now();
    Outgoing out{provider, provider_id, slot, std::move(done), 0};
    out.timeout = sim_.schedule_in(timeout, {}, [this, rid, started] {
        auto it = outgoing_.find(rid);
        if (it == outgoing_.end()) return;
        Outgoing o = std::move(it->second);
        outgoing_.erase(it);
        AccessDecision d;
        d.outcome = Outcome::TimedOut;
        d.provider_id = o.provider_id;
        d.requestor_id = id();
        d.slot = o.slot;
        d.requested_at = started;
        d.decided_at = sim_.now();
        d.as_of_height = height();
        d.reason = "no decision from provider";
        log_decision(d);
        if (o.done) o.done(AccessDecision(log_.back()));
    });
    outgoing_.emplace(rid, std::move(out));
    sim_.send(endpoint_, provider, std::string(msg::kHello), msg::Hello{rid, id(), slot});
}

std::uint64_t Node::issue_challenge(const Id160& requestor_id, unsigned slot) {
    std::uint64_t nonce = 0;
    do {
        nonce = rng_.next_u64();
    } while (nonce == 0 || challenges_.contains(nonce));
    challenges_.emplace(nonce, Challenge{requestor_id, slot});
    return nonce;
}

AccessDecision Node::denial(const AccessRequest& r, SimTime requested_at, std::string reason) const {
    AccessDecision d;
    d.outcome = Outcome::Denied;
    d.basis = Basis::None;
    d.provider_id = id();
    d.requestor_id = r.requestor_id;
    d.slot = r.slot;
    d.requested_at = requested_at;
    d.decided_at = sim_.now();
    d.as_of_height = height();
    d.reason = std::move(reason);
    return d;
}

void Node::authorize(const AccessRequest& request, DecisionDone done) {
    const SimTime now = sim_.now();
    auto reject = [&](std::string reason) {
        AccessDecision d = denial(request, now, std::move(reason));
        log_decision(d);
        if (done) done(AccessDecision(log_.back()));
    };
    if (request.provider_id != id()) return reject("addressed to another provider");
    if (!request.authentic()) return reject("signature does not verify");
    auto ch = challenges_.find(request.nonce);
    if (ch == challenges_.end()) return reject("unknown or reused nonce");
    if (ch->second.requestor_id != request.requestor_id || ch->second.slot != request.slot) {
        return reject("challenge issued for another request");
    }
    challenges_.erase(ch);

    const std::uint64_t pid = next_request_++;
    pending_.emplace(pid, Pending{request, now, std::move(done), {}, false});
    const NodePolicy& policy = config_.policy;
    if (policy.pure_availability()) {
        finish(pid, Basis::LocalCache);
        return;
    }
    Pending& p = pending_.at(pid);
    if (policy.pure_consistency()) {
        p.timers.push_back(
            sim_.schedule_in(policy.request_deadline_ms, {}, [this, pid] { time_out(pid); }));
    } else {
        // The fallback yields to a ledger reply landing in the same millisecond.
        p.timers.push_back(sim_.schedule_in(policy.freshness_threshold, {}, [this, pid] {
            sim_.schedule_in(0, {}, [this, pid] { finish(pid, Basis::LocalCache); });
        }));
    }
    attempt_fetch(pid);
}

void Node::attempt_fetch(std::uint64_t pid) {
    auto it = pending_.find(pid);
    if (it == pending_.end()) return;
    it->second.timers.push_back(sim_.schedule_in(config_.policy.fetch_retry_ms, {},
                                                 [this, pid] { attempt_fetch(pid); }));
    sync([this, pid](bool ok) {
        if (ok && pending_.contains(pid)) finish(pid, Basis::FreshLedger);
    });
}

void Node::finish(std::uint64_t pid, Basis basis) {
    auto it = pending_.find(pid);
    if (it == pending_.end()) return;
    Pending p = std::move(it->second);
    pending_.erase(it);
    for (auto t : p.timers) sim_.cancel(t);
    log_decision(decide(p, basis));
    if (p.done) p.done(AccessDecision(log_.back()));
}

void Node::time_out(std::uint64_t pid) {
    auto it = pending_.find(pid);
    if (it == pending_.end()) return;
    Pending p = std::move(it->second);
    pending_.erase(it);
    for (auto t : p.timers) sim_.cancel(t);
    AccessDecision d = denial(p.request, p.requested_at, "ledger unreachable before deadline");
    d.outcome = Outcome::TimedOut;
    log_decision(d);
    if (p.done) p.done(AccessDecision(log_.back()));
}

AccessDecision Node::decide(const Pending& p, Basis basis) const {
    const AccessRequest& r = p.request;
    const SimTime now = sim_.now();
    AccessDecision d = denial(r, p.requested_at, {});
    d.basis = basis;

    const auto& ttl = config_.policy.cache_ttl_min;
    if (basis == Basis::LocalCache && ttl &&
        static_cast<double>(now - cache_refreshed_at_) > *ttl * ledger::kMillisPerMinute) {
        d.reason = "cache older than its ttl";
        return d;
    }
    const CacheEntry* entry = cache_.get(id(), r.requestor_id);
    if (entry == nullptr) {
        d.reason = "no grant";
        return d;
    }
    AccessContract grant = entry->contract;
    if (grant.expired_at(now)) {
        auto fallback = contracts::resolve(relevant_, id(), r.requestor_id, height() - 1, now);
        if (!fallback) {
            d.reason = "grant expired";
            return d;
        }
        grant = *fallback;
    }
    if (!proves(grant.digest)) {
        d.reason = "grant lacks a verifying proof";
        return d;
    }
    d.contract = grant.digest;
    if (!grant.allows(r.slot)) {
        d.reason = "slot not permitted";
        return d;
    }
    d.outcome = Outcome::Granted;
    d.reason = {};
    return d;
}

bool Node::proves(const Hash256& contract_digest) const {
    auto it = proofs_.find(contract_digest);
    if (it == proofs_.end()) return false;
    const ProvenTx& p = it->second;
    return p.at.height < height() && p.proof.root == headers_[p.at.height].merkle_root &&
           ledger::verify_proof_for_hash(ledger::merkle_leaf_hash(p.tx.bytes()), p.proof);
}

void Node::log_decision(const AccessDecision& d) {
    log_.push_back(d);
    log_.back().observer = config_.name;
}

// Block dispatch

void Node::dispatch_to(EndpointId target, DispatchDone done, Tamper tamper) {
    const std::uint64_t rid = next_request_++;
    dispatches_.emplace(rid, Dispatch{target, std::move(done), std::move(tamper), 0});
    sim_.send(endpoint_, target, std::string(msg::kTipQuery), msg::TipQuery{rid});
}

void dispatch_blocks(Node& carrier, const Node& target, Node::DispatchDone done,
                     Node::Tamper tamper) {
    carrier.dispatch_to(target.endpoint(), std::move(done), std::move(tamper));
}

void Node::handle(const Message& m) {
    if (m.kind == msg::kSyncReply) {
        on_sync_reply(m.as<msg::SyncReply>());
    } else if (m.kind == msg::kHello) {
        const auto& hello = m.as<msg::Hello>();
        const std::uint64_t nonce = issue_challenge(hello.requestor_id, hello.slot);
        sim_.send(endpoint_, m.from, std::string(msg::kChallenge),
                  msg::Challenge{hello.request_id, nonce});
    } else if (m.kind == msg::kChallenge) {
        const auto& ch = m.as<msg::Challenge>();
        auto it = outgoing_.find(ch.request_id);
        if (it == outgoing_.end()) return;
        AccessRequest req = AccessRequest::make(identity_, it->second.provider_id, it->second.slot,
                                                ch.nonce);
        sim_.send(endpoint_, m.from, std::string(msg::kRequest), msg::Request{ch.request_id, req});
    } else if (m.kind == msg::kRequest) {
        const auto& req = m.as<msg::Request>();
        const EndpointId from = m.from;
        const std::uint64_t rid = req.request_id;
        authorize(req.body, [this, from, rid](const AccessDecision& d) {
            sim_.send(endpoint_, from, std::string(msg::kDecision), msg::Decision{rid, d});
        });
    } else if (m.kind == msg::kDecision) {
        const auto& dec = m.as<msg::Decision>();
        auto it = outgoing_.find(dec.request_id);
        if (it == outgoing_.end()) return;
        Outgoing o = std::move(it->second);
        outgoing_.erase(it);
        sim_.cancel(o.timeout);
        log_decision(dec.decision);
        if (o.done) o.done(AccessDecision(log_.back()));
    } else if (m.kind == msg::kTipQuery) {
        sim_.send(endpoint_, m.from, std::string(msg::kTip),
                  msg::Tip{m.as<msg::TipQuery>().request_id, height()});
    } else if (m.kind == msg::kTip) {
        const auto& tip = m.as<msg::Tip>();
        auto it = dispatches_.find(tip.request_id);
        if (it == dispatches_.end()) return;
        std::vector<Block> batch;
        for (const auto& b : blocks_) {
            if (b.header.height >= tip.height) batch.push_back(b);
        }
        if (it->second.tamper) it->second.tamper(batch);
        it->second.offered = batch.size();
        if (batch.empty()) {
            Dispatch d = std::move(it->second);
            dispatches_.erase(it);
            if (d.done) d.done(DispatchReport{});
            return;
        }
        sim_.send(endpoint_, it->second.target, std::string(msg::kBlocks),
                  msg::Blocks{tip.request_id, std::move(batch)});
    } else if (m.kind == msg::kBlocks) {
        const auto& batch = m.as<msg::Blocks>();
        DispatchReport r = accept_blocks(batch.blocks);
        sim_.send(endpoint_, m.from, std::string(msg::kBlocksAck),
                  msg::BlocksAck{batch.request_id, r.accepted, r.rejected});
    } else if (m.kind == msg::kBlocksAck) {
        const auto& ack = m.as<msg::BlocksAck>();
        auto it = dispatches_.find(ack.request_id);
        if (it == dispatches_.end()) return;
        Dispatch d = std::move(it->second);
        dispatches_.erase(it);
        if (d.done) d.done(DispatchReport{d.offered, ack.accepted, ack.rejected});
    } else if (fallback_) {
        fallback_(m);
    }
}

} // namespace uniquid::node
