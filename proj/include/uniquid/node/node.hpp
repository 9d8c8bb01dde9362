#pragma once

#include "uniquid/contracts/state.hpp"
#include "uniquid/node/protocol.hpp"

#include <functional>
#include <map>
#include <unordered_map>

namespace uniquid::node {

struct CacheEntry {
    AccessContract contract;
    Hash256 tx_digest;
    MerkleProof proof;
    std::uint64_t as_of_height = 0;  // headers known when the entry was computed
    SimTime refreshed_at = 0;
};

// Effective grant per (provider, requestor), each with its inclusion proof.
class ContractCache {
public:
    using Key = std::pair<Id160, Id160>;

    void put(const Id160& provider, const Id160& requestor, CacheEntry entry);
    void erase(const Id160& provider, const Id160& requestor);
    [[nodiscard]] const CacheEntry* get(const Id160& provider, const Id160& requestor) const;
    [[nodiscard]] std::size_t size() const noexcept { return entries_.size(); }
    [[nodiscard]] const std::map<Key, CacheEntry>& entries() const noexcept { return entries_; }

private:
    std::map<Key, CacheEntry> entries_;
};

struct NodeConfig {
    std::string name;
    NodePolicy policy;
    ledger::LedgerParams params;
    // Keep whole blocks (carrier role) instead of headers plus relevant contracts.
    bool full_replica = false;
    // A sync with no reply after this long counts as failed.
    SimTime sync_timeout_ms = 10'000;
};

struct SyncStatus {
    std::size_t attempts = 0;
    std::size_t failures = 0;
    std::optional<SimTime> last_success;
};

struct DispatchReport {
    std::size_t offered = 0;
    std::size_t accepted = 0;
    std::size_t rejected = 0;
};

// A UniquID device. Talks to the ledger and to peers only through netsim
// messages; every access decision it takes lands in its decision log.
class Node {
public:
    using SyncDone = std::function<void(bool ok)>;
    using DecisionDone = std::function<void(const AccessDecision&)>;

    Node(netsim::Simulator& sim, Identity identity, NodeConfig config,
         std::optional<EndpointId> ledger = std::nullopt);

    Node(const Node&) = delete;
    Node& operator=(const Node&) = delete;

    [[nodiscard]] EndpointId endpoint() const noexcept { return endpoint_; }
    [[nodiscard]] const Identity& identity() const noexcept { return identity_; }
    [[nodiscard]] const Id160& id() const noexcept { return identity_.id(); }
    [[nodiscard]] const std::string& name() const noexcept { return config_.name; }
    [[nodiscard]] const NodePolicy& policy() const noexcept { return config_.policy; }
    void set_policy(NodePolicy policy);

    [[nodiscard]] std::uint64_t height() const noexcept { return headers_.size(); }
    [[nodiscard]] const std::vector<BlockHeader>& headers() const noexcept { return headers_; }
    [[nodiscard]] const std::vector<Block>& blocks() const noexcept { return blocks_; }
    [[nodiscard]] const ContractCache& cache() const noexcept { return cache_; }
    [[nodiscard]] const SyncStatus& sync_status() const noexcept { return sync_status_; }
    [[nodiscard]] const std::vector<AccessDecision>& decision_log() const noexcept { return log_; }

    // True when the contract is held with a proof that verifies against a
    // header this node validated.
    [[nodiscard]] bool proves(const Hash256& contract_digest) const;

    // Receives message kinds the node protocol does not use.
    void set_fallback_handler(netsim::Handler handler) { fallback_ = std::move(handler); }

    // Fetches headers and relevant contracts (or whole blocks for a full
    // replica) past the local tip. A partitioned link leaves state as is.
    void sync(SyncDone done = {});

    // Requestor side: hello, challenge, signed request, decision. Reports
    // TimedOut when no decision arrives within `timeout`.
    void request_access(EndpointId provider, const Id160& provider_id, unsigned slot,
                        SimTime timeout, DecisionDone done = {});

    // Provider side. Issues a nonce for a later AccessRequest.
    std::uint64_t issue_challenge(const Id160& requestor_id, unsigned slot);
    // Decides a signed request under the node policy; `done` runs once the
    // decision is taken (possibly later in simulated time).
    void authorize(const AccessRequest& request, DecisionDone done = {});

    // Validates and appends blocks in order; the first failure rejects it
    // and everything after it.
    DispatchReport accept_blocks(const std::vector<Block>& blocks);

    using DispatchDone = std::function<void(const DispatchReport&)>;
    using Tamper = std::function<void(std::vector<Block>&)>;
    // Carrier side: asks the target for its tip, pushes every held block
    // past it, and reports the target's verdict. `tamper` may rewrite the
    // batch before it leaves.
    void dispatch_to(EndpointId target, DispatchDone done = {}, Tamper tamper = {});

private:
    struct Pending {
        AccessRequest request;
        SimTime requested_at = 0;
        DecisionDone done;
        std::vector<netsim::TimerId> timers;
        bool finished = false;
    };
    struct Outgoing {
        EndpointId provider = 0;
        Id160 provider_id;
        unsigned slot = 0;
        DecisionDone done;
        netsim::TimerId timeout = 0;
    };
    struct Dispatch {
        EndpointId target = 0;
        DispatchDone done;
        Tamper tamper;
        std::size_t offered = 0;
    };
    struct Challenge {
        Id160 requestor_id;
        unsigned slot = 0;
    };

    void handle(const netsim::Message& m);
    void on_sync_reply(const msg::SyncReply& reply);
    bool append_header(const BlockHeader& header);
    void absorb(const Block& block);
    void remember(const ProvenTx& item);
    void rebuild_cache();
    void attempt_fetch(std::uint64_t pending_id);
    void finish(std::uint64_t pending_id, Basis basis);
    void time_out(std::uint64_t pending_id);
    AccessDecision decide(const Pending& p, Basis basis) const;
    AccessDecision denial(const AccessRequest& r, SimTime requested_at, std::string reason) const;
    void log_decision(const AccessDecision& d);
    void schedule_refresh();

    netsim::Simulator& sim_;
    Identity identity_;
    NodeConfig config_;
    std::optional<EndpointId> ledger_;
    EndpointId endpoint_;
    Rng rng_;

    std::vector<BlockHeader> headers_;
    std::vector<Block> blocks_;  // full replicas only
    std::vector<contracts::ContractEvent> relevant_;
    std::unordered_map<Hash256, ProvenTx> proofs_;
    ContractCache cache_;
    SimTime cache_refreshed_at_ = 0;

    std::uint64_t next_request_ = 1;
    std::map<std::uint64_t, SyncDone> syncs_;
    SyncStatus sync_status_;
    std::map<std::uint64_t, Pending> pending_;
    std::map<std::uint64_t, Outgoing> outgoing_;
    std::unordered_map<std::uint64_t, Challenge> challenges_;
    std::map<std::uint64_t, Dispatch> dispatches_;
    std::vector<AccessDecision> log_;
    netsim::Handler fallback_;
};

// Runs carrier.dispatch_to(target). Blocks move only over the simulated link.
void dispatch_blocks(Node& carrier, const Node& target, Node::DispatchDone done = {},
                     Node::Tamper tamper = {});

} // namespace uniquid::node
