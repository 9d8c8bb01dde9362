#pragma once

#include "uniquid/contracts/contracts.hpp"
#include "uniquid/ledger/chain.hpp"
#include "uniquid/netsim/simulator.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace uniquid::node {

using contracts::AccessContract;
using contracts::Identity;
using ledger::Block;
using ledger::BlockHeader;
using ledger::MerkleProof;
using ledger::Transaction;
using ledger::TxLocation;
using netsim::EndpointId;
using netsim::SimTime;

// Threshold sentinel for pure consistency: wait for the ledger, never fall
// back to the cache.
inline constexpr SimTime kWaitForever = netsim::kForever;

struct NodePolicy {
    // 0 decides from the cache at once; kWaitForever never does.
    SimTime freshness_threshold = 0;
    // Cached contracts older than this are ignored. None keeps them forever.
    std::optional<double> cache_ttl_min;
    // Interval between fetch attempts while a decision is pending.
    SimTime fetch_retry_ms = 1'000;
    // A consistency-mode provider answers TimedOut once a request has been
    // pending this long.
    SimTime request_deadline_ms = 30'000;
    // Periodic background sync; none means sync only on demand.
    std::optional<SimTime> refresh_interval_ms;

    [[nodiscard]] bool pure_availability() const noexcept { return freshness_threshold == 0; }
    [[nodiscard]] bool pure_consistency() const noexcept {
        return freshness_threshold == kWaitForever;
    }
    // Throws Error(InvalidParams).
    void validate() const;
};

// Signed third leg of the handshake: binds the requestor key to the
// provider-issued nonce.
struct AccessRequest {
    Id160 requestor_id;
    PublicKey requestor_pubkey;
    Id160 provider_id;
    unsigned slot = 0;
    std::uint64_t nonce = 0;
    Signature signature;

    static AccessRequest make(const Identity& requestor, const Id160& provider_id, unsigned slot,
                              std::uint64_t nonce);
    [[nodiscard]] Bytes signing_payload() const;
    // Signature valid and the id derived from the presented key.
    [[nodiscard]] bool authentic() const;
};

enum class Outcome { Granted, Denied, TimedOut };
enum class Basis { FreshLedger, LocalCache, None };

std::string_view to_string(Outcome o);
std::string_view to_string(Basis b);

struct AccessDecision {
    Outcome outcome = Outcome::Denied;
    Basis basis = Basis::None;
    std::uint64_t as_of_height = 0;  // headers known when deciding
    Id160 provider_id;
    Id160 requestor_id;
    unsigned slot = 0;
    SimTime requested_at = 0;
    SimTime decided_at = 0;
    std::optional<Hash256> contract;  // grant cited by the decision
    std::string reason;
    std::string observer;  // node that logged the record

    [[nodiscard]] SimTime wait() const noexcept { return decided_at - requested_at; }
    [[nodiscard]] bool granted() const noexcept { return outcome == Outcome::Granted; }
    // key=value fields, space separated.
    [[nodiscard]] std::string line() const;
};

void export_decision_log(std::ostream& out, const std::vector<AccessDecision>& log);

// Contract transaction plus where it sits and how to prove it.
struct ProvenTx {
    Transaction tx;
    TxLocation at;
    MerkleProof proof;
};

// Wire payloads. Message kinds are the string constants below.
namespace msg {

inline constexpr std::string_view kSync = "sync";
inline constexpr std::string_view kSyncReply = "sync-reply";
inline constexpr std::string_view kSubmit = "submit";
inline constexpr std::string_view kSubmitAck = "submit-ack";
inline constexpr std::string_view kHello = "access-hello";
inline constexpr std::string_view kChallenge = "access-challenge";
inline constexpr std::string_view kRequest = "access-request";
inline constexpr std::string_view kDecision = "access-decision";
inline constexpr std::string_view kTipQuery = "tip-query";
inline constexpr std::string_view kTip = "tip";
inline constexpr std::string_view kBlocks = "blocks";
inline constexpr std::string_view kBlocksAck = "blocks-ack";

struct Sync {
    std::uint64_t request_id = 0;
    Id160 node_id;
    std::uint64_t known_height = 0;
    bool full_blocks = false;
};

struct SyncReply {
    std::uint64_t request_id = 0;
    std::vector<BlockHeader> headers;  // headers-only mode
    std::vector<ProvenTx> relevant;    // headers-only mode
    std::vector<Block> blocks;         // full mode
};

struct Submit {
    std::uint64_t request_id = 0;
    Transaction tx;
};

struct SubmitAck {
    std::uint64_t request_id = 0;
    Hash256 digest;
    bool accepted = false;  // queued now or earlier
};

struct Hello {
    std::uint64_t request_id = 0;
    Id160 requestor_id;
    unsigned slot = 0;
};

struct Challenge {
    std::uint64_t request_id = 0;
    std::uint64_t nonce = 0;
};

struct Request {
    std::uint64_t request_id = 0;
    AccessRequest body;
};

struct Decision {
    std::uint64_t request_id = 0;
    AccessDecision decision;
};

struct TipQuery {
    std::uint64_t request_id = 0;
};

struct Tip {
    std::uint64_t request_id = 0;
    std::uint64_t height = 0;
};

struct Blocks {
    std::uint64_t request_id = 0;
    std::vector<Block> blocks;
};

struct BlocksAck {
    std::uint64_t request_id = 0;
    std::size_t accepted = 0;
    std::size_t rejected = 0;
};

} // namespace msg

// True when the contract names `id` as device, provider or requestor.
bool involves(const contracts::Contract& c, const Id160& id);

} // namespace uniquid::node
