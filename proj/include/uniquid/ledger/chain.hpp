#pragma once

#include "uniquid/ledger/block.hpp"
#include "uniquid/ledger/merkle.hpp"

#include <deque>
#include <functional>
#include <iosfwd>
#include <optional>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace uniquid::ledger {

struct TxLocation {
    std::uint64_t height = 0;
    std::uint32_t index = 0;

    friend auto operator<=>(const TxLocation&, const TxLocation&) = default;
};

// Append-only block store. Single writer; readers get const views.
class Chain {
public:
    explicit Chain(LedgerParams params);

    [[nodiscard]] const LedgerParams& params() const noexcept { return params_; }
    // Height the next block will carry (== number of blocks).
    [[nodiscard]] std::uint64_t height() const noexcept { return blocks_.size(); }
    [[nodiscard]] Hash256 tip_hash() const;
    [[nodiscard]] const std::vector<Block>& blocks() const noexcept { return blocks_; }
    [[nodiscard]] const Block& at(std::uint64_t height) const { return blocks_.at(height); }
    [[nodiscard]] const BlockHeader* tip_header() const {
        return blocks_.empty() ? nullptr : &blocks_.back().header;
    }

    // Appends after validate_block; returns false (and leaves the chain
    // untouched) when the block does not extend the tip.
    bool append(Block block);

    [[nodiscard]] std::optional<TxLocation> locate(const Hash256& tx_digest) const;
    // Inclusion proof for a mined transaction.
    [[nodiscard]] std::optional<MerkleProof> proof_for(const Hash256& tx_digest) const;

    // One header line naming the primitives, then one hex-encoded block per line.
    void export_to(std::ostream& out) const;
    // Throws Error(MalformedRecord) on a bad header or any block failing validation.
    static Chain import_from(std::istream& in, LedgerParams params);

private:
    LedgerParams params_;
    std::vector<Block> blocks_;
    std::unordered_map<Hash256, TxLocation> index_;
};

bool validate_block(const Block& block, const Chain& chain, const LedgerParams& params);
// Same checks against a bare parent header, for nodes that keep headers only.
bool validate_block(const Block& block, const BlockHeader* prev, const LedgerParams& params);

enum class SubmitAck { Queued, DuplicateTx };

// FIFO transaction pool with all-time digest deduplication.
class Mempool {
public:
    [[nodiscard]] std::size_t size() const noexcept { return queue_.size(); }
    [[nodiscard]] bool empty() const noexcept { return queue_.empty(); }
    [[nodiscard]] bool contains(const Hash256& digest) const { return seen_.contains(digest); }
    [[nodiscard]] const std::deque<Transaction>& pending() const noexcept { return queue_; }

private:
    friend SubmitAck submit_tx(Mempool& pool, const Transaction& tx);
    friend Block mine_block(Mempool&, Chain&, SimMillis,
                            const std::function<bool(const Transaction&, TxLocation)>&);

    std::deque<Transaction> queue_;
    std::unordered_set<Hash256> seen_;
};

// Throws Error(RejectedTx) when the signature does not verify.
SubmitAck submit_tx(Mempool& pool, const Transaction& tx);

// Admission hook consulted in FIFO order while assembling a block; a
// rejected transaction is dropped from the pool. The location is the slot
// the transaction would occupy.
using AdmissionFilter = std::function<bool(const Transaction&, TxLocation)>;

// Assembles up to block_capacity() transactions in FIFO order, solves the
// proof of work, and appends the block to the chain.
Block mine_block(Mempool& pool, Chain& chain, SimMillis now,
                 const AdmissionFilter& admit = {});

} // namespace uniquid::ledger
