#pragma once

#include "uniquid/crypto.hpp"
#include "uniquid/ledger/transaction.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace uniquid::ledger {

// Simulated time in milliseconds. Minutes appear only at the edges
// (parameters and reports).
using SimMillis = std::int64_t;

inline constexpr SimMillis kMillisPerMinute = 60'000;

struct LedgerParams {
    std::uint64_t block_size_bytes = 1'000'000;
    std::uint64_t tx_size_bytes = Transaction::kSize;
    double avg_mining_time_min = 2.5;
    unsigned difficulty_bits = 16;

    // Throws Error(InvalidParams).
    void validate() const;
    [[nodiscard]] std::uint64_t block_capacity() const { return block_size_bytes / tx_size_bytes; }
    [[nodiscard]] SimMillis mining_interval_ms() const;
};

// Enrolments per minute a chain with these parameters can absorb:
// block_size / (tx_size * mining_time). Throws Error(InvalidParams).
double theoretical_upper_bound(const LedgerParams& params);

struct BlockHeader {
    static constexpr std::size_t kSize = 92;

    std::uint64_t height = 0;
    Hash256 prev_hash;
    Hash256 merkle_root;
    SimMillis timestamp_ms = 0;
    std::uint32_t tx_count = 0;
    std::uint64_t nonce = 0;  // last field, so mining can reuse the prefix state

    [[nodiscard]] std::array<Byte, kSize> serialize() const;
    static BlockHeader deserialize(ByteSpan raw);
    [[nodiscard]] Hash256 digest() const;

    friend bool operator==(const BlockHeader&, const BlockHeader&) = default;
};

bool meets_difficulty(const Hash256& digest, unsigned bits);

struct Block {
    BlockHeader header;
    std::vector<Transaction> txs;

    [[nodiscard]] Hash256 digest() const { return header.digest(); }
    [[nodiscard]] Bytes serialize() const;
    // Throws Error(MalformedRecord).
    static Block deserialize(ByteSpan raw);

    friend bool operator==(const Block&, const Block&) = default;
};

// Root committed by a block: zero digest for an empty block.
Hash256 block_merkle_root(const std::vector<Transaction>& txs);

// Finds the smallest nonce meeting the difficulty and stores it in the header.
void solve_pow(BlockHeader& header, unsigned difficulty_bits);

// Header-only checks available to nodes that do not hold the body:
// height and hash linkage to `prev` (nullptr for genesis), monotone
// timestamps, and the difficulty predicate.
bool validate_header(const BlockHeader& header, const BlockHeader* prev,
                     const LedgerParams& params);

} // namespace uniquid::ledger
