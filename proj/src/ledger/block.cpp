#include "uniquid/ledger/block.hpp"

#include "uniquid/error.hpp"
#include "uniquid/ledger/merkle.hpp"


#include <bit>
#include <cmath>
#include <string>

namespace uniquid::ledger {

namespace {

template <typename T>
void put_le(Byte* out, T value) {
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        out[i] = static_cast<Byte>(static_cast<std::uint64_t>(value) >> (8 * i));
    }
}

template <typename T>
T get_le(const Byte* in) {
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        v |= static_cast<std::uint64_t>(in[i]) << (8 * i);
    }
    return static_cast<T>(v);
}

constexpr std::size_t kNonceOffset = BlockHeader::kSize - 8;

} // namespace

void LedgerParams::validate() const {
    if (tx_size_bytes == 0) {
        throw Error(ErrorCode::InvalidParams, "tx_size_bytes must be positive");
    }
    if (block_size_bytes < tx_size_bytes) {
        throw Error(ErrorCode::InvalidParams, "block_size_bytes must be at least tx_size_bytes");
    }
    if (!(avg_mining_time_min > 0.0) || !std::isfinite(avg_mining_time_min)) {
        throw Error(ErrorCode::InvalidParams, "avg_mining_time_min must be positive");
    }
    if (difficulty_bits > 64) {
        throw Error(ErrorCode::InvalidParams, "difficulty_bits above 64 is not desk scale");
    }
}

SimMillis LedgerParams::mining_interval_ms() const {
    return static_cast<SimMillis>(std::llround(avg_mining_time_min * kMillisPerMinute));
}

double theoretical_upper_bound(const LedgerParams& params) {
    if (params.block_size_bytes == 0 || params.tx_size_bytes == 0 ||
        !(params.avg_mining_time_min > 0.0)) {
        throw Error(ErrorCode::InvalidParams, "block size, tx size and mining time must be positive");
    }
    return static_cast<double>(params.block_size_bytes) /
           (static_cast<double>(params.tx_size_bytes) * params.avg_mining_time_min);
}

std::array<Byte, BlockHeader::kSize> BlockHeader::serialize() const {
    std::array<Byte, kSize> out{};
    Byte* p = out.data();
    put_le(p, height);
    p += 8;
    std::copy(prev_hash.data.begin(), prev_hash.data.end(), p);
    p += 32;
    std::copy(merkle_root.data.begin(), merkle_root.data.end(), p);
    p += 32;
    put_le(p, timestamp_ms);
    p += 8;
    put_le(p, tx_count);
    p += 4;
    put_le(p, nonce);
    return out;
}

BlockHeader BlockHeader::deserialize(ByteSpan raw) {
    if (raw.size() != kSize) {
        throw Error(ErrorCode::MalformedRecord, "block header must be 92 bytes");
    }
    BlockHeader h;
    const Byte* p = raw.data();
    h.height = get_le<std::uint64_t>(p);
    p += 8;
    std::copy_n(p, 32, h.prev_hash.data.begin());
    p += 32;
    std::copy_n(p, 32, h.merkle_root.data.begin());
    p += 32;
    h.timestamp_ms = get_le<std::int64_t>(p);
    p += 8;
    h.tx_count = get_le<std::uint32_t>(p);
    p += 4;
    h.nonce = get_le<std::uint64_t>(p);
    return h;
}

Hash256 BlockHeader::digest() const {
    return sha256(serialize());
}

bool meets_difficulty(const Hash256& digest, unsigned bits) {
    unsigned zeros = 0;
    for (Byte b : digest.data) {
        if (b == 0) {
            zeros += 8;
            if (zeros >= bits) return true;
            continue;
        }
        zeros += static_cast<unsigned>(std::countl_zero(b));
        break;
    }
    return zeros >= bits;
}

Bytes Block::serialize() const {
    Bytes out;
    out.reserve(BlockHeader::kSize + txs.size() * Transaction::kSize);
    auto head = header.serialize();
    out.insert(out.end(), head.begin(), head.end());
    for (const auto& tx : txs) {
        out.insert(out.end(), tx.bytes().begin(), tx.bytes().end());
    }
    return out;
}

Block Block::deserialize(ByteSpan raw) {
    if (raw.size() < BlockHeader::kSize) {
        throw Error(ErrorCode::MalformedRecord, "block shorter than its header");
    }
    Block block;
    block.header = BlockHeader::deserialize(raw.first(BlockHeader::kSize));
    std::size_t body = raw.size() - BlockHeader::kSize;
    if (body % Transaction::kSize != 0 ||
        body / Transaction::kSize != block.header.tx_count) {
        throw Error(ErrorCode::MalformedRecord,
                    "block body does not hold " + std::to_string(block.header.tx_count) +
                        " transactions");
    }
    block.txs.reserve(block.header.tx_count);
    for (std::size_t off = BlockHeader::kSize; off < raw.size(); off += Transaction::kSize) {
        block.txs.push_back(Transaction::from_bytes(raw.subspan(off, Transaction::kSize)));
    }
    return block;
}

Hash256 block_merkle_root(const std::vector<Transaction>& txs) {
    if (txs.empty()) {
        return Hash256{};
    }
    std::vector<Hash256> leaves;
    leaves.reserve(txs.size());
    for (const auto& tx : txs) {
        leaves.push_back(merkle_leaf_hash(tx.bytes()));
    }
    return merkle_root_of_hashes(std::move(leaves));
}

void solve_pow(BlockHeader& header, unsigned difficulty_bits) {
    auto raw = header.serialize();
    Sha256 prefix;
    prefix.update(ByteSpan(raw.data(), kNonceOffset));

    Hash256 digest;
    for (std::uint64_t nonce = 0;; ++nonce) {
        std::array<Byte, 8> tail;
        put_le(tail.data(), nonce);
        digest = Sha256(prefix).update(tail).finish();
        if (meets_difficulty(digest, difficulty_bits)) {
            header.nonce = nonce;
            return;
        }
    }
}

bool validate_header(const BlockHeader& header, const BlockHeader* prev,
                     const LedgerParams& params) {
    if (prev == nullptr) {
        if (header.height != 0 || !header.prev_hash.is_zero()) return false;
    } else {
        if (header.height != prev->height + 1) return false;
        if (header.prev_hash != prev->digest()) return false;
        if (header.timestamp_ms < prev->timestamp_ms) return false;
    }
    if (header.tx_count > params.block_capacity()) return false;
    return meets_difficulty(header.digest(), params.difficulty_bits);
}

} // namespace uniquid::ledger
