#include "uniquid/ledger/chain.hpp"

#include "uniquid/error.hpp"

#include <istream>
#include <ostream>
#include <sstream>
#include <string>

namespace uniquid::ledger {

namespace {

constexpr std::string_view kChainMagic = "# uniquid-chain v1";

std::string chain_header_line(const LedgerParams& p) {
    std::ostringstream os;
    os << kChainMagic << " hash=" << kHashName << " sig=" << kSignatureName
       << " tx_size=" << p.tx_size_bytes << " block_size=" << p.block_size_bytes
       << " difficulty_bits=" << p.difficulty_bits;
    return os.str();
}

} // namespace

Chain::Chain(LedgerParams params) : params_(params) {
    params_.validate();
}

Hash256 Chain::tip_hash() const {
    return blocks_.empty() ? Hash256{} : blocks_.back().digest();
}

bool Chain::append(Block block) {
    if (!validate_block(block, *this, params_)) {
        return false;
    }
    for (std::uint32_t i = 0; i < block.txs.size(); ++i) {
        index_.emplace(block.txs[i].digest(), TxLocation{block.header.height, i});
    }
    blocks_.push_back(std::move(block));
    return true;
}

std::optional<TxLocation> Chain::locate(const Hash256& tx_digest) const {
    auto it = index_.find(tx_digest);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

std::optional<MerkleProof> Chain::proof_for(const Hash256& tx_digest) const {
    auto loc = locate(tx_digest);
    if (!loc) return std::nullopt;
    const auto& txs = blocks_[loc->height].txs;
    std::vector<Hash256> leaves;
    leaves.reserve(txs.size());
    for (const auto& tx : txs) {
        leaves.push_back(merkle_leaf_hash(tx.bytes()));
    }
    return build_proof_from_hashes(std::move(leaves), loc->index);
}

void Chain::export_to(std::ostream& out) const {
    out << chain_header_line(params_) << '\n';
    for (const auto& block : blocks_) {
        out << to_hex(block.serialize()) << '\n';
    }
}

Chain Chain::import_from(std::istream& in, LedgerParams params) {
    Chain chain(params);
    std::string line;
    if (!std::getline(in, line) || line != chain_header_line(chain.params_)) {
        throw Error(ErrorCode::MalformedRecord, "chain file header does not match parameters");
    }
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        Block block;
        try {
            block = Block::deserialize(from_hex(line));
        } catch (const std::invalid_argument& e) {
            throw Error(ErrorCode::MalformedRecord, e.what());
        }
        if (!chain.append(std::move(block))) {
            throw Error(ErrorCode::MalformedRecord,
                        "block at height " + std::to_string(chain.height()) + " fails validation");
        }
    }
    return chain;
}

bool validate_block(const Block& block, const Chain& chain, const LedgerParams& params) {
    return validate_block(block, chain.tip_header(), params);
}

bool validate_block(const Block& block, const BlockHeader* prev, const LedgerParams& params) {
    const BlockHeader& h = block.header;
    if (h.tx_count != block.txs.size()) return false;
    if (block.txs.size() * params.tx_size_bytes > params.block_size_bytes) return false;
    if (h.merkle_root != block_merkle_root(block.txs)) return false;
    return validate_header(h, prev, params);
}

SubmitAck submit_tx(Mempool& pool, const Transaction& tx) {
    if (!tx.signature_valid()) {
        throw Error(ErrorCode::RejectedTx, "signature does not verify under the signer key");
    }
    if (!pool.seen_.insert(tx.digest()).second) {
        return SubmitAck::DuplicateTx;
    }
    pool.queue_.push_back(tx);
    return SubmitAck::Queued;
}

Block mine_block(Mempool& pool, Chain& chain, SimMillis now, const AdmissionFilter& admit) {
    const LedgerParams& params = chain.params();
    const std::uint64_t capacity = params.block_capacity();

    Block block;
    block.header.height = chain.height();
    block.header.prev_hash = chain.tip_hash();
    block.header.timestamp_ms = now;
    if (const BlockHeader* tip = chain.tip_header(); tip && tip->timestamp_ms > now) {
        block.header.timestamp_ms = tip->timestamp_ms;
    }

    while (!pool.queue_.empty() && block.txs.size() < capacity) {
        Transaction tx = std::move(pool.queue_.front());
        pool.queue_.pop_front();
        TxLocation slot{block.header.height, static_cast<std::uint32_t>(block.txs.size())};
        if (admit && !admit(tx, slot)) {
            continue;
        }
        block.txs.push_back(std::move(tx));
    }

    block.header.tx_count = static_cast<std::uint32_t>(block.txs.size());
    block.header.merkle_root = block_merkle_root(block.txs);
    solve_pow(block.header, params.difficulty_bits);
    if (!chain.append(block)) {
        throw std::logic_error("freshly mined block failed validation");
    }
    return block;
}

} // namespace uniquid::ledger
