#include "uniquid/ledger/merkle.hpp"

#include "uniquid/error.hpp"

#include <string>

namespace uniquid::ledger {

namespace {

std::vector<Hash256> hash_leaves(const std::vector<Bytes>& leaves) {
    std::vector<Hash256> out;
    out.reserve(leaves.size());
    for (const auto& leaf : leaves) {
        out.push_back(merkle_leaf_hash(leaf));
    }
    return out;
}

std::vector<Hash256> next_layer(const std::vector<Hash256>& layer) {
    std::vector<Hash256> up;
    up.reserve((layer.size() + 1) / 2);
    for (std::size_t i = 0; i < layer.size(); i += 2) {
        const Hash256& left = layer[i];
        const Hash256& right = i + 1 < layer.size() ? layer[i + 1] : layer[i];
        up.push_back(sha256_pair(left, right));
    }
    return up;
}

} // namespace

Hash256 merkle_leaf_hash(ByteSpan leaf) {
    return sha256(leaf);
}

Hash256 merkle_root(const std::vector<Bytes>& leaves) {
    return merkle_root_of_hashes(hash_leaves(leaves));
}

Hash256 merkle_root_of_hashes(std::vector<Hash256> layer) {
    if (layer.empty()) {
        throw Error(ErrorCode::EmptyTree, "merkle_root of zero leaves");
    }
    while (layer.size() > 1) {
        layer = next_layer(layer);
    }
    return layer.front();
}

MerkleProof build_proof(const std::vector<Bytes>& leaves, std::size_t index) {
    return build_proof_from_hashes(hash_leaves(leaves), index);
}

MerkleProof build_proof_from_hashes(std::vector<Hash256> layer, std::size_t index) {
    if (index >= layer.size()) {
        throw Error(ErrorCode::IndexError, "leaf index " + std::to_string(index) +
                                               " out of range for " +
                                               std::to_string(layer.size()) + " leaves");
    }
    MerkleProof proof;
    proof.leaf_index = index;
    std::size_t pos = index;
    while (layer.size() > 1) {
        std::size_t sibling = pos ^ 1U;
        proof.siblings.push_back(sibling < layer.size() ? layer[sibling] : layer[pos]);
        layer = next_layer(layer);
        pos >>= 1U;
    }
    proof.root = layer.front();
    return proof;
}

bool verify_proof(ByteSpan leaf, const MerkleProof& proof) {
    return verify_proof_for_hash(merkle_leaf_hash(leaf), proof);
}

bool verify_proof_for_hash(const Hash256& leaf_hash, const MerkleProof& proof) {
    if (proof.siblings.size() < 64 && (proof.leaf_index >> proof.siblings.size()) != 0) {
        return false;
    }
    Hash256 acc = leaf_hash;
    std::size_t pos = proof.leaf_index;
    for (const auto& sibling : proof.siblings) {
        acc = (pos & 1U) == 0 ? sha256_pair(acc, sibling) : sha256_pair(sibling, acc);
        pos >>= 1U;
    }
    return acc == proof.root;
}

} // namespace uniquid::ledger
