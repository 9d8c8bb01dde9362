#pragma once

#include "uniquid/crypto.hpp"

#include <cstddef>
#include <vector>

namespace uniquid::ledger {

// Binary Merkle tree over SHA-256. Leaves are hashed once; internal nodes
// hash the concatenation of their children. A layer of odd width
// duplicates its last node before pairing.
struct MerkleProof {
    std::size_t leaf_index = 0;
    std::vector<Hash256> siblings;  // bottom-up
    Hash256 root;

    friend bool operator==(const MerkleProof&, const MerkleProof&) = default;
};

Hash256 merkle_leaf_hash(ByteSpan leaf);

// Throws Error(EmptyTree) on an empty list.
Hash256 merkle_root(const std::vector<Bytes>& leaves);
Hash256 merkle_root_of_hashes(std::vector<Hash256> layer);

// Throws Error(IndexError) when index is out of range.
MerkleProof build_proof(const std::vector<Bytes>& leaves, std::size_t index);
MerkleProof build_proof_from_hashes(std::vector<Hash256> layer, std::size_t index);

bool verify_proof(ByteSpan leaf, const MerkleProof& proof);
bool verify_proof_for_hash(const Hash256& leaf_hash, const MerkleProof& proof);

} // namespace uniquid::ledger
