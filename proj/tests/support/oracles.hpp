#pragma once

// Independent reference computations used by the tests. Nothing here calls
// into the library code paths it is used to check.

#include "uniquid/contracts/state.hpp"

#include <sodium.h>

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <vector>

namespace oracle {

using Bytes = std::vector<unsigned char>;

inline Bytes sha256(const Bytes& in) {
    Bytes out(crypto_hash_sha256_BYTES);
    crypto_hash_sha256(out.data(), in.data(), in.size());
    return out;
}

inline Bytes concat(const Bytes& a, const Bytes& b) {
    Bytes out(a);
    out.insert(out.end(), b.begin(), b.end());
    return out;
}

// Layer-by-layer Merkle root with last-node duplication.
inline Bytes merkle_root(const std::vector<Bytes>& leaves) {
    std::vector<Bytes> layer;
    for (const auto& l : leaves) layer.push_back(sha256(l));
    while (layer.size() > 1) {
        if (layer.size() % 2 == 1) layer.push_back(layer.back());
        std::vector<Bytes> up;
        for (std::size_t i = 0; i < layer.size(); i += 2) {
            up.push_back(sha256(concat(layer[i], layer[i + 1])));
        }
        layer = up;
    }
    return layer.front();
}

inline std::size_t ceil_log2(std::size_t n) {
    std::size_t k = 0;
    while ((std::size_t{1} << k) < n) ++k;
    return k;
}

// Brute-force replay of grant/revoke events: for every grant of the pair
// visible at `h`, scan all revocations again; keep the max (height, index).
struct ReplayEvent {
    enum Kind { Grant, Revoke } kind;
    std::uint64_t height;
    std::uint32_t index;
    int provider;
    int requestor;
    int grant_id;   // Grant: own id; Revoke: target id
    std::optional<std::int64_t> expiry;
};

inline std::optional<int> replay(const std::vector<ReplayEvent>& events, int provider,
                                 int requestor, std::uint64_t h,
                                 std::optional<std::int64_t> now) {
    std::optional<int> best;
    std::pair<std::uint64_t, std::uint32_t> best_at{0, 0};
    for (const auto& g : events) {
        if (g.kind != ReplayEvent::Grant || g.height > h) continue;
        if (g.provider != provider || g.requestor != requestor) continue;
        bool revoked = false;
        for (const auto& r : events) {
            if (r.kind == ReplayEvent::Revoke && r.height <= h && r.grant_id == g.grant_id) {
                revoked = true;
            }
        }
        if (revoked) continue;
        if (now && g.expiry && *now >= *g.expiry) continue;
        std::pair<std::uint64_t, std::uint32_t> at{g.height, g.index};
        if (!best || best_at < at) {
            best = g.grant_id;
            best_at = at;
        }
    }
    return best;
}

} // namespace oracle
