#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <algorithm>
#include <random>
#include <stdexcept>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace uniquid {

using Byte = std::uint8_t;
using Bytes = std::vector<Byte>;
using ByteSpan = std::span<const Byte>;

// Fixed-width byte strings used as digests and keys. The tag keeps
// e.g. a public key from being passed where a digest is expected.
template <std::size_t N, typename Tag>
struct FixedBytes {
    std::array<Byte, N> data{};

    static constexpr std::size_t size() noexcept { return N; }
    [[nodiscard]] ByteSpan span() const noexcept { return {data.data(), N}; }
    [[nodiscard]] bool is_zero() const noexcept {
        for (Byte b : data) {
            if (b != 0) return false;
        }
        return true;
    }

    friend auto operator<=>(const FixedBytes&, const FixedBytes&) = default;
};

struct Hash256Tag {};
struct Id160Tag {};
struct PublicKeyTag {};
struct SignatureTag {};

using Hash256 = FixedBytes<32, Hash256Tag>;
using Id160 = FixedBytes<20, Id160Tag>;
using PublicKey = FixedBytes<32, PublicKeyTag>;
using Signature = FixedBytes<64, SignatureTag>;

// Names of the primitives, written into the header of every emitted artifact.
inline constexpr std::string_view kHashName = "sha256";
inline constexpr std::string_view kSignatureName = "ed25519";

std::string to_hex(ByteSpan bytes);
Bytes from_hex(std::string_view hex);

template <std::size_t N, typename Tag>
std::string to_hex(const FixedBytes<N, Tag>& v) {
    return to_hex(v.span());
}

template <typename T>
T fixed_from_hex(std::string_view hex) {
    Bytes raw = from_hex(hex);
    T out;
    if (raw.size() != T::size()) {
        throw std::invalid_argument("hex string has wrong length");
    }
    std::copy(raw.begin(), raw.end(), out.data.begin());
    return out;
}

Hash256 sha256(ByteSpan data);

// Incremental SHA-256. Copies carry the absorbed prefix.
class Sha256 {
public:
    Sha256();
    Sha256& update(ByteSpan data);
    [[nodiscard]] Hash256 finish() const;

private:
    alignas(8) std::array<unsigned char, 112> state_{};
};

Hash256 sha256_pair(const Hash256& left, const Hash256& right);

// Deterministic random source. All randomness in the project flows from
// one of these so a seed pins every run.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }
    // Uniform in [0, 1) with 53 bits of precision.
    double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    // Uniform integer in [0, bound).
    std::uint64_t below(std::uint64_t bound);
    void fill(std::span<Byte> out);

private:
    std::mt19937_64 engine_;
};

class KeyPair {
public:
    static KeyPair from_seed(const std::array<Byte, 32>& seed);
    static KeyPair generate(Rng& rng);

    [[nodiscard]] const PublicKey& public_key() const noexcept { return public_key_; }
    [[nodiscard]] Signature sign(ByteSpan message) const;

private:
    KeyPair() = default;

    PublicKey public_key_;
    std::array<Byte, 64> secret_key_{};
};

bool verify_signature(const PublicKey& key, ByteSpan message, const Signature& sig);

// 160-bit identifier of a public key: truncated SHA-256.
Id160 derive_id(const PublicKey& key);

} // namespace uniquid

template <std::size_t N, typename Tag>
struct std::hash<uniquid::FixedBytes<N, Tag>> {
    std::size_t operator()(const uniquid::FixedBytes<N, Tag>& v) const noexcept {
        std::size_t h = 0;
        for (std::size_t i = 0; i < sizeof(std::size_t) && i < N; ++i) {
            h = (h << 8) | v.data[i];
        }
        return h;
    }
};
