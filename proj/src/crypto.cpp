#include "uniquid/crypto.hpp"

#include "uniquid/error.hpp"

#define OPENSSL_SUPPRESS_DEPRECATED
#include <openssl/sha.h>
#include <sodium.h>

#include <algorithm>
#include <cstring>
#include <stdexcept>

namespace uniquid {

namespace {

struct SodiumInit {
    SodiumInit() {
        if (sodium_init() < 0) {
            throw std::runtime_error("libsodium initialisation failed");
        }
    }
};

void ensure_sodium() {
    static const SodiumInit init;
}

int hex_value(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}

} // namespace

std::string_view to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::EmptyTree: return "EmptyTree";
    case ErrorCode::IndexError: return "IndexError";
    case ErrorCode::RejectedTx: return "RejectedTx";
    case ErrorCode::DuplicateTx: return "DuplicateTx";
    case ErrorCode::InvalidParams: return "InvalidParams";
    case ErrorCode::MalformedRecord: return "MalformedRecord";
    case ErrorCode::AlreadyImprinted: return "AlreadyImprinted";
    case ErrorCode::NotAuthorized: return "NotAuthorized";
    case ErrorCode::UnknownContract: return "UnknownContract";
    case ErrorCode::ScheduleConflict: return "ScheduleConflict";
    case ErrorCode::ScenarioConfig: return "ScenarioConfig";
    case ErrorCode::EmptyStats: return "EmptyStats";
    }
    return "Unknown";
}

std::string to_hex(ByteSpan bytes) {
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string out;
    out.reserve(bytes.size() * 2);
    for (Byte b : bytes) {
        out.push_back(kDigits[b >> 4]);
        out.push_back(kDigits[b & 0x0f]);
    }
    return out;
}

Bytes from_hex(std::string_view hex) {
    if (hex.size() % 2 != 0) {
        throw std::invalid_argument("hex string has odd length");
    }
    Bytes out(hex.size() / 2);
    for (std::size_t i = 0; i < out.size(); ++i) {
        int hi = hex_value(hex[2 * i]);
        int lo = hex_value(hex[2 * i + 1]);
        if (hi < 0 || lo < 0) {
            throw std::invalid_argument("invalid hex digit");
        }
        out[i] = static_cast<Byte>((hi << 4) | lo);
    }
    return out;
}

static_assert(sizeof(SHA256_CTX) <= 112);

Sha256::Sha256() { SHA256_Init(reinterpret_cast<SHA256_CTX*>(state_.data())); }

Sha256& Sha256::update(ByteSpan data) {
    SHA256_Update(reinterpret_cast<SHA256_CTX*>(state_.data()), data.data(), data.size());
    return *this;
}

Hash256 Sha256::finish() const {
    SHA256_CTX ctx;
    std::memcpy(&ctx, state_.data(), sizeof ctx);
    Hash256 out;
    SHA256_Final(out.data.data(), &ctx);
    return out;
}

Hash256 sha256(ByteSpan data) { return Sha256().update(data).finish(); }

Hash256 sha256_pair(const Hash256& left, const Hash256& right) {
    std::array<Byte, 64> buf;
    std::copy(left.data.begin(), left.data.end(), buf.begin());
    std::copy(right.data.begin(), right.data.end(), buf.begin() + 32);
    return sha256(buf);
}

std::uint64_t Rng::below(std::uint64_t bound) {
    if (bound == 0) {
        throw std::invalid_argument("Rng::below: bound must be positive");
    }
    // Rejection sampling keeps the result unbiased and portable.
    const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % bound);
    std::uint64_t x;
    do {
        x = engine_();
    } while (x >= limit);
    return x % bound;
}

void Rng::fill(std::span<Byte> out) {
    std::size_t i = 0;
    while (i < out.size()) {
        std::uint64_t word = engine_();
        for (int k = 0; k < 8 && i < out.size(); ++k, ++i) {
            out[i] = static_cast<Byte>(word >> (8 * k));
        }
    }
}

KeyPair KeyPair::from_seed(const std::array<Byte, 32>& seed) {
    ensure_sodium();
    KeyPair kp;
    crypto_sign_seed_keypair(kp.public_key_.data.data(), kp.secret_key_.data(), seed.data());
    return kp;
}

KeyPair KeyPair::generate(Rng& rng) {
    std::array<Byte, 32> seed;
    rng.fill(seed);
    return from_seed(seed);
}

Signature KeyPair::sign(ByteSpan message) const {
    Signature sig;
    crypto_sign_detached(sig.data.data(), nullptr, message.data(), message.size(),
                         secret_key_.data());
    return sig;
}

bool verify_signature(const PublicKey& key, ByteSpan message, const Signature& sig) {
    ensure_sodium();
    return crypto_sign_verify_detached(sig.data.data(), message.data(), message.size(),
                                       key.data.data()) == 0;
}

Id160 derive_id(const PublicKey& key) {
    Hash256 h = sha256(key.span());
    Id160 id;
    std::copy_n(h.data.begin(), id.data.size(), id.data.begin());
    return id;
}

} // namespace uniquid
