#pragma once

#include "uniquid/crypto.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <string_view>

namespace uniquid::ledger {

enum class TxKind : std::uint8_t {
    Imprint = 1,
    Grant = 2,
    Revoke = 3,
    TransferOwnership = 4,
};

std::string_view to_string(TxKind kind);

// Canonical 400-byte ledger record.
//
//   offset  size  field
//        0     1  layout version (1)
//        1     1  kind
//        2    32  signer public key
//       34     2  body length, little endian
//       36   300  body, zero padded
//      336    64  Ed25519 signature over bytes [0, 336)
//
// The body is opaque to the ledger; the contracts layer defines it.
class Transaction {
public:
    static constexpr std::size_t kSize = 400;
    static constexpr std::size_t kMaxBody = 300;
    static constexpr std::uint8_t kVersion = 1;

    using Raw = std::array<Byte, kSize>;

    // Builds and signs a record. Throws Error(RejectedTx) when the body
    // does not fit.
    static Transaction create(TxKind kind, const KeyPair& signer, ByteSpan body);

    // Throws Error(MalformedRecord) on a wrong size, unknown kind or version,
    // or non-zero padding.
    static Transaction from_bytes(ByteSpan raw);

    [[nodiscard]] TxKind kind() const noexcept { return static_cast<TxKind>(raw_[1]); }
    [[nodiscard]] PublicKey signer() const;
    [[nodiscard]] ByteSpan body() const;
    [[nodiscard]] Signature signature() const;
    [[nodiscard]] const Raw& bytes() const noexcept { return raw_; }
    [[nodiscard]] const Hash256& digest() const noexcept { return digest_; }

    [[nodiscard]] bool signature_valid() const;

    friend bool operator==(const Transaction& a, const Transaction& b) { return a.raw_ == b.raw_; }

private:
    Transaction() = default;
    void refresh_digest();

    Raw raw_{};
    Hash256 digest_;
};

} // namespace uniquid::ledger
