#include "uniquid/ledger/transaction.hpp"

#include "uniquid/error.hpp"

#include <algorithm>
#include <string>

namespace uniquid::ledger {

namespace {

constexpr std::size_t kKindOffset = 1;
constexpr std::size_t kSignerOffset = 2;
constexpr std::size_t kLengthOffset = 34;
constexpr std::size_t kBodyOffset = 36;
constexpr std::size_t kSignatureOffset = kBodyOffset + Transaction::kMaxBody;

static_assert(kSignatureOffset + 64 == Transaction::kSize);

bool known_kind(Byte k) {
    return k >= static_cast<Byte>(TxKind::Imprint) &&
           k <= static_cast<Byte>(TxKind::TransferOwnership);
}

std::size_t body_length(const Transaction::Raw& raw) {
    return static_cast<std::size_t>(raw[kLengthOffset]) |
           (static_cast<std::size_t>(raw[kLengthOffset + 1]) << 8);
}

} // namespace

std::string_view to_string(TxKind kind) {
    switch (kind) {
    case TxKind::Imprint: return "Imprint";
    case TxKind::Grant: return "Grant";
    case TxKind::Revoke: return "Revoke";
    case TxKind::TransferOwnership: return "TransferOwnership";
    }
    return "Unknown";
}

Transaction Transaction::create(TxKind kind, const KeyPair& signer, ByteSpan body) {
    if (body.size() > kMaxBody) {
        throw Error(ErrorCode::RejectedTx,
                    "body of " + std::to_string(body.size()) + " bytes exceeds the fixed layout");
    }
    Transaction tx;
    tx.raw_[0] = kVersion;
    tx.raw_[kKindOffset] = static_cast<Byte>(kind);
    const auto& pk = signer.public_key().data;
    std::copy(pk.begin(), pk.end(), tx.raw_.begin() + kSignerOffset);
    tx.raw_[kLengthOffset] = static_cast<Byte>(body.size() & 0xff);
    tx.raw_[kLengthOffset + 1] = static_cast<Byte>(body.size() >> 8);
    std::copy(body.begin(), body.end(), tx.raw_.begin() + kBodyOffset);

    Signature sig = signer.sign(ByteSpan(tx.raw_.data(), kSignatureOffset));
    std::copy(sig.data.begin(), sig.data.end(), tx.raw_.begin() + kSignatureOffset);
    tx.refresh_digest();
    return tx;
}

Transaction Transaction::from_bytes(ByteSpan raw) {
    if (raw.size() != kSize) {
        throw Error(ErrorCode::MalformedRecord,
                    "transaction must be " + std::to_string(kSize) + " bytes, got " +
                        std::to_string(raw.size()));
    }
    Transaction tx;
    std::copy(raw.begin(), raw.end(), tx.raw_.begin());
    if (tx.raw_[0] != kVersion) {
        throw Error(ErrorCode::MalformedRecord, "unknown transaction layout version");
    }
    if (!known_kind(tx.raw_[kKindOffset])) {
        throw Error(ErrorCode::MalformedRecord, "unknown transaction kind");
    }
    std::size_t len = body_length(tx.raw_);
    if (len > kMaxBody) {
        throw Error(ErrorCode::MalformedRecord, "declared body length exceeds layout");
    }
    auto pad_begin = tx.raw_.begin() + static_cast<std::ptrdiff_t>(kBodyOffset + len);
    auto pad_end = tx.raw_.begin() + kSignatureOffset;
    if (std::any_of(pad_begin, pad_end, [](Byte b) { return b != 0; })) {
        throw Error(ErrorCode::MalformedRecord, "non-zero padding");
    }
    tx.refresh_digest();
    return tx;
}

PublicKey Transaction::signer() const {
    PublicKey pk;
    std::copy_n(raw_.begin() + kSignerOffset, pk.data.size(), pk.data.begin());
    return pk;
}

ByteSpan Transaction::body() const {
    return ByteSpan(raw_.data() + kBodyOffset, std::min(body_length(raw_), kMaxBody));
}

Signature Transaction::signature() const {
    Signature sig;
    std::copy_n(raw_.begin() + kSignatureOffset, sig.data.size(), sig.data.begin());
    return sig;
}

bool Transaction::signature_valid() const {
    return verify_signature(signer(), ByteSpan(raw_.data(), kSignatureOffset), signature());
}

void Transaction::refresh_digest() {
    digest_ = sha256(raw_);
}

} // namespace uniquid::ledger
