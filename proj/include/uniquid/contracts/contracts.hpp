#pragma once

#include "uniquid/crypto.hpp"
#include "uniquid/ledger/block.hpp"
#include "uniquid/ledger/transaction.hpp"

#include <cstdint>
#include <optional>
#include <variant>

namespace uniquid::contracts {

using ledger::SimMillis;
using ledger::Transaction;
using ledger::TxKind;

// An actor: keypair plus the 160-bit identifier derived from its public key.
// The private half never leaves this object.
class Identity {
public:
    static Identity generate(Rng& rng);

    [[nodiscard]] const Id160& id() const noexcept { return id_; }
    [[nodiscard]] const PublicKey& public_key() const noexcept { return keys_.public_key(); }
    [[nodiscard]] const KeyPair& keys() const noexcept { return keys_; }
    [[nodiscard]] Signature sign(ByteSpan message) const { return keys_.sign(message); }

private:
    explicit Identity(KeyPair keys) : keys_(std::move(keys)), id_(derive_id(keys_.public_key())) {}

    KeyPair keys_;
    Id160 id_;
};

// What a freshly generated device hands to its imprinter.
struct AnnouncedIdentity {
    Id160 id;
    PublicKey public_key;

    static AnnouncedIdentity of(const Identity& identity) {
        return {identity.id(), identity.public_key()};
    }
};

using AclMask = std::uint32_t;
inline constexpr unsigned kAclSlots = 32;

struct ImprintingContract {
    Id160 device_id;
    PublicKey device_pubkey;
    PublicKey admin_pubkey;
    PublicKey imprinter_pubkey;
    Signature imprinter_signature;
    Hash256 digest;
};

struct OwnershipTransfer {
    Id160 device_id;
    PublicKey new_admin_pubkey;
    PublicKey admin_pubkey;  // signer, the outgoing administrator
    Signature admin_signature;
    Hash256 digest;
};

struct AccessContract {
    Id160 provider_id;
    Id160 requestor_id;
    AclMask acl = 0;
    std::optional<SimMillis> expiry;  // absolute simulated time; none = until revoked
    std::uint64_t serial = 0;
    std::uint64_t valid_from = 0;  // height of the including block, set on admission
    std::uint32_t index = 0;       // position inside that block
    PublicKey admin_pubkey;
    Signature admin_signature;
    Hash256 digest;

    [[nodiscard]] bool allows(unsigned slot) const noexcept {
        return slot < kAclSlots && ((acl >> slot) & 1U) != 0;
    }
    [[nodiscard]] bool expired_at(SimMillis now) const noexcept {
        return expiry.has_value() && now >= *expiry;
    }
};

struct Revocation {
    Hash256 target;
    Id160 provider_id;
    Id160 requestor_id;
    PublicKey admin_pubkey;
    Signature admin_signature;
    Hash256 digest;
};

using Contract = std::variant<ImprintingContract, OwnershipTransfer, AccessContract, Revocation>;

// Throws Error(MalformedRecord) when the body does not match its kind.
Contract decode(const Transaction& tx);

Transaction encode_imprint(const AnnouncedIdentity& device, const PublicKey& admin_pubkey,
                           const KeyPair& imprinter);
Transaction encode_transfer(const Id160& device_id, const PublicKey& new_admin_pubkey,
                            const KeyPair& current_admin);
Transaction encode_grant(const Id160& provider_id, const Id160& requestor_id, AclMask acl,
                         std::optional<SimMillis> expiry, std::uint64_t serial,
                         const KeyPair& admin);
Transaction encode_revocation(const Hash256& target, const Id160& provider_id,
                              const Id160& requestor_id, const KeyPair& admin);

} // namespace uniquid::contracts
