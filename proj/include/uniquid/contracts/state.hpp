#pragma once

#include "uniquid/contracts/contracts.hpp"
#include "uniquid/ledger/chain.hpp"

#include <optional>
#include <span>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace uniquid::contracts {

using ledger::TxLocation;

// A contract transaction admitted into a block, with its position.
struct ContractEvent {
    Transaction tx;
    TxLocation at;
    Contract contract;
};

enum class Verdict {
    Accepted,
    BadSignature,
    Malformed,
    AlreadyImprinted,
    IdMismatch,
    UnknownDevice,
    NotAuthorized,
    UnknownContract,
    AlreadyRevoked,
};

std::string_view to_string(Verdict v);

// Governance state obtained by replaying admitted contracts in chain order.
// A Grant, Revoke or TransferOwnership is admitted only when signed by the
// administrator governing the device at the position it would occupy.
class ContractState {
public:
    // Checks and, when accepted, records the transaction at `at`.
    Verdict apply(const Transaction& tx, TxLocation at);
    [[nodiscard]] Verdict check(const Transaction& tx) const;

    // Replays every block of `chain` from `from_height`.
    void apply_chain(const ledger::Chain& chain, std::uint64_t from_height = 0);

    [[nodiscard]] bool is_imprinted(const Id160& device) const { return devices_.contains(device); }
    [[nodiscard]] std::optional<PublicKey> admin_of(const Id160& device) const;
    [[nodiscard]] std::optional<PublicKey> device_key(const Id160& device) const;
    [[nodiscard]] const ContractEvent* find(const Hash256& digest) const;
    [[nodiscard]] bool is_revoked(const Hash256& grant_digest) const {
        return revoked_.contains(grant_digest);
    }
    [[nodiscard]] std::span<const ContractEvent> events() const noexcept { return events_; }

    // Admission hook for mine_block backed by this state.
    [[nodiscard]] ledger::AdmissionFilter admission_filter();

private:
    struct DeviceRecord {
        PublicKey device_pubkey;
        PublicKey admin_pubkey;
    };

    [[nodiscard]] Verdict evaluate(const Transaction& tx, const Contract& c) const;

    std::vector<ContractEvent> events_;
    std::unordered_map<Hash256, std::size_t> by_digest_;
    std::unordered_map<Id160, DeviceRecord> devices_;
    std::unordered_set<Hash256> revoked_;
};

// Effective access contract for (provider, requestor) at `at_height`:
// the latest grant by (height, index) that is neither revoked at or below
// that height nor expired at `now` (expiry ignored when `now` is absent).
std::optional<AccessContract> resolve(std::span<const ContractEvent> events,
                                      const Id160& provider_id, const Id160& requestor_id,
                                      std::uint64_t at_height,
                                      std::optional<SimMillis> now = std::nullopt);

// Transaction factories. Each checks the caller's view of the ledger and
// throws the matching Error before signing anything.

// Throws AlreadyImprinted.
Transaction create_imprinting_contract(const AnnouncedIdentity& device,
                                       const PublicKey& admin_pubkey, const Identity& imprinter,
                                       const ContractState& view);
// Throws UnknownContract when the device has no imprint, NotAuthorized
// when the signer is not its administrator.
Transaction transfer_ownership(const ContractState& view, const Id160& device_id,
                               const PublicKey& new_admin_pubkey, const Identity& current_admin);
// Throws NotAuthorized when the signer does not govern the provider.
Transaction create_grant(const ContractState& view, const Identity& admin,
                         const Id160& provider_id, const Id160& requestor_id, AclMask acl,
                         std::optional<SimMillis> expiry, std::uint64_t serial = 0);
// Throws UnknownContract, NotAuthorized.
Transaction create_revocation(const ContractState& view, const Identity& admin,
                              const Hash256& contract_digest);

// Imprinting node: remembers the devices it has already issued contracts
// for, on top of what the ledger view reports.
class Imprinter {
public:
    explicit Imprinter(Identity identity) : identity_(std::move(identity)) {}

    [[nodiscard]] const Identity& identity() const noexcept { return identity_; }

    // Throws AlreadyImprinted.
    Transaction imprint(const AnnouncedIdentity& device, const PublicKey& admin_pubkey,
                        const ContractState& view);

private:
    Identity identity_;
    std::unordered_set<Id160> issued_;
};

} // namespace uniquid::contracts
