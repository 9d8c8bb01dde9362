#include "uniquid/contracts/state.hpp"

#include "uniquid/error.hpp"

namespace uniquid::contracts {

std::string_view to_string(Verdict v) {
    switch (v) {
    case Verdict::Accepted: return "Accepted";
    case Verdict::BadSignature: return "BadSignature";
    case Verdict::Malformed: return "Malformed";
    case Verdict::AlreadyImprinted: return "AlreadyImprinted";
    case Verdict::IdMismatch: return "IdMismatch";
    case Verdict::UnknownDevice: return "UnknownDevice";
    case Verdict::NotAuthorized: return "NotAuthorized";
    case Verdict::UnknownContract: return "UnknownContract";
    case Verdict::AlreadyRevoked: return "AlreadyRevoked";
    }
    return "Unknown";
}

Verdict ContractState::evaluate(const Transaction& tx, const Contract& c) const {
    if (!tx.signature_valid()) {
        return Verdict::BadSignature;
    }
    if (const auto* ic = std::get_if<ImprintingContract>(&c)) {
        if (derive_id(ic->device_pubkey) != ic->device_id) return Verdict::IdMismatch;
        if (is_imprinted(ic->device_id)) return Verdict::AlreadyImprinted;
        return Verdict::Accepted;
    }
    if (const auto* tr = std::get_if<OwnershipTransfer>(&c)) {
        auto admin = admin_of(tr->device_id);
        if (!admin) return Verdict::UnknownDevice;
        return *admin == tr->admin_pubkey ? Verdict::Accepted : Verdict::NotAuthorized;
    }
    if (const auto* g = std::get_if<AccessContract>(&c)) {
        auto admin = admin_of(g->provider_id);
        if (!admin) return Verdict::UnknownDevice;
        return *admin == g->admin_pubkey ? Verdict::Accepted : Verdict::NotAuthorized;
    }
    const auto& rv = std::get<Revocation>(c);
    const ContractEvent* target = find(rv.target);
    if (target == nullptr) return Verdict::UnknownContract;
    const auto* grant = std::get_if<AccessContract>(&target->contract);
    if (grant == nullptr || grant->provider_id != rv.provider_id ||
        grant->requestor_id != rv.requestor_id) {
        return Verdict::UnknownContract;
    }
    if (is_revoked(rv.target)) return Verdict::AlreadyRevoked;
    auto admin = admin_of(grant->provider_id);
    if (!admin || *admin != rv.admin_pubkey) return Verdict::NotAuthorized;
    return Verdict::Accepted;
}

Verdict ContractState::check(const Transaction& tx) const {
    try {
        return evaluate(tx, decode(tx));
    } catch (const Error&) {
        return Verdict::Malformed;
    }
}

Verdict ContractState::apply(const Transaction& tx, TxLocation at) {
    Contract c;
    try {
        c = decode(tx);
    } catch (const Error&) {
        return Verdict::Malformed;
    }
    Verdict v = evaluate(tx, c);
    if (v != Verdict::Accepted) {
        return v;
    }
    std::visit(
        [&](auto& item) {
            using T = std::decay_t<decltype(item)>;
            if constexpr (std::is_same_v<T, ImprintingContract>) {
                devices_.emplace(item.device_id, DeviceRecord{item.device_pubkey, item.admin_pubkey});
            } else if constexpr (std::is_same_v<T, OwnershipTransfer>) {
                devices_.at(item.device_id).admin_pubkey = item.new_admin_pubkey;
            } else if constexpr (std::is_same_v<T, AccessContract>) {
                item.valid_from = at.height;
                item.index = at.index;
            } else {
                revoked_.insert(item.target);
            }
        },
        c);
    by_digest_.emplace(tx.digest(), events_.size());
    events_.push_back(ContractEvent{tx, at, std::move(c)});
    return Verdict::Accepted;
}

void ContractState::apply_chain(const ledger::Chain& chain, std::uint64_t from_height) {
    for (std::uint64_t h = from_height; h < chain.height(); ++h) {
        const auto& txs = chain.at(h).txs;
        for (std::uint32_t i = 0; i < txs.size(); ++i) {
            apply(txs[i], TxLocation{h, i});
        }
    }
}

std::optional<PublicKey> ContractState::admin_of(const Id160& device) const {
    auto it = devices_.find(device);
    if (it == devices_.end()) return std::nullopt;
    return it->second.admin_pubkey;
}

std::optional<PublicKey> ContractState::device_key(const Id160& device) const {
    auto it = devices_.find(device);
    if (it == devices_.end()) return std::nullopt;
    return it->second.device_pubkey;
}

const ContractEvent* ContractState::find(const Hash256& digest) const {
    auto it = by_digest_.find(digest);
    return it == by_digest_.end() ? nullptr : &events_[it->second];
}

ledger::AdmissionFilter ContractState::admission_filter() {
    return [this](const Transaction& tx, TxLocation at) {
        return apply(tx, at) == Verdict::Accepted;
    };
}

std::optional<AccessContract> resolve(std::span<const ContractEvent> events,
                                      const Id160& provider_id, const Id160& requestor_id,
                                      std::uint64_t at_height, std::optional<SimMillis> now) {
    std::unordered_set<Hash256> revoked;
    for (const auto& ev : events) {
        if (ev.at.height > at_height) continue;
        if (const auto* rv = std::get_if<Revocation>(&ev.contract)) {
            revoked.insert(rv->target);
        }
    }
    const AccessContract* best = nullptr;
    TxLocation best_at{};
    for (const auto& ev : events) {
        if (ev.at.height > at_height) continue;
        const auto* g = std::get_if<AccessContract>(&ev.contract);
        if (g == nullptr || g->provider_id != provider_id || g->requestor_id != requestor_id) {
            continue;
        }
        if (revoked.contains(g->digest)) continue;
        if (now && g->expired_at(*now)) continue;
        if (best == nullptr || best_at < ev.at) {
            best = g;
            best_at = ev.at;
        }
    }
    if (best == nullptr) return std::nullopt;
    AccessContract out = *best;
    out.valid_from = best_at.height;
    out.index = best_at.index;
    return out;
}

Transaction create_imprinting_contract(const AnnouncedIdentity& device,
                                       const PublicKey& admin_pubkey, const Identity& imprinter,
                                       const ContractState& view) {
    if (view.is_imprinted(device.id)) {
        throw Error(ErrorCode::AlreadyImprinted, "device " + to_hex(device.id) + " already imprinted");
    }
    return encode_imprint(device, admin_pubkey, imprinter.keys());
}

Transaction transfer_ownership(const ContractState& view, const Id160& device_id,
                               const PublicKey& new_admin_pubkey, const Identity& current_admin) {
    auto admin = view.admin_of(device_id);
    if (!admin) {
        throw Error(ErrorCode::UnknownContract, "no imprinting contract for " + to_hex(device_id));
    }
    if (*admin != current_admin.public_key()) {
        throw Error(ErrorCode::NotAuthorized, "signer is not the device administrator");
    }
    return encode_transfer(device_id, new_admin_pubkey, current_admin.keys());
}

Transaction create_grant(const ContractState& view, const Identity& admin,
                         const Id160& provider_id, const Id160& requestor_id, AclMask acl,
                         std::optional<SimMillis> expiry, std::uint64_t serial) {
    auto governing = view.admin_of(provider_id);
    if (!governing || *governing != admin.public_key()) {
        throw Error(ErrorCode::NotAuthorized, "signer does not govern provider " + to_hex(provider_id));
    }
    return encode_grant(provider_id, requestor_id, acl, expiry, serial, admin.keys());
}

Transaction create_revocation(const ContractState& view, const Identity& admin,
                              const Hash256& contract_digest) {
    const ContractEvent* target = view.find(contract_digest);
    const AccessContract* grant =
        target != nullptr ? std::get_if<AccessContract>(&target->contract) : nullptr;
    if (grant == nullptr) {
        throw Error(ErrorCode::UnknownContract, "no grant with digest " + to_hex(contract_digest));
    }
    auto governing = view.admin_of(grant->provider_id);
    if (!governing || *governing != admin.public_key()) {
        throw Error(ErrorCode::NotAuthorized, "signer does not govern the granting provider");
    }
    return encode_revocation(contract_digest, grant->provider_id, grant->requestor_id,
                             admin.keys());
}

Transaction Imprinter::imprint(const AnnouncedIdentity& device, const PublicKey& admin_pubkey,
                               const ContractState& view) {
    if (issued_.contains(device.id)) {
        throw Error(ErrorCode::AlreadyImprinted,
                    "imprinting contract already issued for " + to_hex(device.id));
    }
    Transaction tx = create_imprinting_contract(device, admin_pubkey, identity_, view);
    issued_.insert(device.id);
    return tx;
}

} // namespace uniquid::contracts
