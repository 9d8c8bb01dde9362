#include "uniquid/contracts/contracts.hpp"

#include "uniquid/error.hpp"

#include <algorithm>

namespace uniquid::contracts {

namespace {

class BodyWriter {
public:
    template <std::size_t N, typename Tag>
    BodyWriter& put(const FixedBytes<N, Tag>& v) {
        out_.insert(out_.end(), v.data.begin(), v.data.end());
        return *this;
    }
    BodyWriter& put_u8(std::uint8_t v) {
        out_.push_back(v);
        return *this;
    }
    BodyWriter& put_u32(std::uint32_t v) { return put_le(v, 4); }
    BodyWriter& put_u64(std::uint64_t v) { return put_le(v, 8); }

    [[nodiscard]] const Bytes& bytes() const noexcept { return out_; }

private:
    BodyWriter& put_le(std::uint64_t v, int n) {
        for (int i = 0; i < n; ++i) {
            out_.push_back(static_cast<Byte>(v >> (8 * i)));
        }
        return *this;
    }

    Bytes out_;
};

class BodyReader {
public:
    BodyReader(ByteSpan in, std::size_t expected) : in_(in) {
        if (in.size() != expected) {
            throw Error(ErrorCode::MalformedRecord, "contract body has unexpected length");
        }
    }

    template <typename T>
    T fixed() {
        T v;
        std::copy_n(in_.begin() + static_cast<std::ptrdiff_t>(pos_), T::size(), v.data.begin());
        pos_ += T::size();
        return v;
    }
    std::uint8_t u8() { return in_[pos_++]; }
    std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
    std::uint64_t u64() { return le(8); }

private:
    std::uint64_t le(int n) {
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i) {
            v |= static_cast<std::uint64_t>(in_[pos_++]) << (8 * i);
        }
        return v;
    }

    ByteSpan in_;
    std::size_t pos_ = 0;
};

constexpr std::size_t kImprintBody = 20 + 32 + 32;
constexpr std::size_t kTransferBody = 20 + 32;
constexpr std::size_t kGrantBody = 20 + 20 + 4 + 1 + 8 + 8;
constexpr std::size_t kRevokeBody = 32 + 20 + 20;

} // namespace

Identity Identity::generate(Rng& rng) {
    return Identity(KeyPair::generate(rng));
}

Contract decode(const Transaction& tx) {
    switch (tx.kind()) {
    case TxKind::Imprint: {
        BodyReader r(tx.body(), kImprintBody);
        ImprintingContract c;
        c.device_id = r.fixed<Id160>();
        c.device_pubkey = r.fixed<PublicKey>();
        c.admin_pubkey = r.fixed<PublicKey>();
        c.imprinter_pubkey = tx.signer();
        c.imprinter_signature = tx.signature();
        c.digest = tx.digest();
        return c;
    }
    case TxKind::TransferOwnership: {
        BodyReader r(tx.body(), kTransferBody);
        OwnershipTransfer c;
        c.device_id = r.fixed<Id160>();
        c.new_admin_pubkey = r.fixed<PublicKey>();
        c.admin_pubkey = tx.signer();
        c.admin_signature = tx.signature();
        c.digest = tx.digest();
        return c;
    }
    case TxKind::Grant: {
        BodyReader r(tx.body(), kGrantBody);
        AccessContract c;
        c.provider_id = r.fixed<Id160>();
        c.requestor_id = r.fixed<Id160>();
        c.acl = r.u32();
        std::uint8_t has_expiry = r.u8();
        auto expiry = static_cast<SimMillis>(r.u64());
        if (has_expiry > 1 || (has_expiry == 0 && expiry != 0)) {
            throw Error(ErrorCode::MalformedRecord, "grant expiry flag is not canonical");
        }
        if (has_expiry == 1) c.expiry = expiry;
        c.serial = r.u64();
        c.admin_pubkey = tx.signer();
        c.admin_signature = tx.signature();
        c.digest = tx.digest();
        return c;
    }
    case TxKind::Revoke: {
        BodyReader r(tx.body(), kRevokeBody);
        Revocation c;
        c.target = r.fixed<Hash256>();
        c.provider_id = r.fixed<Id160>();
        c.requestor_id = r.fixed<Id160>();
        c.admin_pubkey = tx.signer();
        c.admin_signature = tx.signature();
        c.digest = tx.digest();
        return c;
    }
    }
    throw Error(ErrorCode::MalformedRecord, "unknown transaction kind");
}

Transaction encode_imprint(const AnnouncedIdentity& device, const PublicKey& admin_pubkey,
                           const KeyPair& imprinter) {
    BodyWriter w;
    w.put(device.id).put(device.public_key).put(admin_pubkey);
    return Transaction::create(TxKind::Imprint, imprinter, w.bytes());
}

Transaction encode_transfer(const Id160& device_id, const PublicKey& new_admin_pubkey,
                            const KeyPair& current_admin) {
    BodyWriter w;
    w.put(device_id).put(new_admin_pubkey);
    return Transaction::create(TxKind::TransferOwnership, current_admin, w.bytes());
}

Transaction encode_grant(const Id160& provider_id, const Id160& requestor_id, AclMask acl,
                         std::optional<SimMillis> expiry, std::uint64_t serial,
                         const KeyPair& admin) {
    BodyWriter w;
    w.put(provider_id).put(requestor_id).put_u32(acl);
    w.put_u8(expiry ? 1 : 0).put_u64(static_cast<std::uint64_t>(expiry.value_or(0)));
    w.put_u64(serial);
    return Transaction::create(TxKind::Grant, admin, w.bytes());
}

Transaction encode_revocation(const Hash256& target, const Id160& provider_id,
                              const Id160& requestor_id, const KeyPair& admin) {
    BodyWriter w;
    w.put(target).put(provider_id).put(requestor_id);
    return Transaction::create(TxKind::Revoke, admin, w.bytes());
}

} // namespace uniquid::contracts
