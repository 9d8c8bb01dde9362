#include "uniquid/node/protocol.hpp"

#include "uniquid/error.hpp"

#include <ostream>
#include <sstream>
#include <variant>

namespace uniquid::node {

namespace {

constexpr std::string_view kAccessDomain = "uniquid-access-v1";

void put_le(Bytes& out, std::uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) out.push_back(static_cast<Byte>(v >> (8 * i)));
}

template <typename T>
void put(Bytes& out, const T& fixed) {
    out.insert(out.end(), fixed.data.begin(), fixed.data.end());
}

std::string field(const std::string& s) {
    if (s.empty()) return "-";
    std::string out = s;
    for (char& c : out) {
        if (c == ' ' || c == '=') c = '_';
    }
    return out;
}

} // namespace

void NodePolicy::validate() const {
    if (freshness_threshold < 0) {
        throw Error(ErrorCode::InvalidParams, "freshness threshold must be non-negative");
    }
    if (cache_ttl_min && !(*cache_ttl_min > 0)) {
        throw Error(ErrorCode::InvalidParams, "cache ttl must be positive");
    }
    if (fetch_retry_ms <= 0 || request_deadline_ms <= 0) {
        throw Error(ErrorCode::InvalidParams, "retry interval and deadline must be positive");
    }
    if (refresh_interval_ms && *refresh_interval_ms <= 0) {
        throw Error(ErrorCode::InvalidParams, "refresh interval must be positive");
    }
}

AccessRequest AccessRequest::make(const Identity& requestor, const Id160& provider_id,
                                  unsigned slot, std::uint64_t nonce) {
    AccessRequest r;
    r.requestor_id = requestor.id();
    r.requestor_pubkey = requestor.public_key();
    r.provider_id = provider_id;
    r.slot = slot;
    r.nonce = nonce;
    r.signature = requestor.sign(r.signing_payload());
    return r;
}

Bytes AccessRequest::signing_payload() const {
    Bytes out(kAccessDomain.begin(), kAccessDomain.end());
    put(out, requestor_id);
    put(out, requestor_pubkey);
    put(out, provider_id);
    put_le(out, slot, 4);
    put_le(out, nonce, 8);
    return out;
}

bool AccessRequest::authentic() const {
    return derive_id(requestor_pubkey) == requestor_id &&
           verify_signature(requestor_pubkey, signing_payload(), signature);
}

std::string_view to_string(Outcome o) {
    switch (o) {
    case Outcome::Granted: return "Granted";
    case Outcome::Denied: return "Denied";
    case Outcome::TimedOut: return "TimedOut";
    }
    return "?";
}

std::string_view to_string(Basis b) {
    switch (b) {
    case Basis::FreshLedger: return "FreshLedger";
    case Basis::LocalCache: return "LocalCache";
    case Basis::None: return "None";
    }
    return "?";
}

std::string AccessDecision::line() const {
    std::ostringstream out;
    out << "time=" << decided_at << " observer=" << field(observer)
        << " provider=" << to_hex(provider_id) << " requestor=" << to_hex(requestor_id)
        << " slot=" << slot << " decision=" << to_string(outcome) << " basis=" << to_string(basis)
        << " height=" << as_of_height << " requested=" << requested_at << " wait_ms=" << wait()
        << " contract=" << (contract ? to_hex(*contract) : std::string("-"))
        << " reason=" << field(reason);
    return out.str();
}

void export_decision_log(std::ostream& out, const std::vector<AccessDecision>& log) {
    for (const auto& d : log) out << d.line() << '\n';
}

bool involves(const contracts::Contract& c, const Id160& id) {
    return std::visit(
        [&](const auto& item) {
            using T = std::decay_t<decltype(item)>;
            if constexpr (std::is_same_v<T, contracts::ImprintingContract> ||
                          std::is_same_v<T, contracts::OwnershipTransfer>) {
                return item.device_id == id;
            } else {
                return item.provider_id == id || item.requestor_id == id;
            }
        },
        c);
}

} // namespace uniquid::node
