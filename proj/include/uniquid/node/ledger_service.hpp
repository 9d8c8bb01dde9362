#pragma once

#include "uniquid/contracts/state.hpp"
#include "uniquid/node/protocol.hpp"

#include <functional>
#include <unordered_map>

namespace uniquid::node {

struct LedgerServiceConfig {
    ledger::LedgerParams params;
    // Empty pools are skipped instead of producing empty blocks.
    bool mine_empty_blocks = false;
};

// The ledger as a network endpoint: accepts submissions, mines on a fixed
// simulated interval with contract admission, and serves sync requests.
class LedgerService {
public:
    using BlockObserver = std::function<void(const Block&, SimTime)>;

    LedgerService(netsim::Simulator& sim, LedgerServiceConfig config, std::string name = "ledger");

    LedgerService(const LedgerService&) = delete;
    LedgerService& operator=(const LedgerService&) = delete;

    [[nodiscard]] EndpointId endpoint() const noexcept { return endpoint_; }
    [[nodiscard]] const ledger::Chain& chain() const noexcept { return chain_; }
    [[nodiscard]] const ledger::Mempool& mempool() const noexcept { return pool_; }
    [[nodiscard]] const contracts::ContractState& state() const noexcept { return state_; }

    // Schedules the first mining tick one interval from now.
    void start();
    void stop() { running_ = false; }

    // Local submission, bypassing the network. Throws like submit_tx.
    ledger::SubmitAck submit(const Transaction& tx);
    // Mines immediately (even when empty).
    const Block& mine_now();

    void on_block(BlockObserver observer) { observers_.push_back(std::move(observer)); }

    // Inclusion time of a transaction digest, if mined.
    [[nodiscard]] std::optional<SimTime> included_at(const Hash256& digest) const;

private:
    void tick();
    void handle(const netsim::Message& m);

    netsim::Simulator& sim_;
    LedgerServiceConfig config_;
    EndpointId endpoint_;
    ledger::Chain chain_;
    ledger::Mempool pool_;
    contracts::ContractState state_;
    bool running_ = false;
    std::vector<BlockObserver> observers_;
    std::unordered_map<Hash256, SimTime> included_;
};

} // namespace uniquid::node
