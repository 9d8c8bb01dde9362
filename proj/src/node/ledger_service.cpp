#include "uniquid/node/ledger_service.hpp"

#include "uniquid/error.hpp"

namespace uniquid::node {

LedgerService::LedgerService(netsim::Simulator& sim, LedgerServiceConfig config, std::string name)
    : sim_(sim),
      config_(std::move(config)),
      endpoint_(sim.add_endpoint(std::move(name))),
      chain_(config_.params) {
    sim_.set_handler(endpoint_, [this](const netsim::Message& m) { handle(m); });
}

void LedgerService::start() {
    if (running_) return;
    running_ = true;
    sim_.schedule_in(config_.params.mining_interval_ms(), "mine", [this] { tick(); });
}

void LedgerService::tick() {
    if (!running_) return;
    if (!pool_.empty() || config_.mine_empty_blocks) mine_now();
    sim_.schedule_in(config_.params.mining_interval_ms(), "mine", [this] { tick(); });
}

ledger::SubmitAck LedgerService::submit(const Transaction& tx) {
    return ledger::submit_tx(pool_, tx);
}

const Block& LedgerService::mine_now() {
    ledger::mine_block(pool_, chain_, sim_.now(), state_.admission_filter());
    const Block& block = chain_.blocks().back();
    for (const auto& tx : block.txs) included_.emplace(tx.digest(), sim_.now());
    for (const auto& observer : observers_) observer(block, sim_.now());
    return block;
}

std::optional<SimTime> LedgerService::included_at(const Hash256& digest) const {
    auto it = included_.find(digest);
    if (it == included_.end()) return std::nullopt;
    return it->second;
}

void LedgerService::handle(const netsim::Message& m) {
    if (m.kind == msg::kSubmit) {
        const auto& req = m.as<msg::Submit>();
        bool accepted = false;
        try {
            submit(req.tx);
            accepted = true;  // freshly queued or already known
        } catch (const Error&) {
        }
        sim_.send(endpoint_, m.from, std::string(msg::kSubmitAck),
                  msg::SubmitAck{req.request_id, req.tx.digest(), accepted});
    } else if (m.kind == msg::kSync) {
        const auto& req = m.as<msg::Sync>();
        msg::SyncReply reply;
        reply.request_id = req.request_id;
        for (std::uint64_t h = req.known_height; h < chain_.height(); ++h) {
            const Block& block = chain_.at(h);
            if (req.full_blocks) {
                reply.blocks.push_back(block);
                continue;
            }
            reply.headers.push_back(block.header);
            for (std::uint32_t i = 0; i < block.txs.size(); ++i) {
                const Transaction& tx = block.txs[i];
                const contracts::ContractEvent* found = state_.find(tx.digest());
                if (found == nullptr || !involves(found->contract, req.node_id)) continue;
                reply.relevant.push_back(ProvenTx{tx, {h, i}, *chain_.proof_for(tx.digest())});
            }
        }
        sim_.send(endpoint_, m.from, std::string(msg::kSyncReply), std::move(reply));
    }
}

} // namespace uniquid::node
