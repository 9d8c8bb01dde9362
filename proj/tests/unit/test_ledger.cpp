#include <doctest.h>

#include "support/oracles.hpp"
#include "uniquid/error.hpp"
#include "uniquid/ledger/chain.hpp"
#include "uniquid/ledger/merkle.hpp"

#include <algorithm>
#include <sstream>
#include <string>

using namespace uniquid;
using namespace uniquid::ledger;

namespace {

Bytes text(const std::string& s) {
    return Bytes(s.begin(), s.end());
}

std::vector<Bytes> numbered_leaves(int n) {
    std::vector<Bytes> out;
    for (int i = 0; i < n; ++i) out.push_back(text("leaf-" + std::to_string(i)));
    return out;
}

Transaction random_tx(Rng& rng, const KeyPair& signer) {
    Bytes body(1 + rng.below(Transaction::kMaxBody));
    rng.fill(body);
    return Transaction::create(TxKind::Grant, signer, body);
}

void expect_error(ErrorCode code, const auto& fn) {
    try {
        fn();
        FAIL("expected error " << to_string(code));
    } catch (const Error& e) {
        CHECK(e.code() == code);
    }
}

} // namespace

TEST_CASE("merkle_root: single leaf is the leaf hash") {
    auto root = merkle_root({text("leaf-0")});
    CHECK(to_hex(root) == "d2dbf006f96dd05044a8f63d8f118f23925ba4cc5750f8b6c8e287fd506c8188");
}

TEST_CASE("merkle_root: matches frozen layer-by-layer values") {
    // Frozen from an independent hashlib computation.
    CHECK(to_hex(merkle_root(numbered_leaves(4))) ==
          "476c4a255bbaa3fa397182c77cb1bc85be71aa10349349f67e5c2bdd0453bfa0");
    CHECK(to_hex(merkle_root(numbered_leaves(3))) ==
          "39313694557e76d28b720ad7f4481cb144c24c8341f8a68fc4a8363fcd1a04bb");
    CHECK(to_hex(merkle_root(numbered_leaves(5))) ==
          "3ad4abec5d43ae09f5275cf7ce77d8615e1e87164b255aa7661e237b1982a5bf");
}

TEST_CASE("merkle_root: empty input") {
    expect_error(ErrorCode::EmptyTree, [] { (void)merkle_root({}); });
}

TEST_CASE("build_proof: shapes and errors") {
    auto one = build_proof({text("solo")}, 0);
    CHECK(one.siblings.empty());
    CHECK(verify_proof(text("solo"), one));

    auto leaves = numbered_leaves(4);
    auto p = build_proof(leaves, 2);
    REQUIRE(p.siblings.size() == 2);
    CHECK(to_hex(p.siblings[0]) == "9fde56c376760bd399b82eb8569229a2dff19219411ac71154dfeab2cf502454");
    CHECK(to_hex(p.siblings[1]) == "8b0f563106070048a1057926820c7118dec20b8a73715544f4528487c16dc0d7");
    CHECK(verify_proof(leaves[2], p));

    expect_error(ErrorCode::IndexError, [&] { (void)build_proof(leaves, 7); });

    for (int n = 1; n <= 33; ++n) {
        auto ls = numbered_leaves(n);
        CHECK(build_proof(ls, static_cast<std::size_t>(n - 1)).siblings.size() ==
              oracle::ceil_log2(static_cast<std::size_t>(n)));
    }
}

TEST_CASE("verify_proof: rejects mutated leaf and permuted siblings") {
    auto leaves = numbered_leaves(4);
    auto p = build_proof(leaves, 2);
    Bytes flipped = leaves[2];
    flipped[0] ^= 0x01;
    CHECK_FALSE(verify_proof(flipped, p));

    auto permuted = p;
    std::swap(permuted.siblings[0], permuted.siblings[1]);
    CHECK_FALSE(verify_proof(leaves[2], permuted));

    auto wrong_index = p;
    wrong_index.leaf_index = 3;
    CHECK_FALSE(verify_proof(leaves[2], wrong_index));
}

TEST_CASE("merkle: randomized trees agree with the oracle") {
    Rng rng(7);
    for (int trial = 0; trial < 200; ++trial) {
        std::size_t n = 1 + rng.below(64);
        std::vector<Bytes> leaves(n);
        for (auto& l : leaves) {
            l.resize(1 + rng.below(40));
            rng.fill(l);
        }
        Hash256 root = merkle_root(leaves);
        auto expected = oracle::merkle_root(leaves);
        CHECK(std::equal(expected.begin(), expected.end(), root.data.begin()));
        std::size_t idx = rng.below(n);
        auto proof = build_proof(leaves, idx);
        CHECK(proof.root == root);
        CHECK(verify_proof(leaves[idx], proof));
    }
}

TEST_CASE("transaction: canonical layout") {
    Rng rng(1);
    auto kp = KeyPair::generate(rng);
    Bytes body = text("payload");
    auto tx = Transaction::create(TxKind::Imprint, kp, body);
    CHECK(tx.bytes().size() == 400);
    CHECK(tx.signature_valid());
    CHECK(tx.signer() == kp.public_key());
    CHECK(Bytes(tx.body().begin(), tx.body().end()) == body);

    auto back = Transaction::from_bytes(tx.bytes());
    CHECK(back == tx);
    CHECK(back.digest() == tx.digest());

    // Deterministic signatures: identical inputs give identical records.
    CHECK(Transaction::create(TxKind::Imprint, kp, body) == tx);

    SUBCASE("oversized body is rejected") {
        Bytes big(Transaction::kMaxBody + 1, 0xAB);
        expect_error(ErrorCode::RejectedTx, [&] { (void)Transaction::create(TxKind::Grant, kp, big); });
    }
    SUBCASE("malformed encodings") {
        auto raw = tx.bytes();
        auto pad = raw;
        pad[300] = 1;
        expect_error(ErrorCode::MalformedRecord, [&] { (void)Transaction::from_bytes(pad); });
        auto kind = raw;
        kind[1] = 9;
        expect_error(ErrorCode::MalformedRecord, [&] { (void)Transaction::from_bytes(kind); });
        expect_error(ErrorCode::MalformedRecord,
                     [&] { (void)Transaction::from_bytes(ByteSpan(raw.data(), 399)); });
    }
    SUBCASE("signature covers the record") {
        auto raw = tx.bytes();
        raw[40] ^= 0x10;
        CHECK_FALSE(Transaction::from_bytes(raw).signature_valid());
    }
}

TEST_CASE("submit_tx: FIFO queueing, dedup, signature gate") {
    Rng rng(2);
    auto kp = KeyPair::generate(rng);
    Mempool pool;
    auto a = random_tx(rng, kp);
    auto b = random_tx(rng, kp);
    CHECK(submit_tx(pool, a) == SubmitAck::Queued);
    CHECK(submit_tx(pool, b) == SubmitAck::Queued);
    CHECK(submit_tx(pool, a) == SubmitAck::DuplicateTx);
    CHECK(pool.size() == 2);
    CHECK(pool.pending().front() == a);

    auto raw = b.bytes();
    raw[350] ^= 0xff;
    auto forged = Transaction::from_bytes(raw);
    expect_error(ErrorCode::RejectedTx, [&] { (void)submit_tx(pool, forged); });
}

TEST_CASE("theoretical_upper_bound") {
    CHECK(theoretical_upper_bound({1'000'000, 400, 2.5, 8}) == 1000.0);
    CHECK(theoretical_upper_bound({1'000'000, 400, 1.0, 8}) == 2500.0);
    CHECK(theoretical_upper_bound({400, 400, 2.0, 8}) == 0.5);
    expect_error(ErrorCode::InvalidParams, [] { (void)theoretical_upper_bound({1000, 400, 0.0, 8}); });
    expect_error(ErrorCode::InvalidParams, [] { (void)theoretical_upper_bound({0, 400, 1.0, 8}); });
    expect_error(ErrorCode::InvalidParams, [] { (void)theoretical_upper_bound({1000, 0, 1.0, 8}); });
    expect_error(ErrorCode::InvalidParams, [] { LedgerParams{100, 400, 1.0, 8}.validate(); });
}

TEST_CASE("mine_block: capacity, FIFO order and empty blocks") {
    Rng rng(3);
    auto kp = KeyPair::generate(rng);
    LedgerParams params;
    params.difficulty_bits = 8;
    Chain chain(params);
    Mempool pool;

    SUBCASE("3000 pooled, 2500 mined") {
        std::vector<Transaction> txs;
        for (int i = 0; i < 3000; ++i) {
            txs.push_back(random_tx(rng, kp));
            submit_tx(pool, txs.back());
        }
        CHECK(params.block_capacity() == 2500);
        Block b = mine_block(pool, chain, 150'000);
        CHECK(b.txs.size() == 2500);
        CHECK(pool.size() == 500);
        CHECK(b.txs.front() == txs.front());
        CHECK(b.txs.back() == txs[2499]);
        CHECK(pool.pending().front() == txs[2500]);
        CHECK(b.txs.size() * params.tx_size_bytes <= params.block_size_bytes);
    }
    SUBCASE("empty pool") {
        Block b = mine_block(pool, chain, 0);
        CHECK(b.txs.empty());
        CHECK(chain.height() == 1);
        mine_block(pool, chain, 150'000);
        CHECK(chain.height() == 2);
    }
    SUBCASE("single tx is provable") {
        auto tx = random_tx(rng, kp);
        submit_tx(pool, tx);
        Block b = mine_block(pool, chain, 0);
        REQUIRE(b.txs.size() == 1);
        auto proof = chain.proof_for(tx.digest());
        REQUIRE(proof);
        CHECK(proof->root == b.header.merkle_root);
        CHECK(verify_proof(tx.bytes(), *proof));
    }
    SUBCASE("admission filter drops rejected transactions") {
        auto keep = random_tx(rng, kp);
        auto drop = random_tx(rng, kp);
        submit_tx(pool, drop);
        submit_tx(pool, keep);
        Block b = mine_block(pool, chain, 0, [&](const Transaction& t, TxLocation at) {
            CHECK(at.index == 0);
            return t == keep;
        });
        REQUIRE(b.txs.size() == 1);
        CHECK(b.txs[0] == keep);
        CHECK(pool.empty());
    }
}

TEST_CASE("validate_block") {
    Rng rng(4);
    auto kp = KeyPair::generate(rng);
    LedgerParams params;
    params.difficulty_bits = 12;
    Chain chain(params);
    Mempool pool;
    mine_block(pool, chain, 0);
    for (int i = 0; i < 5; ++i) submit_tx(pool, random_tx(rng, kp));

    // Assemble a candidate on a scratch copy so `chain` stays at the parent.
    Chain scratch = chain;
    Block honest = mine_block(pool, scratch, 1000);
    CHECK(validate_block(honest, chain, params));

    SUBCASE("mutated transaction byte") {
        auto raw = honest.serialize();
        raw[BlockHeader::kSize + 400 * 2 + 10] ^= 0x01;
        CHECK_FALSE(validate_block(Block::deserialize(raw), chain, params));
    }
    SUBCASE("nonce failing difficulty") {
        Block bad = honest;
        do {
            ++bad.header.nonce;
        } while (meets_difficulty(bad.digest(), params.difficulty_bits));
        CHECK_FALSE(validate_block(bad, chain, params));
    }
    SUBCASE("wrong parent") {
        CHECK_FALSE(validate_block(honest, scratch, params));
    }
    SUBCASE("oversized block") {
        LedgerParams small = params;
        small.block_size_bytes = 800;
        CHECK_FALSE(validate_block(honest, chain, small));
    }
}

TEST_CASE("chain export/import round trip") {
    Rng rng(5);
    auto kp = KeyPair::generate(rng);
    LedgerParams params;
    params.difficulty_bits = 8;
    Chain chain(params);
    Mempool pool;
    for (int b = 0; b < 4; ++b) {
        for (int i = 0; i < b; ++i) submit_tx(pool, random_tx(rng, kp));
        mine_block(pool, chain, b * 150'000);
    }
    std::stringstream file;
    chain.export_to(file);
    std::string text_form = file.str();
    CHECK(text_form.rfind("# uniquid-chain v1 hash=sha256 sig=ed25519", 0) == 0);

    std::stringstream in(text_form);
    Chain back = Chain::import_from(in, params);
    CHECK(back.blocks() == chain.blocks());

    std::stringstream again;
    back.export_to(again);
    CHECK(again.str() == text_form);

    // Flip one hex digit inside the third block line.
    std::string tampered = text_form;
    std::size_t line3 = 0;
    for (int i = 0; i < 3; ++i) line3 = tampered.find('\n', line3) + 1;
    tampered[line3 + 200] = tampered[line3 + 200] == '0' ? '1' : '0';
    std::stringstream bad(tampered);
    expect_error(ErrorCode::MalformedRecord, [&] { (void)Chain::import_from(bad, params); });
}
