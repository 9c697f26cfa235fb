#include <cmath>
#include <string>

#include "doctest.h"
#include "hadamix/bench.hpp"
#include "hadamix/errors.hpp"
#include "hadamix/model.hpp"
#include "oracles.hpp"

using namespace hadamix;

namespace {

BenchConfig tiny_bench(BenchPhase phase, AttentionVariant v) {
    BenchConfig cfg;
    cfg.phase = phase;
    cfg.model.d_model = 64;
    cfg.model.n_layers = 1;
    cfg.model.n_heads = 1;
    cfg.model.vocab_size = 256;
    cfg.model.max_seq_len = 16;
    cfg.model.variant = v;
    cfg.model.norm = NormKind::rmsnorm;
    cfg.batch = 2;
    cfg.n_positions = 8;
    cfg.warmup_iters = 1;
    cfg.iters_per_run = 2;
    cfg.runs = 2;
    cfg.seed = 4;
    return cfg;
}

void check_identity(const BenchReport& r) {
    const double product =
        r.throughput_tokens_per_s.mean * r.latency_ms_per_token.mean;
    const double target = 1000.0 * double(r.batch);
    CHECK(std::abs(product - target) <= 0.01 * target);
}

}  // namespace

TEST_CASE("memory estimate: closed-form byte accounting") {
    ModelConfig mc = tiny_bench(BenchPhase::decode, AttentionVariant::dense).model;
    const MemoryBytes pre = estimate_memory(mc, BenchPhase::prefill, 2, 8);
    CHECK(pre.kv_cache == 0);
    TransformerModel m = TransformerModel::init(mc, 0);
    CHECK(pre.weights == uint64_t(m.param_count()) * 4u);
    CHECK(pre.peak_estimate == pre.weights + pre.kv_cache + pre.activations);
    CHECK(pre.activations > 0);

    const MemoryBytes dec = estimate_memory(mc, BenchPhase::decode, 3, 8);
    // Keys and values, one slot per cached position (prompt token + 8 steps).
    CHECK(dec.kv_cache == 2u * uint64_t(mc.n_layers) * 9u * uint64_t(mc.d_model) * 3u * 4u);
}

TEST_CASE("budget check names the largest component") {
    const MemoryBytes mem{1 << 20, 1 << 10, 1 << 10, (1 << 20) + (1 << 11)};
    CHECK_NOTHROW(check_budget(mem, 4u << 20));
    try {
        check_budget(mem, 1 << 16);
        CHECK(false);
    } catch (const BudgetError& e) {
        CHECK(std::string(e.what()).find("weights") != std::string::npos);
    }
}

TEST_CASE("prefill report: timing identity and op census") {
    for (auto v : {AttentionVariant::dense, AttentionVariant::hadamard}) {
        CAPTURE(to_string(v));
        const BenchReport r = run_bench(tiny_bench(BenchPhase::prefill, v));
        check_identity(r);
        CHECK(r.latency_ms_per_token.mean > 0.0);
        CHECK(r.latency_ms_per_token.std >= 0.0);
        CHECK(r.ops_per_iter.macs > 0);
        if (v == AttentionVariant::hadamard) CHECK(r.ops_per_iter.addsubs > 0);
        CHECK(r.memory.kv_cache == 0);
    }
}

TEST_CASE("decode report: timing identity, cache accounted") {
    const BenchReport r =
        run_bench(tiny_bench(BenchPhase::decode, AttentionVariant::hadamard));
    check_identity(r);
    CHECK(r.memory.kv_cache > 0);
    CHECK(r.ops_per_iter.macs > 0);
    CHECK(r.ops_per_iter.addsubs > 0);
}

TEST_CASE("paired run: deltas on the hadamard half") {
    BenchConfig cfg = tiny_bench(BenchPhase::prefill, AttentionVariant::dense);
    auto [base, had] = bench_pair(cfg);
    CHECK_FALSE(base.has_delta);
    CHECK(had.has_delta);
    CHECK(had.variant == AttentionVariant::hadamard);
    const int64_t d = cfg.model.d_model;
    CHECK(had.delta_weight_bytes == -4 * cfg.model.n_layers * (d * d - d));
    // Same shapes, fewer bytes for the hadamard mixer.
    CHECK(int64_t(had.memory.weights) - int64_t(base.memory.weights) ==
          had.delta_weight_bytes);
}

TEST_CASE("batched decode path reproduces the cached per-stream forward") {
    for (auto v : {AttentionVariant::dense, AttentionVariant::hadamard}) {
        CAPTURE(to_string(v));
        BenchConfig cfg = tiny_bench(BenchPhase::decode, v);
        cfg.model.d_model = 24;
        cfg.model.n_layers = 2;
        cfg.model.n_heads = 2;
        cfg.batch = 3;
        cfg.n_positions = 5;
        std::vector<std::vector<int32_t>> toks;
        const Tensor logits = bench_decode_logits(cfg, &toks);
        REQUIRE(logits.rows() == 3);
        REQUIRE(int64_t(toks.size()) == 6);

        TransformerModel model = TransformerModel::init(cfg.model, cfg.seed);
        for (int64_t b = 0; b < 3; ++b) {
            std::vector<int32_t> seq(6);
            for (int64_t s = 0; s < 6; ++s) seq[size_t(s)] = toks[size_t(s)][size_t(b)];
            const Tensor full = model_forward(model, seq);
            for (int64_t j = 0; j < cfg.model.vocab_size; ++j)
                CHECK(double(logits.at(b, j)) ==
                      doctest::Approx(double(full.at(5, j))).epsilon(1e-4));
        }
    }
}

TEST_CASE("projection microbench: exact op bookkeeping") {
    const MicrobenchResult r = microbench_projection(64, 4, 2);
    CHECK(r.dense_ops == 4u * 64u * 64u);
    CHECK(r.hadamard_ops == 4u * 64u * 6u);
    CHECK(r.op_ratio == doctest::Approx(64.0 / 6.0).epsilon(1e-12));
    CHECK(r.dense_ms > 0.0);
    CHECK(r.hadamard_ms > 0.0);
    CHECK(r.wall_ratio == doctest::Approx(r.dense_ms / r.hadamard_ms).epsilon(1e-12));
}

TEST_CASE("bench config validation") {
    BenchConfig cfg = tiny_bench(BenchPhase::prefill, AttentionVariant::dense);
    cfg.runs = 1;  // sample std needs at least two runs
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = tiny_bench(BenchPhase::prefill, AttentionVariant::dense);
    cfg.n_positions = 17;  // beyond max_seq_len
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = tiny_bench(BenchPhase::decode, AttentionVariant::dense);
    cfg.n_positions = 16;  // decode needs one extra slot for the prompt token
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = tiny_bench(BenchPhase::decode, AttentionVariant::dense);
    cfg.mem_limit_bytes = 1;
    CHECK_THROWS_AS(run_bench(cfg), BudgetError);
}
