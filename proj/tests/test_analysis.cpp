#include <cmath>

#include "doctest.h"
#include "hadamix/analysis.hpp"
#include "hadamix/model.hpp"
#include "hadamix/opcount.hpp"
#include "hadamix/rng.hpp"
#include "hadamix/wht.hpp"
#include "oracles.hpp"

using namespace hadamix;

TEST_CASE("attention reduction fraction: exact rationals") {
    const ReductionFraction f512 = attention_reduction_fraction(512);
    CHECK(f512.headline.num == 511);
    CHECK(f512.headline.den == 2048);
    CHECK(f512.headline.value() == doctest::Approx(0.25 - 1.0 / 2048.0).epsilon(1e-15));
    // (d^2 - d) / (4d^2 + d) reduces to (d - 1) / (4d + 1).
    CHECK(f512.with_bias.num == 511);
    CHECK(f512.with_bias.den == 2049);

    const ReductionFraction f2 = attention_reduction_fraction(2);
    CHECK(f2.headline.num == 1);
    CHECK(f2.headline.den == 8);
}

TEST_CASE("reduction fraction approaches 1/4 monotonically from below") {
    double prev = 0.0;
    for (int64_t d = 2; d <= 4096; d *= 2) {
        const double v = attention_reduction_fraction(d).headline.value();
        CHECK(v > prev);
        CHECK(v < 0.25);
        prev = v;
    }
    CHECK(prev > 0.2497);
}

TEST_CASE("per-config parameter census: four published scaling points") {
    struct Expect {
        const char* name;
        int64_t d;
        int n_layers;
        int64_t delta;
        double rel_pct;
        int64_t total_dense;
    };
    const Expect table[] = {
        {"tiny", 768, 12, 7068672, 5.7, 123579648},
        {"small", 1024, 24, 25141248, 7.1, 355150848},
        {"base", 1536, 24, 56586240, 7.5, 756859392},
        {"large", 2048, 24, 100614144, 7.7, 1317427200},
    };
    auto configs = paper_table2_configs();
    REQUIRE(configs.size() == 4);
    for (size_t i = 0; i < 4; ++i) {
        CAPTURE(table[i].name);
        CHECK(configs[i].first == table[i].name);
        const ModelConfig& cfg = configs[i].second;
        CHECK(cfg.d_model == table[i].d);
        CHECK(cfg.n_layers == table[i].n_layers);
        CHECK(cfg.vocab_size == 50257);

        const ParamBreakdown p = count_params(cfg, AttentionVariant::hadamard);
        CHECK(p.delta == table[i].delta);
        CHECK(p.total_dense == table[i].total_dense);
        CHECK(std::abs(100.0 * p.relative_delta - table[i].rel_pct) < 0.15);
        CHECK(p.attn_block_dense - p.attn_block_hadamard ==
              table[i].d * table[i].d - table[i].d);
    }
}

TEST_CASE("census matches an instantiated model exactly") {
    ModelConfig cfg;
    cfg.d_model = 48;
    cfg.n_layers = 3;
    cfg.n_heads = 4;
    cfg.vocab_size = 256;
    cfg.max_seq_len = 32;
    cfg.norm = NormKind::layernorm;
    for (auto v : {AttentionVariant::dense, AttentionVariant::hadamard}) {
        CAPTURE(to_string(v));
        cfg.variant = v;
        TransformerModel m = TransformerModel::init(cfg, 2);
        const ParamBreakdown p = count_params(cfg, v);
        CHECK(m.param_count() == p.total());
    }
}

TEST_CASE("block-level formulas") {
    const ParamBreakdown p = count_params(paper_table2_configs()[0].second,
                                          AttentionVariant::hadamard);
    const int64_t d = 768;
    CHECK(p.attn_block_dense == 4 * d * d + d);
    CHECK(p.attn_block_hadamard == 3 * d * d + 2 * d);
    CHECK(p.attn_block_scale_only == 3 * d * d + d);
    CHECK(p.mlp_per_block == 3 * d * 2048);
    CHECK(p.embed_params == 50257 * d);
    CHECK(p.head_params == 0);  // tied
}

TEST_CASE("projection cost: published figure values") {
    CHECK(projection_flops(64, AttentionVariant::dense) == 4096.0);
    CHECK(projection_flops(256, AttentionVariant::dense) == 65536.0);
    CHECK(projection_flops(768, AttentionVariant::dense) == 589824.0);
    CHECK(projection_flops(1024, AttentionVariant::dense) == 1048576.0);

    CHECK(projection_flops(64, AttentionVariant::hadamard) == 384.0);
    CHECK(projection_flops(256, AttentionVariant::hadamard) == 2048.0);
    CHECK(projection_flops(1024, AttentionVariant::hadamard) == 10240.0);
    // 768 is not a power of two; the d log2 d form is continuous there.
    const double f768 = projection_flops(768, AttentionVariant::hadamard);
    CHECK(std::abs(f768 - 7373.0) / 7373.0 < 0.005);
    CHECK(f768 == doctest::Approx(768.0 * std::log2(768.0)).epsilon(1e-12));

    // The implemented composite kernel runs a different exact count.
    CHECK(projection_kernel_ops(768) == 768u * 18u);
    CHECK(projection_kernel_ops(1024) == 10240u);

    CHECK(theoretical_speedup(768) == doctest::Approx(80.0).epsilon(0.01));
    CHECK(theoretical_speedup(1024) == doctest::Approx(102.4).epsilon(1e-12));
    CHECK_THROWS_AS(projection_flops(40, AttentionVariant::hadamard),
                    std::invalid_argument);
}

TEST_CASE("forward flop census equals the instrumented counter, both variants") {
    ModelConfig cfg;
    cfg.d_model = 24;
    cfg.n_layers = 2;
    cfg.n_heads = 2;
    cfg.vocab_size = 64;
    cfg.max_seq_len = 8;
    for (auto v : {AttentionVariant::dense, AttentionVariant::hadamard}) {
        CAPTURE(to_string(v));
        cfg.variant = v;
        TransformerModel m = TransformerModel::init(cfg, 3);
        std::vector<int32_t> tokens = {1, 5, 9, 13, 17, 21, 25, 29};
        OpCounts counts;
        {
            OpCountScope scope(counts);
            model_forward(m, tokens);
        }
        const uint64_t T = 8;
        CHECK(counts.total() == forward_flops_per_token(cfg, T) * T);
    }
}

TEST_CASE("training cost is three forward passes per token") {
    ModelConfig cfg;
    cfg.d_model = 16;
    cfg.n_layers = 1;
    cfg.n_heads = 2;
    cfg.vocab_size = 32;
    cfg.max_seq_len = 8;
    CHECK(training_flops(cfg, 8, 24) == 3u * forward_flops_per_token(cfg, 8) * 24u);
}

TEST_CASE("flops breakdown wiring") {
    ModelConfig cfg;
    cfg.d_model = 1024;
    cfg.n_layers = 24;
    cfg.n_heads = 16;
    cfg.vocab_size = 50257;
    cfg.max_seq_len = 1024;
    const FlopsBreakdown f = flops_breakdown(cfg, 1024, 2);
    CHECK(f.d == 1024);
    CHECK(f.proj_dense == 1048576.0);
    CHECK(f.proj_hadamard == 10240.0);
    CHECK(f.proj_hadamard_kernel_ops == 10240u);
    CHECK(f.speedup == doctest::Approx(102.4).epsilon(1e-12));
    CHECK(f.attn_score_per_token == uint64_t(1024) * 1025);
    CHECK(f.forward_total == f.forward_per_token * 1024u * 2u);
}

TEST_CASE("degenerate widths stay countable") {
    ModelConfig cfg;
    cfg.d_model = 1;
    cfg.n_layers = 1;
    cfg.vocab_size = 2;
    const ParamBreakdown p = count_params(cfg, AttentionVariant::hadamard);
    CHECK(p.delta == 0);  // d^2 - d vanishes at d = 1
}
