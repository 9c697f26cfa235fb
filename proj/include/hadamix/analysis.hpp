#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hadamix/model.hpp"

namespace hadamix {

// Exact fraction; reduce() keeps den > 0 and gcd(num, den) = 1.
struct Rational {
    int64_t num = 0;
    int64_t den = 1;

    void reduce();
    double value() const { return double(num) / double(den); }
    bool operator==(const Rational& o) const { return num == o.num && den == o.den; }
};

// Fraction of attention parameters removed by swapping the dense projection
// for the Hadamard affine. `headline` is the (d^2 - d) / (4 d^2) form the
// asymptotic 25% claim comes from; `with_bias` charges the dense bias too:
// (d^2 - d) / (4 d^2 + d).
struct ReductionFraction {
    Rational headline;
    Rational with_bias;
};

ReductionFraction attention_reduction_fraction(int64_t d);

// Parameter census for one config, both mixing variants side by side. Dense
// attention block: 4 d^2 + d (Q/K/V unbiased, W_O biased). Hadamard block:
// 3 d^2 + 2 d (alpha and beta). `attn_block_scale_only` is the 3 d^2 + d
// count a scale-without-shift convention would give; the per-block delta the
// totals reproduce is d^2 - d, which matches the biased-dense convention.
struct ParamBreakdown {
    int64_t d = 0;
    int n_layers = 0;
    int64_t vocab = 0;
    int64_t mlp_hidden = 0;

    int64_t embed_params = 0;             // tied with the output head
    int64_t head_params = 0;              // 0: tied
    int64_t attn_block_dense = 0;         // 4d^2 + d
    int64_t attn_block_hadamard = 0;      // 3d^2 + 2d
    int64_t attn_block_scale_only = 0;    // 3d^2 + d, reported for reference
    int64_t mlp_per_block = 0;            // 3 d h
    int64_t norms_per_block = 0;          // two pre-norms
    int64_t final_norm_params = 0;

    int64_t total_dense = 0;
    int64_t total_hadamard = 0;
    int64_t delta = 0;                    // total_dense - total_hadamard
    double relative_delta = 0.0;          // delta / total_dense

    AttentionVariant variant = AttentionVariant::hadamard;
    int64_t total() const {
        return variant == AttentionVariant::dense ? total_dense : total_hadamard;
    }
};

// Pure arithmetic on the shape fields; does not require a constructible model
// (degenerate widths like d=1 are fine here).
ParamBreakdown count_params(const ModelConfig& cfg, AttentionVariant variant);

// Per-token cost of the mixing step alone. Dense counts d^2 multiply-adds;
// hadamard counts d log2(d) add/subtracts — the complexity-figure convention,
// continuous in d. The exact add/sub count the composite-order kernel executes
// (d (log2(d/12) + 12)) is reported separately as kernel ops.
double projection_flops(int64_t d, AttentionVariant variant);
uint64_t projection_kernel_ops(int64_t d);  // exact count for the implemented FWHT
double theoretical_speedup(int64_t d);      // d / log2(d), d >= 2

struct FlopsBreakdown {
    int64_t d = 0;
    double proj_dense = 0.0;
    double proj_hadamard = 0.0;
    uint64_t proj_hadamard_kernel_ops = 0;
    double speedup = 0.0;
    uint64_t attn_score_per_token = 0;   // causal scores + value gather: d (T+1)
    uint64_t forward_per_token = 0;      // full model, census convention
    uint64_t forward_total = 0;          // x T x batch
};

FlopsBreakdown flops_breakdown(const ModelConfig& cfg, int64_t T, int64_t batch);

// Exact arithmetic-op census of one forward pass, per token: matmul MACs,
// FWHT add/subs and mixing/MLP-gating elementwise ops; norms, softmax, RoPE
// and residual adds excluded. Matches the instrumented counter by
// construction.
uint64_t forward_flops_per_token(const ModelConfig& cfg, int64_t T);

// Training cost: 3x forward (backward counted as twice the forward).
uint64_t training_flops(const ModelConfig& cfg, int64_t T, uint64_t tokens_processed);

// The four scaling-table configs: vocab 50257, layernorm, tied embeddings,
// SwiGLU hidden ceil((8/3)d/64)*64.
std::vector<std::pair<std::string, ModelConfig>> paper_table2_configs();

}  // namespace hadamix
