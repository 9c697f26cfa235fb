#include "hadamix/analysis.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "hadamix/wht.hpp"

namespace hadamix {

void Rational::reduce() {
    if (den == 0) throw std::invalid_argument("rational: zero denominator");
    if (den < 0) {
        num = -num;
        den = -den;
    }
    const int64_t g = std::gcd(num < 0 ? -num : num, den);
    if (g > 1) {
        num /= g;
        den /= g;
    }
}

ReductionFraction attention_reduction_fraction(int64_t d) {
    if (d < 1) throw std::invalid_argument("attention_reduction_fraction: d must be >= 1");
    ReductionFraction f;
    f.headline = {d * d - d, 4 * d * d};
    f.with_bias = {d * d - d, 4 * d * d + d};
    f.headline.reduce();
    f.with_bias.reduce();
    return f;
}

ParamBreakdown count_params(const ModelConfig& cfg, AttentionVariant variant) {
    if (cfg.d_model < 1 || cfg.n_layers < 1 || cfg.vocab_size < 1) {
        throw std::invalid_argument("count_params: dimensions must be positive");
    }
    const int64_t d = cfg.d_model;
    const int64_t h = cfg.mlp_hidden();
    const int64_t norm_params = cfg.norm == NormKind::layernorm ? 2 * d : d;

    ParamBreakdown b;
    b.d = d;
    b.n_layers = cfg.n_layers;
    b.vocab = cfg.vocab_size;
    b.mlp_hidden = h;
    b.variant = variant;
    b.embed_params = cfg.vocab_size * d;
    b.head_params = 0;  // tied
    b.attn_block_dense = 4 * d * d + d;
    b.attn_block_hadamard = 3 * d * d + 2 * d;
    b.attn_block_scale_only = 3 * d * d + d;
    b.mlp_per_block = 3 * d * h;
    b.norms_per_block = 2 * norm_params;
    b.final_norm_params = norm_params;

    const int64_t shared = b.embed_params + b.final_norm_params +
                           cfg.n_layers * (b.mlp_per_block + b.norms_per_block);
    b.total_dense = shared + cfg.n_layers * b.attn_block_dense;
    b.total_hadamard = shared + cfg.n_layers * b.attn_block_hadamard;
    b.delta = b.total_dense - b.total_hadamard;
    b.relative_delta = double(b.delta) / double(b.total_dense);
    return b;
}

double projection_flops(int64_t d, AttentionVariant variant) {
    if (d < 1) throw std::invalid_argument("projection_flops: d must be >= 1");
    if (variant == AttentionVariant::dense) return double(d) * double(d);
    if (!HadamardSpec::order_supported(d)) {
        throw std::invalid_argument("projection_flops: d " + std::to_string(d) +
                                    " has no Hadamard transform: supported widths are 2^m and "
                                    "12*2^m");
    }
    return double(d) * std::log2(double(d));
}

uint64_t projection_kernel_ops(int64_t d) {
    return fwht_op_count(HadamardSpec::for_order(d));
}

double theoretical_speedup(int64_t d) {
    if (d < 2) throw std::invalid_argument("theoretical_speedup: d must be >= 2");
    return double(d) / std::log2(double(d));
}

uint64_t forward_flops_per_token(const ModelConfig& cfg, int64_t T) {
    const uint64_t d = uint64_t(cfg.d_model);
    const uint64_t h = uint64_t(cfg.mlp_hidden());
    const uint64_t qkv = 3 * d * d;
    const uint64_t attn = d * uint64_t(T + 1);  // causal scores + value gather
    const uint64_t mix = cfg.variant == AttentionVariant::dense
                             ? d * d + d
                             : projection_kernel_ops(cfg.d_model) + 2 * d;
    const uint64_t mlp = 3 * d * h + 2 * h;  // matmuls + gate activation/product
    const uint64_t per_layer = qkv + attn + mix + mlp;
    return uint64_t(cfg.n_layers) * per_layer + d * uint64_t(cfg.vocab_size);
}

uint64_t training_flops(const ModelConfig& cfg, int64_t T, uint64_t tokens_processed) {
    return 3 * forward_flops_per_token(cfg, T) * tokens_processed;
}

FlopsBreakdown flops_breakdown(const ModelConfig& cfg, int64_t T, int64_t batch) {
    FlopsBreakdown f;
    f.d = cfg.d_model;
    f.proj_dense = projection_flops(cfg.d_model, AttentionVariant::dense);
    f.proj_hadamard = projection_flops(cfg.d_model, AttentionVariant::hadamard);
    f.proj_hadamard_kernel_ops = projection_kernel_ops(cfg.d_model);
    f.speedup = theoretical_speedup(cfg.d_model);
    f.attn_score_per_token = uint64_t(cfg.d_model) * uint64_t(T + 1);
    f.forward_per_token = forward_flops_per_token(cfg, T);
    f.forward_total = f.forward_per_token * uint64_t(T) * uint64_t(batch);
    return f;
}

std::vector<std::pair<std::string, ModelConfig>> paper_table2_configs() {
    auto make = [](int64_t d, int layers, int heads) {
        ModelConfig c;
        c.d_model = d;
        c.n_layers = layers;
        c.n_heads = heads;
        c.vocab_size = 50257;
        c.max_seq_len = 1024;
        c.norm = NormKind::layernorm;
        c.variant = AttentionVariant::hadamard;
        return c;
    };
    return {
        {"tiny", make(768, 12, 12)},
        {"small", make(1024, 24, 16)},
        {"base", make(1536, 24, 16)},
        {"large", make(2048, 24, 16)},
    };
}

}  // namespace hadamix
