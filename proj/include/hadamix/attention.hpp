#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "hadamix/rng.hpp"
#include "hadamix/tensor.hpp"
#include "hadamix/wht.hpp"

namespace hadamix {

// Append-only key/value storage for one autoregressive stream, one layer.
struct KVCache {
    Tensor keys;    // capacity x d
    Tensor values;  // capacity x d
    int64_t len = 0;
    int64_t capacity = 0;

    KVCache() = default;
    KVCache(int64_t cap, int64_t d)
        : keys({cap, d}), values({cap, d}), len(0), capacity(cap) {}

    void reset() { len = 0; }
};

// Learned dense output projection with bias: out = Y * W_o + b_o.
struct DenseMix {
    ParamTensor w_o;  // d x d
    ParamTensor b_o;  // d
};

// Fixed orthogonal mixing with a learned diagonal affine:
// out = alpha (.) (Y * H) + beta. The transform itself stores no weights.
struct HadamardMix {
    ParamTensor alpha;  // d
    ParamTensor beta;   // d
    HadamardSpec spec;  // normalized, order d
};

struct AttentionWeights {
    int64_t d = 0;
    int n_heads = 1;
    ParamTensor w_q, w_k, w_v;  // d x d, no biases
    std::variant<DenseMix, HadamardMix> mix;

    int64_t head_dim() const { return d / n_heads; }
    bool is_hadamard() const { return std::holds_alternative<HadamardMix>(mix); }

    // Registration order: w_q, w_k, w_v, then mixing parameters.
    std::vector<ParamTensor*> params();
    std::vector<const ParamTensor*> params() const;

    // W matrices N(0, 0.02^2); b_o / beta zero; alpha ones, so the Hadamard
    // layer starts as a pure orthogonal mix. `prefix` seeds parameter names
    // ("blocks.0.attn." -> "blocks.0.attn.w_q").
    static AttentionWeights make_dense(int64_t d, int n_heads, Rng& rng,
                                       const std::string& prefix = "");
    static AttentionWeights make_hadamard(int64_t d, int n_heads, Rng& rng,
                                          const std::string& prefix = "");
};

// Rotary embedding: within each head, feature pair (2i, 2i+1) of the row at
// position start_pos + t is rotated by angle pos * 10000^(-2i/head_dim).
// `inverse` rotates by the negative angle (the backward map).
void rope_apply_inplace(Tensor& x, int64_t start_pos, int n_heads, bool inverse = false);
Tensor rope_apply(const Tensor& x, int64_t start_pos, int n_heads);

// Every row rotated at the same position (batched decode: rows are parallel
// streams, not successive positions).
void rope_apply_at(Tensor& x, int64_t pos, int n_heads);

// out = alpha (.) (Y * H) + beta, alpha/beta broadcast over rows.
Tensor hadamard_mix_forward(const Tensor& y, const Tensor& alpha, const Tensor& beta,
                            const HadamardSpec& spec);

// dbeta = sum_rows G; dalpha = sum_rows G (.) (Y * H); dY = (G (.) alpha) * H^T.
void hadamard_mix_backward(const Tensor& y, const Tensor& alpha, const HadamardSpec& spec,
                           const Tensor& g, Tensor& dy, Tensor& dalpha, Tensor& dbeta);

// Forward state recorded for the training backward pass.
struct AttentionActs {
    Tensor x;                   // layer input
    Tensor q, k, v;             // post-RoPE projections
    Tensor y;                   // concatenated head outputs, pre-mixing
    std::vector<Tensor> probs;  // per-head T x T attention rows (causal)
};

// Causal multi-head attention. Scale 1/sqrt(head_dim); heads concatenated and
// mixed per weights.mix. With a cache, K/V for the new rows are appended and
// attention spans cached + new positions; start_pos must equal cache->len.
// Without a cache start_pos must be 0. `acts`, when given, records the state
// needed by attention_backward (cache-free path only).
Tensor attention_forward(const Tensor& x, AttentionWeights& w, KVCache* cache = nullptr,
                         int64_t start_pos = 0, AttentionActs* acts = nullptr);

// Accumulates parameter gradients into w and returns dX.
Tensor attention_backward(AttentionWeights& w, const AttentionActs& acts, const Tensor& g);

// One decode-style attention row: q_row attends over rows [0, span) of the
// key/value storage starting at keys/vals (row stride d). Shared by the
// single-stream and batched benchmark paths.
void attend_rows(const float* q_row, const float* keys, const float* vals, int64_t span,
                 int64_t d, int n_heads, float* out_row);

}  // namespace hadamix
