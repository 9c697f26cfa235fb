#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hadamix/attention.hpp"
#include "hadamix/kernels.hpp"
#include "hadamix/rng.hpp"
#include "hadamix/tensor.hpp"

namespace hadamix {

enum class AttentionVariant { dense, hadamard };
enum class NormKind { layernorm, rmsnorm };

const char* to_string(AttentionVariant v);
const char* to_string(NormKind k);
AttentionVariant variant_from_string(const std::string& s);  // throws ConfigError
NormKind norm_from_string(const std::string& s);             // throws ConfigError

// Decoder-only transformer shape. Pre-norm blocks, RoPE positions, SwiGLU
// MLP with hidden width ceil((8/3) d / 64) * 64, tied input/output embedding.
struct ModelConfig {
    int64_t d_model = 128;
    int n_layers = 4;
    int n_heads = 4;
    int64_t vocab_size = 256;
    int64_t max_seq_len = 256;
    AttentionVariant variant = AttentionVariant::hadamard;
    NormKind norm = NormKind::rmsnorm;

    int64_t head_dim() const { return d_model / n_heads; }
    int64_t mlp_hidden() const;
    void validate() const;  // throws ConfigError on any unusable combination
};

struct NormWeights {
    NormKind kind = NormKind::rmsnorm;
    ParamTensor gain;
    ParamTensor bias;  // layernorm only; empty for rmsnorm

    std::vector<ParamTensor*> params();
};

// SwiGLU: down( silu(x w_gate) (.) (x w_up) ). No biases.
struct MlpWeights {
    ParamTensor w_gate;  // d x h
    ParamTensor w_up;    // d x h
    ParamTensor w_down;  // h x d
};

struct Block {
    NormWeights norm1;
    AttentionWeights attn;
    NormWeights norm2;
    MlpWeights mlp;
};

struct TransformerModel {
    ModelConfig cfg;
    ParamTensor embed;  // vocab x d, tied with the output projection
    std::vector<Block> blocks;
    NormWeights final_norm;

    static TransformerModel init(const ModelConfig& cfg, uint64_t seed);

    // Deterministic registration order: embed, then per block norm1, attention,
    // norm2, mlp, then the final norm. Checkpoints and the optimizer both key
    // off this order.
    std::vector<ParamTensor*> params();
    std::vector<const ParamTensor*> params() const;
    int64_t param_count() const;
    void zero_grads();

    std::vector<KVCache> make_caches(int64_t capacity) const;
};

// Forward state for one block, recorded during training.
struct BlockActs {
    NormStash n1;
    AttentionActs attn;
    NormStash n2;
    Tensor normed2;   // MLP input
    Tensor gate_pre;  // x w_gate, pre-activation
    Tensor silu_out;
    Tensor up;
    Tensor gated;     // w_down input
};

struct ModelActs {
    std::vector<int32_t> tokens;
    std::vector<BlockActs> blocks;
    NormStash fin;
    Tensor final_out;  // logits-matmul input
};

// Returns T x vocab logits. With caches (one per layer) the new rows extend
// each cache and attend over everything cached; start_pos must match the
// cached length. `acts`, when given, records the cache-free training state.
Tensor model_forward(TransformerModel& m, std::span<const int32_t> tokens,
                     std::vector<KVCache>* caches = nullptr, int64_t start_pos = 0,
                     ModelActs* acts = nullptr);

// Mean next-token cross entropy in nats, accumulated in double. When dlogits
// is given it is filled with (softmax - onehot) / T.
double cross_entropy_loss(const Tensor& logits, std::span<const int32_t> targets,
                          Tensor* dlogits = nullptr);

// Accumulates parameter gradients for a recorded forward pass.
void model_backward(TransformerModel& m, const ModelActs& acts, const Tensor& dlogits);

// Autoregressive continuation; returns prompt followed by n_new sampled
// tokens. temperature == 0 is greedy argmax (ties -> lowest id); otherwise
// tokens are drawn from softmax(logits / temperature) with the given seed.
std::vector<int32_t> generate(TransformerModel& m, std::span<const int32_t> prompt,
                              int64_t n_new, float temperature, uint64_t seed);

}  // namespace hadamix
