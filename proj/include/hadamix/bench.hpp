#pragma once

#include <cstdint>
#include <utility>

#include "hadamix/model.hpp"
#include "hadamix/opcount.hpp"

namespace hadamix {

enum class BenchPhase { prefill, decode };

const char* to_string(BenchPhase p);

struct BenchConfig {
    BenchPhase phase = BenchPhase::prefill;
    ModelConfig model;
    int64_t batch = 1;
    int64_t n_positions = 64;  // prompt length (prefill) or generated tokens (decode)
    int warmup_iters = 5;
    int iters_per_run = 50;
    int runs = 3;
    uint64_t seed = 0;
    int threads = 1;
    uint64_t mem_limit_bytes = 4ULL << 30;

    void validate() const;  // throws ConfigError
};

struct Stat {
    double mean = 0.0;
    double std = 0.0;  // cross-run sample std (n-1)
};

struct MemoryBytes {
    uint64_t weights = 0;
    uint64_t kv_cache = 0;     // 0 for prefill (no cache allocated)
    uint64_t activations = 0;  // transient plan, closed form
    uint64_t peak_estimate = 0;
};

// Latency is wall time per token position across the whole batch (decode: per
// step; prefill: per prompt position), so throughput * latency = 1000 * batch
// by construction.
struct BenchReport {
    BenchPhase phase = BenchPhase::prefill;
    AttentionVariant variant = AttentionVariant::dense;
    int64_t d = 0;
    int64_t batch = 0;
    int64_t n_positions = 0;
    int runs = 0;
    int iters_per_run = 0;
    int threads = 1;
    Stat latency_ms_per_token;
    Stat throughput_tokens_per_s;
    MemoryBytes memory;
    OpCounts ops_per_iter;  // instrumented on an untimed iteration

    bool has_delta = false;  // filled on the hadamard half of a paired run
    double delta_latency_mean = 0.0;
    double delta_throughput_mean = 0.0;
    int64_t delta_weight_bytes = 0;  // hadamard - baseline
};

// Deterministic byte accounting; no allocator introspection.
MemoryBytes estimate_memory(const ModelConfig& cfg, BenchPhase phase, int64_t batch,
                            int64_t n_positions);

// Throws BudgetError naming the largest contributing component when the peak
// estimate exceeds the limit.
void check_budget(const MemoryBytes& mem, uint64_t limit_bytes);

BenchReport bench_prefill(const BenchConfig& cfg);
BenchReport bench_decode(const BenchConfig& cfg);
BenchReport run_bench(const BenchConfig& cfg);

// Verification hook: one batched-decode iteration, returning the final step's
// logits (batch x vocab) and optionally the drawn per-step token streams, so
// the timed path can be pinned against the per-stream cached forward.
Tensor bench_decode_logits(const BenchConfig& cfg,
                           std::vector<std::vector<int32_t>>* tokens_out = nullptr);

// Same seed, inputs and iteration structure for both variants; the second
// report carries the hadamard - baseline deltas.
std::pair<BenchReport, BenchReport> bench_pair(const BenchConfig& cfg);

struct MicrobenchResult {
    int64_t d = 0;
    int64_t batch = 0;
    int iters = 0;
    double dense_ms = 0.0;
    double hadamard_ms = 0.0;
    double wall_ratio = 0.0;       // dense / hadamard
    uint64_t dense_ops = 0;        // multiply-adds per call
    uint64_t hadamard_ops = 0;     // transform add/subs per call (affine excluded)
    double op_ratio = 0.0;         // d^2 / (d log2 d) when d is a power of two
};

// Times the mixing step alone: Y * W against the normalized transform + affine
// on identical inputs.
MicrobenchResult microbench_projection(int64_t d, int64_t batch, int iters,
                                       uint64_t seed = 0);

}  // namespace hadamix
