#include "hadamix/bench.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "hadamix/analysis.hpp"
#include "hadamix/attention.hpp"
#include "hadamix/errors.hpp"
#include "hadamix/kernels.hpp"
#include "hadamix/rng.hpp"
#include "hadamix/wht.hpp"

namespace hadamix {

const char* to_string(BenchPhase p) { return p == BenchPhase::prefill ? "prefill" : "decode"; }

void BenchConfig::validate() const {
    model.validate();
    if (batch < 1) throw ConfigError("bench: batch must be >= 1");
    if (n_positions < 1) throw ConfigError("bench: length must be >= 1");
    if (runs < 2) throw ConfigError("bench: runs must be >= 2 (std undefined otherwise)");
    if (iters_per_run < 1) throw ConfigError("bench: iters per run must be >= 1");
    if (warmup_iters < 0) throw ConfigError("bench: warmup must be >= 0");
    if (threads < 1) throw ConfigError("bench: threads must be >= 1");
    const int64_t needed = phase == BenchPhase::prefill ? n_positions : n_positions + 1;
    if (needed > model.max_seq_len) {
        throw ConfigError("bench: sequence of " + std::to_string(needed) +
                          " positions exceeds max_seq_len " + std::to_string(model.max_seq_len));
    }
}

MemoryBytes estimate_memory(const ModelConfig& cfg, BenchPhase phase, int64_t batch,
                            int64_t n_positions) {
    const ParamBreakdown pb = count_params(cfg, cfg.variant);
    MemoryBytes mem;
    mem.weights = 4ULL * uint64_t(pb.total());
    if (phase == BenchPhase::decode) {
        const uint64_t cap = uint64_t(1 + n_positions);  // 1-token prompt + generated
        mem.kv_cache = 2ULL * uint64_t(cfg.n_layers) * cap * uint64_t(cfg.d_model) *
                       uint64_t(batch) * 4ULL;
    }
    // Live rows in one forward: the sequence (prefill, batch items sequential)
    // or the batch (decode, one position at a time).
    const uint64_t rows = uint64_t(phase == BenchPhase::prefill ? n_positions : batch);
    mem.activations =
        4ULL * rows *
        uint64_t(8 * cfg.d_model + 2 * cfg.mlp_hidden() + cfg.vocab_size);
    mem.peak_estimate = mem.weights + mem.kv_cache + mem.activations;
    return mem;
}

void check_budget(const MemoryBytes& mem, uint64_t limit_bytes) {
    if (mem.peak_estimate <= limit_bytes) return;
    const char* worst = "weights";
    uint64_t worst_bytes = mem.weights;
    if (mem.kv_cache > worst_bytes) {
        worst = "kv_cache";
        worst_bytes = mem.kv_cache;
    }
    if (mem.activations > worst_bytes) {
        worst = "activations";
        worst_bytes = mem.activations;
    }
    throw BudgetError("estimated peak memory " + std::to_string(mem.peak_estimate) +
                      " bytes exceeds budget " + std::to_string(limit_bytes) +
                      " bytes; largest component: " + worst + " (" +
                      std::to_string(worst_bytes) + " bytes)");
}

namespace {

double ms_since(const std::chrono::steady_clock::time_point& t0) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
        .count();
}

Stat stat_of(const std::vector<double>& xs) {
    Stat s;
    for (double x : xs) s.mean += x;
    s.mean /= double(xs.size());
    double sq = 0.0;
    for (double x : xs) sq += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(sq / double(xs.size() - 1));
    return s;
}

Tensor norm_rows(const NormWeights& nw, const Tensor& x) {
    NormWeights& mut = const_cast<NormWeights&>(nw);
    if (nw.kind == NormKind::layernorm) {
        return layer_norm(x, mut.gain.value, mut.bias.value, nullptr);
    }
    return rms_norm(x, mut.gain.value, nullptr);
}

// Contiguous per-layer K/V storage for a batch of independent streams; stream
// b owns rows [b*cap, b*cap + len).
struct BatchKV {
    std::vector<Tensor> keys, values;
    int64_t cap = 0;
    int64_t len = 0;

    BatchKV(int n_layers, int64_t batch, int64_t cap_, int64_t d) : cap(cap_) {
        for (int l = 0; l < n_layers; ++l) {
            keys.emplace_back(Tensor::zeros({batch * cap_, d}));
            values.emplace_back(Tensor::zeros({batch * cap_, d}));
        }
    }
    void reset() { len = 0; }
};

// One batched decode step: every stream consumes one token at position `pos`.
void decode_step(TransformerModel& m, const std::vector<int32_t>& toks, int64_t pos,
                 BatchKV& kv, Tensor* logits_out = nullptr) {
    const ModelConfig& cfg = m.cfg;
    const int64_t B = int64_t(toks.size());
    const int64_t d = cfg.d_model;
    const int64_t h = cfg.mlp_hidden();
    Tensor x({B, d});
    for (int64_t b = 0; b < B; ++b) {
        auto src = m.embed.value.row(toks[size_t(b)]);
        std::copy(src.begin(), src.end(), x.row(b).begin());
    }
    const int64_t span = kv.len + 1;
    for (int l = 0; l < cfg.n_layers; ++l) {
        Block& blk = m.blocks[size_t(l)];
        Tensor normed1 = norm_rows(blk.norm1, x);
        Tensor q = matmul(normed1, blk.attn.w_q.value);
        Tensor k = matmul(normed1, blk.attn.w_k.value);
        Tensor v = matmul(normed1, blk.attn.w_v.value);
        rope_apply_at(q, pos, cfg.n_heads);
        rope_apply_at(k, pos, cfg.n_heads);
        Tensor& keys = kv.keys[size_t(l)];
        Tensor& vals = kv.values[size_t(l)];
        for (int64_t b = 0; b < B; ++b) {
            auto ks = k.row(b);
            auto vs = v.row(b);
            std::copy(ks.begin(), ks.end(), keys.row(b * kv.cap + kv.len).begin());
            std::copy(vs.begin(), vs.end(), vals.row(b * kv.cap + kv.len).begin());
        }
        Tensor y({B, d});
        for (int64_t b = 0; b < B; ++b) {
            attend_rows(q.row(b).data(), keys.data() + b * kv.cap * d,
                        vals.data() + b * kv.cap * d, span, d, cfg.n_heads, y.row(b).data());
        }
        Tensor mixed;
        if (auto* dense = std::get_if<DenseMix>(&blk.attn.mix)) {
            mixed = matmul(y, dense->w_o.value);
            for (int64_t b = 0; b < B; ++b) {
                float* r = mixed.row(b).data();
                for (int64_t j = 0; j < d; ++j) r[j] += dense->b_o.value.at(j);
            }
            tally_elementwise(uint64_t(B * d));
        } else {
            auto& had = std::get<HadamardMix>(blk.attn.mix);
            mixed = hadamard_mix_forward(y, had.alpha.value, had.beta.value, had.spec);
        }
        for (int64_t i = 0; i < x.numel(); ++i) x.at(i) += mixed.at(i);
        Tensor normed2 = norm_rows(blk.norm2, x);
        Tensor gate = silu(matmul(normed2, blk.mlp.w_gate.value));
        Tensor up = matmul(normed2, blk.mlp.w_up.value);
        Tensor gated = mul(gate, up);
        tally_elementwise(uint64_t(2 * B * h));
        Tensor mo = matmul(gated, blk.mlp.w_down.value);
        for (int64_t i = 0; i < x.numel(); ++i) x.at(i) += mo.at(i);
    }
    kv.len += 1;
    Tensor fin = norm_rows(m.final_norm, x);
    Tensor logits = Tensor::zeros({B, cfg.vocab_size});
    add_matmul_nt(logits, fin, m.embed.value);  // cost belongs to the step even when unused
    if (logits_out) *logits_out = std::move(logits);
}

// Replicates bench_decode's token drawing so callers can reproduce the streams.
std::vector<std::vector<int32_t>> draw_token_steps(const BenchConfig& cfg) {
    Rng rng(mix_seed(cfg.seed));
    std::vector<std::vector<int32_t>> toks(size_t(cfg.n_positions + 1),
                                           std::vector<int32_t>(size_t(cfg.batch)));
    for (auto& row : toks) {
        for (auto& t : row) t = int32_t(rng.uniform_int(0, cfg.model.vocab_size - 1));
    }
    return toks;
}

BenchReport finish_report(const BenchConfig& cfg, const std::vector<double>& iter_ms,
                          const OpCounts& ops) {
    BenchReport rep;
    rep.phase = cfg.phase;
    rep.variant = cfg.model.variant;
    rep.d = cfg.model.d_model;
    rep.batch = cfg.batch;
    rep.n_positions = cfg.n_positions;
    rep.runs = cfg.runs;
    rep.iters_per_run = cfg.iters_per_run;
    rep.threads = cfg.threads;
    std::vector<double> lat, tput;
    for (double ms : iter_ms) {
        lat.push_back(ms / double(cfg.n_positions));
        tput.push_back(double(cfg.batch * cfg.n_positions) * 1000.0 / ms);
    }
    rep.latency_ms_per_token = stat_of(lat);
    rep.throughput_tokens_per_s = stat_of(tput);
    // Mean throughput is defined through mean latency, so the pair always
    // satisfies throughput * latency = 1000 * batch; the std still reflects
    // per-run spread.
    rep.throughput_tokens_per_s.mean =
        1000.0 * double(cfg.batch) / rep.latency_ms_per_token.mean;
    rep.memory = estimate_memory(cfg.model, cfg.phase, cfg.batch, cfg.n_positions);
    rep.ops_per_iter = ops;
    return rep;
}

}  // namespace

BenchReport bench_prefill(const BenchConfig& cfg) {
    cfg.validate();
    const MemoryBytes mem = estimate_memory(cfg.model, cfg.phase, cfg.batch, cfg.n_positions);
    check_budget(mem, cfg.mem_limit_bytes);

    TransformerModel model = TransformerModel::init(cfg.model, cfg.seed);
    Rng rng(mix_seed(cfg.seed));
    std::vector<int32_t> tokens(size_t(cfg.n_positions));
    for (auto& t : tokens) t = int32_t(rng.uniform_int(0, cfg.model.vocab_size - 1));

    auto iteration = [&] {
        for (int64_t b = 0; b < cfg.batch; ++b) {
            Tensor logits = model_forward(model, tokens);
            (void)logits;
        }
    };

    for (int i = 0; i < cfg.warmup_iters; ++i) iteration();
    OpCounts ops;
    {
        OpCountScope scope(ops);
        iteration();
    }
    std::vector<double> iter_ms;
    for (int r = 0; r < cfg.runs; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        for (int i = 0; i < cfg.iters_per_run; ++i) iteration();
        iter_ms.push_back(ms_since(t0) / double(cfg.iters_per_run));
    }
    return finish_report(cfg, iter_ms, ops);
}

BenchReport bench_decode(const BenchConfig& cfg) {
    cfg.validate();
    const MemoryBytes mem = estimate_memory(cfg.model, cfg.phase, cfg.batch, cfg.n_positions);
    check_budget(mem, cfg.mem_limit_bytes);

    TransformerModel model = TransformerModel::init(cfg.model, cfg.seed);
    // Token stream per step, distinct per batch lane, fixed across variants.
    const int64_t steps = cfg.n_positions;
    const std::vector<std::vector<int32_t>> toks = draw_token_steps(cfg);
    BatchKV kv(cfg.model.n_layers, cfg.batch, steps + 1, cfg.model.d_model);

    // Returns decode-only wall ms; the 1-token prompt seeding is untimed.
    auto iteration = [&](bool timed) -> double {
        kv.reset();
        decode_step(model, toks[0], 0, kv);
        const auto t0 = std::chrono::steady_clock::now();
        for (int64_t s = 1; s <= steps; ++s) decode_step(model, toks[size_t(s)], s, kv);
        return timed ? ms_since(t0) : 0.0;
    };

    for (int i = 0; i < cfg.warmup_iters; ++i) iteration(false);
    OpCounts ops;
    {
        OpCountScope scope(ops);
        OpCounts prompt_ops;
        {
            // Exclude the untimed prompt step from the per-iteration census.
            kv.reset();
            OpCountScope prompt_scope(prompt_ops);
            decode_step(model, toks[0], 0, kv);
        }
        for (int64_t s = 1; s <= steps; ++s) decode_step(model, toks[size_t(s)], s, kv);
    }
    std::vector<double> iter_ms;
    for (int r = 0; r < cfg.runs; ++r) {
        double total = 0.0;
        for (int i = 0; i < cfg.iters_per_run; ++i) total += iteration(true);
        iter_ms.push_back(total / double(cfg.iters_per_run));
    }
    return finish_report(cfg, iter_ms, ops);
}

Tensor bench_decode_logits(const BenchConfig& cfg,
                           std::vector<std::vector<int32_t>>* tokens_out) {
    cfg.validate();
    TransformerModel model = TransformerModel::init(cfg.model, cfg.seed);
    const int64_t steps = cfg.n_positions;
    const std::vector<std::vector<int32_t>> toks = draw_token_steps(cfg);
    BatchKV kv(cfg.model.n_layers, cfg.batch, steps + 1, cfg.model.d_model);
    Tensor logits;
    decode_step(model, toks[0], 0, kv, &logits);
    for (int64_t s = 1; s <= steps; ++s) decode_step(model, toks[size_t(s)], s, kv, &logits);
    if (tokens_out) *tokens_out = toks;
    return logits;
}

BenchReport run_bench(const BenchConfig& cfg) {
    return cfg.phase == BenchPhase::prefill ? bench_prefill(cfg) : bench_decode(cfg);
}

std::pair<BenchReport, BenchReport> bench_pair(const BenchConfig& cfg) {
    BenchConfig base_cfg = cfg;
    base_cfg.model.variant = AttentionVariant::dense;
    BenchConfig had_cfg = cfg;
    had_cfg.model.variant = AttentionVariant::hadamard;
    BenchReport base = run_bench(base_cfg);
    BenchReport had = run_bench(had_cfg);
    had.has_delta = true;
    had.delta_latency_mean = had.latency_ms_per_token.mean - base.latency_ms_per_token.mean;
    had.delta_throughput_mean =
        had.throughput_tokens_per_s.mean - base.throughput_tokens_per_s.mean;
    had.delta_weight_bytes = int64_t(had.memory.weights) - int64_t(base.memory.weights);
    return {base, had};
}

MicrobenchResult microbench_projection(int64_t d, int64_t batch, int iters, uint64_t seed) {
    if (d < 2) throw std::invalid_argument("microbench_projection: d must be >= 2");
    if (batch < 1 || iters < 1) {
        throw std::invalid_argument("microbench_projection: batch and iters must be >= 1");
    }
    const HadamardSpec spec = HadamardSpec::for_order(d);  // rejects unsupported d
    Rng rng(mix_seed(seed));
    Tensor y({batch, d});
    for (int64_t i = 0; i < y.numel(); ++i) y.at(i) = rng.normal();
    Tensor w({d, d});
    for (int64_t i = 0; i < w.numel(); ++i) w.at(i) = 0.02f * rng.normal();
    const Tensor alpha = Tensor::full({d}, 1.0f);
    const Tensor beta = Tensor::zeros({d});

    MicrobenchResult res;
    res.d = d;
    res.batch = batch;
    res.iters = iters;
    OpCounts dense_counts, had_counts;
    {
        OpCountScope scope(dense_counts);
        Tensor out = matmul(y, w);
        (void)out;
    }
    {
        OpCountScope scope(had_counts);
        Tensor out = hadamard_mix_forward(y, alpha, beta, spec);
        (void)out;
    }
    res.dense_ops = dense_counts.macs;
    res.hadamard_ops = had_counts.addsubs;  // affine scale/shift tracked separately
    res.op_ratio = double(res.dense_ops) / double(res.hadamard_ops);

    auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < iters; ++i) {
        Tensor out = matmul(y, w);
        (void)out;
    }
    res.dense_ms = ms_since(t0) / double(iters);
    t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < iters; ++i) {
        Tensor out = hadamard_mix_forward(y, alpha, beta, spec);
        (void)out;
    }
    res.hadamard_ms = ms_since(t0) / double(iters);
    res.wall_ratio = res.dense_ms / res.hadamard_ms;
    return res;
}

}  // namespace hadamix
