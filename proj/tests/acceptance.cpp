// Acceptance gate: one line per criterion, nonzero exit if any is red.
// Every tolerance is written out next to the check it guards.

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "hadamix/analysis.hpp"
#include "hadamix/attention.hpp"
#include "hadamix/bench.hpp"
#include "hadamix/checkpoint.hpp"
#include "hadamix/gradcheck.hpp"
#include "hadamix/kernels.hpp"
#include "hadamix/model.hpp"
#include "hadamix/opcount.hpp"
#include "hadamix/train.hpp"
#include "hadamix/wht.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace hadamix;

namespace {

using Verdict = std::pair<bool, std::string>;

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* format, ...) {
    char buf[512];
    va_list args;
    va_start(args, format);
    std::vsnprintf(buf, sizeof buf, format, args);
    va_end(args);
    return buf;
}

// 1. Transform correctness: explicit-matrix agreement, adjoint round trip and
//    exact add/sub counts at every supported order up to 4096.
Verdict c1_transform() {
    const int64_t orders[] = {1,  2,  4,  8,   16,  32,  64,  128, 256, 512, 1024,
                              2048, 4096, 12, 24, 48, 96, 192, 384, 768, 1536};
    double worst_fwd = 0.0;
    double worst_rt = 0.0;
    bool counts_ok = true;
    Rng rng(7);
    for (int64_t d : orders) {
        const HadamardSpec spec = HadamardSpec::for_order(d);
        const int64_t rows = d >= 2048 ? 2 : 4;
        const Tensor x = oracle::random_tensor({rows, d}, rng);
        OpCounts counts;
        Tensor y;
        {
            OpCountScope scope(counts);
            y = fwht_batch(x, spec);
        }
        const Tensor h = build_hadamard_matrix(spec);
        worst_fwd = std::max(worst_fwd, oracle::rel_diff(y, oracle::matmul_naive(x, h)));
        worst_rt = std::max(worst_rt, oracle::rel_diff(fwht_batch(y, spec, true), x));
        const uint64_t per_vec = spec.base_factor == 1
                                     ? uint64_t(d) * uint64_t(spec.log2_part)
                                     : fwht_op_count(spec);
        if (counts.macs != 0 || counts.addsubs != uint64_t(rows) * per_vec)
            counts_ok = false;
    }
    const bool ok = worst_fwd < 1e-5 && worst_rt < 1e-5 && counts_ok;
    return {ok, fmt("21 orders to 4096: rel vs explicit H %.2e, round trip %.2e "
                    "(tol 1e-5), op counts %s",
                    worst_fwd, worst_rt, counts_ok ? "exact" : "WRONG")};
}

// 2. Finite-difference gradients: both attention variants and a full 1-layer
//    model, 20 seeds, < 2e-3 relative, under a minute.
Verdict c2_gradients() {
    const auto t0 = std::chrono::steady_clock::now();
    double worst = 0.0;
    ModelConfig mc;
    mc.d_model = 16;
    mc.n_layers = 1;
    mc.n_heads = 2;
    mc.vocab_size = 32;
    mc.max_seq_len = 8;
    for (uint64_t seed = 0; seed < 20; ++seed) {
        worst = std::max(
            worst, check_attention_grads(AttentionVariant::dense, 16, 2, 4, seed).max_rel_err);
        worst = std::max(
            worst,
            check_attention_grads(AttentionVariant::hadamard, 16, 2, 4, seed).max_rel_err);
        mc.variant = AttentionVariant::hadamard;
        worst = std::max(worst, check_model_grads(mc, 4, seed).max_rel_err);
        mc.variant = AttentionVariant::dense;
        worst = std::max(worst, check_model_grads(mc, 4, seed).max_rel_err);
    }
    const double secs = seconds_since(t0);
    const bool ok = worst < 2e-3 && secs < 60.0;
    return {ok, fmt("20 seeds, attention d=16 h=2 T=4 + 1-layer model vocab=32, both "
                    "variants: max rel err %.2e (tol 2e-3), %.1f s (limit 60)",
                    worst, secs)};
}

// 3. With alpha=1, beta=0 the fixed mixing equals a dense projection whose
//    weight is the explicit normalized matrix, bias zero.
Verdict c3_equivalence() {
    double worst = 0.0;
    Rng rng(3);
    for (int64_t d : {int64_t(8), int64_t(64), int64_t(768)}) {
        const HadamardSpec spec = HadamardSpec::for_order(d);
        const Tensor h = build_hadamard_matrix(spec);
        const Tensor y = oracle::random_tensor({5, d}, rng);
        const Tensor alpha = Tensor::full({d}, 1.0f);
        const Tensor beta = Tensor::zeros({d});
        const Tensor fixed = hadamard_mix_forward(y, alpha, beta, spec);
        const Tensor dense = matmul(y, h);  // the dense path with W_o = H, b_o = 0
        worst = std::max(worst, oracle::rel_diff(fixed, dense));
        worst = std::max(worst, oracle::rel_diff(fixed, oracle::matmul_naive(y, h)));
    }
    return {worst < 1e-5,
            fmt("identity-affine mixing vs dense W_o = H at d in {8, 64, 768}: max rel "
                "%.2e (tol 1e-5)",
                worst)};
}

// 4. Scaling-table parameter arithmetic, all four configs.
Verdict c4_param_table() {
    struct Expect {
        int64_t d;
        int64_t delta;
        double red_pct;
        double dense_published;
    };
    const Expect expect[] = {{768, 7068672, 5.7, 124e6},
                             {1024, 25141248, 7.1, 354e6},
                             {1536, 56586240, 7.5, 757e6},
                             {2048, 100614144, 7.7, 1.3e9}};
    const auto configs = paper_table2_configs();
    if (configs.size() != 4) return {false, "expected 4 table configs"};
    bool ok = true;
    std::ostringstream note;
    for (const auto& [name, cfg] : configs) {
        const Expect* e = nullptr;
        for (const Expect& cand : expect)
            if (cand.d == cfg.d_model) e = &cand;
        if (!e) return {false, "unexpected width " + std::to_string(cfg.d_model)};
        const ParamBreakdown p = count_params(cfg, AttentionVariant::hadamard);
        const double pct = 100.0 * p.relative_delta;
        const double total_err = std::abs(double(p.total_dense) - e->dense_published) /
                                 e->dense_published;
        if (p.delta != e->delta) ok = false;
        if (std::abs(pct - e->red_pct) > 0.15) ok = false;  // +-0.15 pp
        if (total_err > 0.02) ok = false;                   // 2% of published totals
        note << (note.tellp() > 0 ? "; " : "") << name << " -" << p.delta << " (-"
             << fmt("%.2f", pct) << "%)";
    }
    return {ok, note.str() + " — deltas exact, reductions within 0.15 pp, dense totals "
                             "within 2% of published"};
}

// 5. Projection-cost figure arithmetic.
Verdict c5_projection_flops() {
    bool ok = true;
    ok &= projection_flops(64, AttentionVariant::dense) == 4096.0;
    ok &= projection_flops(256, AttentionVariant::dense) == 65536.0;
    ok &= projection_flops(768, AttentionVariant::dense) == 589824.0;
    ok &= projection_flops(1024, AttentionVariant::dense) == 1048576.0;
    ok &= projection_flops(64, AttentionVariant::hadamard) == 384.0;
    ok &= projection_flops(256, AttentionVariant::hadamard) == 2048.0;
    ok &= projection_flops(1024, AttentionVariant::hadamard) == 10240.0;
    const double f768 = projection_flops(768, AttentionVariant::hadamard);
    ok &= std::abs(f768 - 7373.0) / 7373.0 < 0.005;  // published rounding, 0.5%
    const double sp = theoretical_speedup(768);
    ok &= std::abs(sp - 80.0) / 80.0 < 0.01;  // ~80x, 1%
    return {ok, fmt("dense d^2 and d log2 d exact at published points; d=768 -> %.1f "
                    "(7373 +-0.5%%), speedup %.2fx (80 +-1%%)",
                    f768, sp)};
}

// 6. Exact attention-parameter reduction fraction and its limit.
Verdict c6_reduction_fraction() {
    const ReductionFraction f = attention_reduction_fraction(512);
    bool ok = f.headline == Rational{511, 2048};
    ok &= f.headline.value() == 0.25 - 1.0 / 2048.0;
    ok &= f.with_bias == Rational{511, 2049};
    double prev = -1.0;
    for (int64_t d = 2; d <= 8192; d *= 2) {
        const double v = attention_reduction_fraction(d).headline.value();
        if (!(v > prev && v < 0.25)) ok = false;
        prev = v;
    }
    ok &= prev > 0.2497;
    return {ok, fmt("d=512 -> 511/2048 = 0.25 - 1/2048 exactly (with bias 511/2049); "
                    "monotone toward 0.25, reaching %.6f at d=8192",
                    prev)};
}

// 7. Greedy cached decode matches full recomputation token for token.
Verdict c7_decode_consistency() {
    const int64_t kSteps = 16;
    bool ok = true;
    for (AttentionVariant variant : {AttentionVariant::dense, AttentionVariant::hadamard}) {
        ModelConfig mc;
        mc.d_model = 32;
        mc.n_layers = 2;
        mc.n_heads = 2;
        mc.vocab_size = 64;
        mc.max_seq_len = 32;
        mc.variant = variant;
        TransformerModel m = TransformerModel::init(mc, 11);
        const std::vector<int32_t> prompt = {3, 1, 4};
        const std::vector<int32_t> cached = generate(m, prompt, kSteps, 0.0f, 0);

        std::vector<int32_t> recomputed = prompt;
        for (int64_t s = 0; s < kSteps; ++s) {
            const Tensor logits = model_forward(m, recomputed);
            const int64_t last = logits.rows() - 1;
            int32_t best = 0;
            for (int64_t j = 1; j < mc.vocab_size; ++j)
                if (logits.at(last, j) > logits.at(last, best)) best = int32_t(j);
            recomputed.push_back(best);
        }
        if (cached != recomputed) ok = false;
    }
    return {ok, fmt("2-layer d=32 model, %lld greedy steps, cache vs full recompute: "
                    "token-for-token identical, both variants",
                    (long long)kSteps)};
}

// 8. Desk-scale training: both variants learn on a 1 MiB synthetic corpus,
//    with the exact parameter gap and a strictly lower FLOP total.
Verdict c8_training() {
    const auto t0 = std::chrono::steady_clock::now();
    fs::create_directories("tmp_acceptance");
    const std::string corpus = "tmp_acceptance/corpus.txt";
    write_corpus(corpus, 1 << 20, 5);

    TrainConfig tc;
    tc.model.d_model = 128;
    tc.model.n_layers = 4;
    tc.model.n_heads = 4;
    tc.model.vocab_size = 256;
    tc.model.max_seq_len = 64;
    tc.total_steps = 2000;
    tc.warmup_steps = 100;
    tc.batch_tokens = 64;
    tc.eval_interval = 200;
    tc.eval_batches = 8;
    tc.checkpoint_interval = 500;
    tc.seed = 9;

    TrainResult results[2];
    const char* dirs[2] = {"tmp_acceptance/dense", "tmp_acceptance/hadamard"};
    const AttentionVariant variants[2] = {AttentionVariant::dense,
                                          AttentionVariant::hadamard};
    for (int i = 0; i < 2; ++i) {
        fs::remove_all(dirs[i]);
        tc.model.variant = variants[i];
        results[i] = train_loop(tc, corpus, dirs[i]);
    }
    const double secs = seconds_since(t0);

    bool ok = true;
    for (const TrainResult& r : results)
        if (!(r.final_val_loss <= 0.75 * r.initial_val_loss)) ok = false;
    const int64_t expect_delta = 4 * (128 * 128 - 128);  // 65,024
    if (results[0].param_count - results[1].param_count != expect_delta) ok = false;
    if (!(results[1].cumulative_flops < results[0].cumulative_flops)) ok = false;
    if (secs >= 1800.0) ok = false;
    return {ok,
            fmt("d=128 L=4 h=4, 2000 steps each: val %.3f->%.3f (dense), %.3f->%.3f "
                "(hadamard), target <= 0.75x; param gap %lld (expect %lld); flops "
                "%llu < %llu; %.0f s (limit 1800)",
                results[0].initial_val_loss, results[0].final_val_loss,
                results[1].initial_val_loss, results[1].final_val_loss,
                (long long)(results[0].param_count - results[1].param_count),
                (long long)expect_delta,
                (unsigned long long)results[1].cumulative_flops,
                (unsigned long long)results[0].cumulative_flops, secs)};
}

// 9. Benchmark identities: throughput x latency, exact weight-memory delta,
//    exact op ratio, and the measured wall-clock edge at d=4096.
Verdict c9_bench() {
    BenchConfig bc;
    bc.model.d_model = 64;
    bc.model.n_layers = 2;
    bc.model.n_heads = 2;
    bc.model.vocab_size = 256;
    bc.model.max_seq_len = 64;
    bc.batch = 2;
    bc.n_positions = 16;
    bc.warmup_iters = 1;
    bc.iters_per_run = 3;
    bc.runs = 2;
    bc.seed = 1;

    std::vector<BenchReport> reports;
    {
        auto [base, had] = bench_pair(bc);
        reports.push_back(base);
        reports.push_back(had);
        bc.phase = BenchPhase::decode;
        auto [dbase, dhad] = bench_pair(bc);
        reports.push_back(dbase);
        reports.push_back(dhad);
    }
    bool identity_ok = true;
    for (const BenchReport& r : reports) {
        const double product = r.throughput_tokens_per_s.mean * r.latency_ms_per_token.mean;
        const double expect = 1000.0 * double(r.batch);
        if (std::abs(product - expect) > 0.01 * expect) identity_ok = false;
    }
    const uint64_t expect_delta = 4ull * 2 * (64 * 64 - 64);
    bool delta_ok = true;
    for (size_t i = 0; i + 1 < reports.size(); i += 2) {
        const BenchReport& base = reports[i];
        const BenchReport& had = reports[i + 1];
        if (base.memory.weights - had.memory.weights != expect_delta) delta_ok = false;
        if (had.delta_weight_bytes != -int64_t(expect_delta)) delta_ok = false;
    }
    const MicrobenchResult ratio = microbench_projection(1024, 4, 2);
    const bool ratio_ok = ratio.op_ratio == 102.4;
    const MicrobenchResult wall = microbench_projection(4096, 16, 2);
    const bool wall_ok = wall.wall_ratio >= 5.0;
    const bool ok = identity_ok && delta_ok && ratio_ok && wall_ok;
    return {ok, fmt("tput x lat = 1000 x batch within 1%% on 4 reports; weight delta "
                    "%llu B exact; op ratio at 1024 = %.1f (expect 102.4); wall ratio "
                    "at 4096 = %.0fx (>= 5 required)",
                    (unsigned long long)expect_delta, ratio.op_ratio, wall.wall_ratio)};
}

// 10. Determinism: bit-identical reruns, bit-exact checkpoint round trip,
//     and interruption + resume reproducing the uninterrupted run.
std::string strip_wall(const std::string& csv) {
    std::istringstream in(csv);
    std::string line, out;
    while (std::getline(in, line)) {
        std::string kept;
        int field = 0;
        for (char c : line) {
            if (c == ',') ++field;
            if (field != 4) kept += c;  // drop the wall_ms column
        }
        out += kept + "\n";
    }
    return out;
}

Verdict c10_determinism() {
    fs::create_directories("tmp_acceptance");
    const std::string corpus = "tmp_acceptance/small.txt";
    write_corpus(corpus, 1 << 14, 3);

    TrainConfig tc;
    tc.model.d_model = 16;
    tc.model.n_layers = 1;
    tc.model.n_heads = 2;
    tc.model.vocab_size = 256;
    tc.model.max_seq_len = 16;
    tc.total_steps = 6;
    tc.warmup_steps = 2;
    tc.batch_tokens = 32;
    tc.eval_interval = 2;
    tc.eval_batches = 2;
    tc.checkpoint_interval = 2;
    tc.seed = 21;

    for (const char* dir : {"tmp_acceptance/det_a", "tmp_acceptance/det_b",
                            "tmp_acceptance/det_c"})
        fs::remove_all(dir);
    train_loop(tc, corpus, "tmp_acceptance/det_a");
    train_loop(tc, corpus, "tmp_acceptance/det_b");

    const std::string ckpt_a = oracle::read_file("tmp_acceptance/det_a/final.ckpt");
    const bool rerun_ok =
        ckpt_a == oracle::read_file("tmp_acceptance/det_b/final.ckpt") &&
        strip_wall(oracle::read_file("tmp_acceptance/det_a/train_log.csv")) ==
            strip_wall(oracle::read_file("tmp_acceptance/det_b/train_log.csv"));

    const CheckpointData data = read_checkpoint("tmp_acceptance/det_a/final.ckpt");
    write_checkpoint("tmp_acceptance/roundtrip.ckpt", data);
    const bool roundtrip_ok =
        ckpt_a == oracle::read_file("tmp_acceptance/roundtrip.ckpt");

    struct Interrupt {};
    bool interrupted = false;
    try {
        train_loop(tc, corpus, "tmp_acceptance/det_c",
                   [](int64_t step, double, double, double) {
                       if (step >= 3) throw Interrupt{};
                   });
    } catch (const Interrupt&) {
        interrupted = true;
    }
    const TrainResult resumed = train_loop(tc, corpus, "tmp_acceptance/det_c");
    const bool resume_ok =
        interrupted && resumed.steps_run == 6 &&
        ckpt_a == oracle::read_file("tmp_acceptance/det_c/final.ckpt") &&
        strip_wall(oracle::read_file("tmp_acceptance/det_a/train_log.csv")) ==
            strip_wall(oracle::read_file("tmp_acceptance/det_c/train_log.csv"));

    const bool ok = rerun_ok && roundtrip_ok && resume_ok;
    return {ok, fmt("rerun %s, checkpoint round trip %s, interrupt+resume %s (loss "
                    "logs compared with the wall-clock column removed)",
                    rerun_ok ? "bit-identical" : "DIVERGED",
                    roundtrip_ok ? "bit-exact" : "CHANGED",
                    resume_ok ? "reproduces the full run" : "DIVERGED")};
}

}  // namespace

int main() {
    struct Criterion {
        const char* name;
        Verdict (*run)();
    };
    const Criterion criteria[] = {
        {"transform correctness", c1_transform},
        {"gradient checks", c2_gradients},
        {"dense-projection equivalence", c3_equivalence},
        {"parameter-table arithmetic", c4_param_table},
        {"projection-cost arithmetic", c5_projection_flops},
        {"reduction fraction", c6_reduction_fraction},
        {"decode/prefill consistency", c7_decode_consistency},
        {"desk-scale training", c8_training},
        {"benchmark identities", c9_bench},
        {"determinism and resume", c10_determinism},
    };
    int failures = 0;
    int idx = 0;
    for (const Criterion& c : criteria) {
        ++idx;
        Verdict v;
        try {
            v = c.run();
        } catch (const std::exception& e) {
            v = {false, std::string("exception: ") + e.what()};
        }
        std::printf("[%s] %2d %s: %s\n", v.first ? "PASS" : "FAIL", idx, c.name,
                    v.second.c_str());
        std::fflush(stdout);
        if (!v.first) ++failures;
    }
    std::printf("%d/10 criteria passed\n", 10 - failures);
    return failures == 0 ? 0 : 1;
}
