// Command-line front end: train, generate, bench, analyze, selftest, export,
// corpus. Artifact-producing runs drop a manifest.json with the fully
// resolved configuration next to their outputs.
//
// Exit codes: 0 ok, 1 internal error, 2 usage, 3 bad config, 4 io failure,
// 5 memory budget exceeded, 6 selftest failure.

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "hadamix/analysis.hpp"
#include "hadamix/attention.hpp"
#include "hadamix/bench.hpp"
#include "hadamix/checkpoint.hpp"
#include "hadamix/errors.hpp"
#include "hadamix/gradcheck.hpp"
#include "hadamix/model.hpp"
#include "hadamix/opcount.hpp"
#include "hadamix/train.hpp"
#include "hadamix/wht.hpp"

namespace {

using nlohmann::json;
using namespace hadamix;

constexpr const char* kVersion = "0.1.0";

std::string with_commas(int64_t v) {
    std::string s = std::to_string(v);
    const int stop = s[0] == '-' ? 1 : 0;
    for (int pos = static_cast<int>(s.size()) - 3; pos > stop; pos -= 3)
        s.insert(static_cast<size_t>(pos), ",");
    return s;
}

json model_config_json(const ModelConfig& m) {
    return json{{"d_model", m.d_model},       {"n_layers", m.n_layers},
                {"n_heads", m.n_heads},       {"vocab_size", m.vocab_size},
                {"max_seq_len", m.max_seq_len}, {"variant", to_string(m.variant)},
                {"norm", to_string(m.norm)},  {"mlp_hidden", m.mlp_hidden()}};
}

json train_config_json(const TrainConfig& c) {
    json j = {{"peak_lr", c.peak_lr},
              {"min_lr", c.min_lr},
              {"warmup_steps", c.warmup_steps},
              {"total_steps", c.total_steps},
              {"beta1", c.beta1},
              {"beta2", c.beta2},
              {"eps", c.eps},
              {"weight_decay", c.weight_decay},
              {"clip_norm", c.clip_norm},
              {"batch_tokens", c.batch_tokens},
              {"seed", c.seed},
              {"eval_interval", c.eval_interval},
              {"eval_batches", c.eval_batches},
              {"checkpoint_interval", c.checkpoint_interval},
              {"threads", c.threads}};
    j["model"] = model_config_json(c.model);
    return j;
}

// Manifest lives next to the artifacts it describes.
void write_manifest(const std::filesystem::path& dir, const std::string& command,
                    const json& config, const std::vector<std::string>& outputs,
                    const json& extra = json::object()) {
    json j;
    j["tool"] = "hadamix";
    j["version"] = kVersion;
    j["command"] = command;
    j["config"] = config;
    j["outputs"] = outputs;
    for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    const std::filesystem::path path = dir / "manifest.json";
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << j.dump(2) << "\n";
    if (!out) throw IoError("short write to " + path.string());
}

int64_t parse_i64_value(const std::string& key, const std::string& value) {
    try {
        size_t used = 0;
        const int64_t v = std::stoll(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': not an integer: '" + value + "'");
    }
}

double parse_f64_value(const std::string& key, const std::string& value) {
    try {
        size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': not a number: '" + value + "'");
    }
}

// key=value training config file; flags override whatever the file set.
void apply_train_config_file(TrainConfig& cfg, const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open config file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    for (const auto& [key, value] : kv_parse(ss.str())) {
        if (key == "d_model") cfg.model.d_model = parse_i64_value(key, value);
        else if (key == "n_layers") cfg.model.n_layers = static_cast<int>(parse_i64_value(key, value));
        else if (key == "n_heads") cfg.model.n_heads = static_cast<int>(parse_i64_value(key, value));
        else if (key == "vocab_size") cfg.model.vocab_size = parse_i64_value(key, value);
        else if (key == "max_seq_len") cfg.model.max_seq_len = parse_i64_value(key, value);
        else if (key == "variant") cfg.model.variant = variant_from_string(value);
        else if (key == "norm") cfg.model.norm = norm_from_string(value);
        else if (key == "peak_lr") cfg.peak_lr = parse_f64_value(key, value);
        else if (key == "min_lr") cfg.min_lr = parse_f64_value(key, value);
        else if (key == "warmup_steps") cfg.warmup_steps = parse_i64_value(key, value);
        else if (key == "total_steps") cfg.total_steps = parse_i64_value(key, value);
        else if (key == "beta1") cfg.beta1 = parse_f64_value(key, value);
        else if (key == "beta2") cfg.beta2 = parse_f64_value(key, value);
        else if (key == "eps") cfg.eps = parse_f64_value(key, value);
        else if (key == "weight_decay") cfg.weight_decay = parse_f64_value(key, value);
        else if (key == "clip_norm") cfg.clip_norm = parse_f64_value(key, value);
        else if (key == "batch_tokens") cfg.batch_tokens = parse_i64_value(key, value);
        else if (key == "seed") cfg.seed = static_cast<uint64_t>(parse_i64_value(key, value));
        else if (key == "eval_interval") cfg.eval_interval = parse_i64_value(key, value);
        else if (key == "eval_batches") cfg.eval_batches = parse_i64_value(key, value);
        else if (key == "checkpoint_interval") cfg.checkpoint_interval = parse_i64_value(key, value);
        else if (key == "threads") cfg.threads = static_cast<int>(parse_i64_value(key, value));
        else throw ConfigError("unknown config key '" + key + "' in " + path);
    }
}

// ---------------------------------------------------------------- train ----

struct TrainArgs {
    std::string data;
    std::string out;
    std::string config_file;
    std::string variant;
    std::string norm;
    int64_t d = 0, layers = 0, heads = 0, vocab = 0, seq_len = 0;
    int64_t steps = -1, batch_tokens = 0, warmup = -1;
    int64_t eval_interval = 0, eval_batches = 0, ckpt_interval = 0;
    double peak_lr = -1.0, min_lr = -1.0;
    int64_t seed = -1;
    int threads = 0;
};

int run_train(const TrainArgs& a, const CLI::App& cmd) {
    TrainConfig cfg;
    if (!a.config_file.empty()) apply_train_config_file(cfg, a.config_file);
    auto has = [&](const char* name) { return cmd.count(name) > 0; };
    if (has("--d")) cfg.model.d_model = a.d;
    if (has("--layers")) cfg.model.n_layers = static_cast<int>(a.layers);
    if (has("--heads")) cfg.model.n_heads = static_cast<int>(a.heads);
    if (has("--vocab")) cfg.model.vocab_size = a.vocab;
    if (has("--seq-len")) cfg.model.max_seq_len = a.seq_len;
    if (has("--variant")) cfg.model.variant = variant_from_string(a.variant);
    if (has("--norm")) cfg.model.norm = norm_from_string(a.norm);
    if (has("--steps")) cfg.total_steps = a.steps;
    if (has("--batch-tokens")) cfg.batch_tokens = a.batch_tokens;
    if (has("--warmup")) cfg.warmup_steps = a.warmup;
    if (has("--peak-lr")) cfg.peak_lr = a.peak_lr;
    if (has("--min-lr")) cfg.min_lr = a.min_lr;
    if (has("--seed")) cfg.seed = static_cast<uint64_t>(a.seed);
    if (has("--eval-interval")) cfg.eval_interval = a.eval_interval;
    if (has("--eval-batches")) cfg.eval_batches = a.eval_batches;
    if (has("--ckpt-interval")) cfg.checkpoint_interval = a.ckpt_interval;
    if (has("--threads")) cfg.threads = a.threads;

    std::string out_dir = a.out;
    if (out_dir.empty()) {
        const char* env = std::getenv("HADAMIX_OUT");
        out_dir = env && *env ? env : "runs";
    }

    cfg.validate();
    std::printf("train: d=%" PRId64 " layers=%d heads=%d vocab=%" PRId64
                " seq=%" PRId64 " variant=%s norm=%s\n",
                cfg.model.d_model, cfg.model.n_layers, cfg.model.n_heads,
                cfg.model.vocab_size, cfg.model.max_seq_len,
                to_string(cfg.model.variant), to_string(cfg.model.norm));
    std::printf("train: steps=%" PRId64 " batch_tokens=%" PRId64 " peak_lr=%g seed=%" PRIu64
                " out=%s\n",
                cfg.total_steps, cfg.batch_tokens, cfg.peak_lr, cfg.seed, out_dir.c_str());

    const TrainResult res = train_loop(cfg, a.data, out_dir, [](int64_t step, double lr,
                                                                double train, double val) {
        if (std::isnan(train))
            std::printf("step %6" PRId64 "  val %.4f\n", step, val);
        else
            std::printf("step %6" PRId64 "  lr %.6g  train %.4f  val %.4f\n", step, lr,
                        train, val);
        std::fflush(stdout);
    });

    std::printf("done: steps=%" PRId64 "  params=%s\n", res.steps_run,
                with_commas(res.param_count).c_str());
    std::printf("val loss: initial %.4f  final %.4f  best %.4f\n", res.initial_val_loss,
                res.final_val_loss, res.best_val_loss);
    std::printf("cumulative training flops: %.4g\n", double(res.cumulative_flops));
    std::printf("log: %s\ncheckpoint: %s\n", res.log_path.c_str(),
                res.final_checkpoint.c_str());

    json extra = {{"seed", cfg.seed},
                  {"threads", cfg.threads},
                  {"data", a.data},
                  {"result",
                   {{"steps_run", res.steps_run},
                    {"param_count", res.param_count},
                    {"initial_val_loss", res.initial_val_loss},
                    {"final_val_loss", res.final_val_loss},
                    {"best_val_loss", res.best_val_loss},
                    {"final_train_loss", res.final_train_loss},
                    {"cumulative_flops", res.cumulative_flops}}}};
    write_manifest(out_dir, "train", train_config_json(cfg),
                   {res.log_path, res.final_checkpoint}, extra);
    return 0;
}

// ------------------------------------------------------------- generate ----

int run_generate(const std::string& ckpt, const std::string& prompt, int64_t n_tokens,
                 double temperature, uint64_t seed, const std::string& out_file) {
    const CheckpointData data = read_checkpoint(ckpt);
    TransformerModel model = model_from_checkpoint(data);
    if (model.cfg.vocab_size < 256)
        throw ConfigError("checkpoint vocab is " + std::to_string(model.cfg.vocab_size) +
                          "; byte-level generation needs vocab >= 256");
    std::string text = prompt.empty() ? std::string("\n") : prompt;
    std::vector<int32_t> tokens;
    tokens.reserve(text.size());
    for (unsigned char ch : text) tokens.push_back(static_cast<int32_t>(ch));
    const int64_t room = model.cfg.max_seq_len - static_cast<int64_t>(tokens.size());
    if (room <= 0)
        throw ConfigError("prompt length " + std::to_string(tokens.size()) +
                          " leaves no room in context " +
                          std::to_string(model.cfg.max_seq_len));
    const int64_t n_new = std::min<int64_t>(n_tokens, room);
    if (n_new < n_tokens)
        std::fprintf(stderr, "note: clamped to %lld tokens (context %lld minus prompt)\n",
                     static_cast<long long>(n_new),
                     static_cast<long long>(model.cfg.max_seq_len));

    const std::vector<int32_t> out =
        generate(model, tokens, n_new, static_cast<float>(temperature), seed);
    std::string rendered;
    rendered.reserve(out.size());
    for (int32_t t : out) rendered.push_back(static_cast<char>(t & 0xff));

    if (!out_file.empty()) {
        std::ofstream f(out_file, std::ios::binary | std::ios::trunc);
        if (!f) throw IoError("cannot write " + out_file);
        f << rendered;
        if (!f) throw IoError("short write to " + out_file);
        json cfgj = model_config_json(model.cfg);
        cfgj["checkpoint"] = ckpt;
        cfgj["tokens"] = n_new;
        cfgj["temperature"] = temperature;
        write_manifest(std::filesystem::path(out_file).parent_path(), "generate", cfgj,
                       {out_file}, {{"seed", seed}, {"threads", 1}});
    }
    std::fwrite(rendered.data(), 1, rendered.size(), stdout);
    if (rendered.empty() || rendered.back() != '\n') std::printf("\n");
    return 0;
}

// ---------------------------------------------------------------- bench ----

struct BenchArgs {
    int64_t d = 256;
    int64_t layers = 4;
    int64_t heads = 0;  // 0: d/64 when divisible, else 1
    int64_t batch = 1;
    int64_t len = 64;
    int runs = 3;
    int iters = 50;
    int warmup = 5;
    int threads = 1;
    int64_t seed = 0;
    int64_t mem_limit_mb = 4096;
    std::string variant = "both";
    std::string out;
};

void print_report(const BenchReport& r) {
    std::printf("%-9s  %9.4f +- %-8.4f  %10.1f +- %-9.1f  %s mac / %s addsub  %7.1f MB\n",
                to_string(r.variant), r.latency_ms_per_token.mean,
                r.latency_ms_per_token.std, r.throughput_tokens_per_s.mean,
                r.throughput_tokens_per_s.std,
                with_commas(static_cast<int64_t>(r.ops_per_iter.macs)).c_str(),
                with_commas(static_cast<int64_t>(r.ops_per_iter.addsubs)).c_str(),
                double(r.memory.peak_estimate) / (1024.0 * 1024.0));
}

void write_bench_csv(const std::string& path, const std::vector<BenchReport>& reports) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write " + path);
    f << "size,variant,lat_mean,lat_std,tps_mean,tps_std,mem_bytes,"
         "delta_lat_mean,delta_tps_mean,delta_mem_bytes\n";
    for (const auto& r : reports) {
        char line[512];
        if (r.has_delta) {
            std::snprintf(line, sizeof line,
                          "%lld,%s,%.6f,%.6f,%.3f,%.3f,%llu,%.6f,%.3f,%lld\n",
                          static_cast<long long>(r.d), to_string(r.variant),
                          r.latency_ms_per_token.mean, r.latency_ms_per_token.std,
                          r.throughput_tokens_per_s.mean, r.throughput_tokens_per_s.std,
                          static_cast<unsigned long long>(r.memory.peak_estimate),
                          r.delta_latency_mean, r.delta_throughput_mean,
                          static_cast<long long>(r.delta_weight_bytes));
        } else {
            std::snprintf(line, sizeof line, "%lld,%s,%.6f,%.6f,%.3f,%.3f,%llu,,,\n",
                          static_cast<long long>(r.d), to_string(r.variant),
                          r.latency_ms_per_token.mean, r.latency_ms_per_token.std,
                          r.throughput_tokens_per_s.mean, r.throughput_tokens_per_s.std,
                          static_cast<unsigned long long>(r.memory.peak_estimate));
        }
        f << line;
    }
    if (!f) throw IoError("short write to " + path);
}

json report_json(const BenchReport& r) {
    json j = {{"phase", to_string(r.phase)},
              {"variant", to_string(r.variant)},
              {"d", r.d},
              {"batch", r.batch},
              {"n_positions", r.n_positions},
              {"runs", r.runs},
              {"iters_per_run", r.iters_per_run},
              {"threads", r.threads},
              {"latency_ms_per_token", {{"mean", r.latency_ms_per_token.mean},
                                        {"std", r.latency_ms_per_token.std}}},
              {"throughput_tokens_per_s", {{"mean", r.throughput_tokens_per_s.mean},
                                           {"std", r.throughput_tokens_per_s.std}}},
              {"memory_bytes", {{"weights", r.memory.weights},
                                {"kv_cache", r.memory.kv_cache},
                                {"activations", r.memory.activations},
                                {"peak_estimate", r.memory.peak_estimate}}},
              {"ops_per_iter", {{"macs", r.ops_per_iter.macs},
                                {"addsubs", r.ops_per_iter.addsubs},
                                {"elementwise", r.ops_per_iter.elementwise}}}};
    if (r.has_delta) {
        j["delta"] = {{"latency_ms_per_token", r.delta_latency_mean},
                      {"throughput_tokens_per_s", r.delta_throughput_mean},
                      {"weight_bytes", r.delta_weight_bytes}};
    }
    return j;
}

int run_bench_cmd(BenchPhase phase, const BenchArgs& a) {
    BenchConfig cfg;
    cfg.phase = phase;
    cfg.model.d_model = a.d;
    cfg.model.n_layers = static_cast<int>(a.layers);
    cfg.model.n_heads = a.heads > 0 ? static_cast<int>(a.heads)
                                    : (a.d % 64 == 0 ? static_cast<int>(a.d / 64) : 1);
    cfg.model.vocab_size = 256;
    cfg.model.max_seq_len = phase == BenchPhase::decode ? a.len + 1 : a.len;
    cfg.model.norm = NormKind::rmsnorm;
    cfg.batch = a.batch;
    cfg.n_positions = a.len;
    cfg.runs = a.runs;
    cfg.iters_per_run = a.iters;
    cfg.warmup_iters = a.warmup;
    cfg.threads = a.threads;
    cfg.seed = static_cast<uint64_t>(a.seed);
    cfg.mem_limit_bytes = static_cast<uint64_t>(a.mem_limit_mb) << 20;

    std::vector<BenchReport> reports;
    if (a.variant == "both") {
        auto [base, had] = bench_pair(cfg);
        reports.push_back(base);
        reports.push_back(had);
    } else {
        cfg.model.variant = variant_from_string(a.variant);
        reports.push_back(hadamix::run_bench(cfg));
    }

    std::printf("phase=%s d=%" PRId64 " layers=%d heads=%d batch=%" PRId64
                " positions=%" PRId64 " runs=%d iters=%d threads=%d\n",
                to_string(phase), cfg.model.d_model, cfg.model.n_layers,
                cfg.model.n_heads, cfg.batch, cfg.n_positions, cfg.runs,
                cfg.iters_per_run, cfg.threads);
    std::printf("%-9s  %-22s  %-25s  %-28s  %s\n", "variant", "lat ms/token", "tokens/s",
                "ops/iter", "peak mem");
    for (const auto& r : reports) print_report(r);
    for (const auto& r : reports) {
        if (!r.has_delta) continue;
        std::printf("delta (hadamard - baseline): lat %+.4f ms/token, tput %+.1f tok/s, "
                    "weights %+lld bytes\n",
                    r.delta_latency_mean, r.delta_throughput_mean,
                    static_cast<long long>(r.delta_weight_bytes));
    }

    if (!a.out.empty()) {
        const std::string ext = std::filesystem::path(a.out).extension().string();
        if (ext == ".csv") {
            write_bench_csv(a.out, reports);
        } else if (ext == ".json") {
            json j = json::array();
            for (const auto& r : reports) j.push_back(report_json(r));
            std::ofstream f(a.out, std::ios::binary | std::ios::trunc);
            if (!f) throw IoError("cannot write " + a.out);
            f << j.dump(2) << "\n";
            if (!f) throw IoError("short write to " + a.out);
        } else {
            throw ConfigError("bench --out wants a .csv or .json path, got '" + a.out + "'");
        }
        json cfgj = model_config_json(cfg.model);
        cfgj["phase"] = to_string(phase);
        cfgj["batch"] = cfg.batch;
        cfgj["n_positions"] = cfg.n_positions;
        cfgj["runs"] = cfg.runs;
        cfgj["iters_per_run"] = cfg.iters_per_run;
        cfgj["warmup_iters"] = cfg.warmup_iters;
        cfgj["variant"] = a.variant;
        cfgj["mem_limit_bytes"] = cfg.mem_limit_bytes;
        write_manifest(std::filesystem::path(a.out).parent_path(), "bench", cfgj, {a.out},
                       {{"seed", cfg.seed}, {"threads", cfg.threads}});
        std::printf("report: %s\n", a.out.c_str());
    }
    return 0;
}

int run_bench_micro(int64_t d, int64_t batch, int iters) {
    const MicrobenchResult r = microbench_projection(d, batch, iters);
    std::printf("projection microbench: d=%" PRId64 " batch=%" PRId64 " iters=%d\n", r.d,
                r.batch, r.iters);
    std::printf("dense    %10.3f ms/iter  %s multiply-adds\n", r.dense_ms,
                with_commas(static_cast<int64_t>(r.dense_ops)).c_str());
    std::printf("hadamard %10.3f ms/iter  %s add/subs\n", r.hadamard_ms,
                with_commas(static_cast<int64_t>(r.hadamard_ops)).c_str());
    std::printf("op ratio %.4f   wall ratio %.4f\n", r.op_ratio, r.wall_ratio);
    return 0;
}

// -------------------------------------------------------------- analyze ----

void print_params_text(const ParamBreakdown& p) {
    std::printf("d=%" PRId64 " layers=%d vocab=%s mlp_hidden=%" PRId64 "\n", p.d,
                p.n_layers, with_commas(p.vocab).c_str(), p.mlp_hidden);
    std::printf("  embedding (tied head)      %18s\n", with_commas(p.embed_params).c_str());
    std::printf("  attention block, dense     %18s\n",
                with_commas(p.attn_block_dense).c_str());
    std::printf("  attention block, hadamard  %18s\n",
                with_commas(p.attn_block_hadamard).c_str());
    std::printf("  attention block, scale-only%18s  (reference)\n",
                with_commas(p.attn_block_scale_only).c_str());
    std::printf("  mlp per block              %18s\n", with_commas(p.mlp_per_block).c_str());
    std::printf("  norms per block            %18s\n",
                with_commas(p.norms_per_block).c_str());
    std::printf("  final norm                 %18s\n",
                with_commas(p.final_norm_params).c_str());
    std::printf("  total dense                %18s\n", with_commas(p.total_dense).c_str());
    std::printf("  total hadamard             %18s\n",
                with_commas(p.total_hadamard).c_str());
    std::printf("  delta                      %18s  (%.3f%% of dense)\n",
                with_commas(p.delta).c_str(), 100.0 * p.relative_delta);
}

json params_json(const ParamBreakdown& p) {
    return json{{"d", p.d},
                {"n_layers", p.n_layers},
                {"vocab", p.vocab},
                {"mlp_hidden", p.mlp_hidden},
                {"embed_params", p.embed_params},
                {"attn_block_dense", p.attn_block_dense},
                {"attn_block_hadamard", p.attn_block_hadamard},
                {"attn_block_scale_only", p.attn_block_scale_only},
                {"mlp_per_block", p.mlp_per_block},
                {"norms_per_block", p.norms_per_block},
                {"final_norm_params", p.final_norm_params},
                {"total_dense", p.total_dense},
                {"total_hadamard", p.total_hadamard},
                {"delta", p.delta},
                {"relative_delta", p.relative_delta}};
}

int run_analyze_params(int64_t d, int64_t layers, int64_t vocab, const std::string& norm,
                       bool paper_table2, bool as_json) {
    std::vector<std::pair<std::string, ModelConfig>> configs;
    if (paper_table2) {
        for (auto& [name, cfg] : paper_table2_configs()) {
            if (d > 0 && cfg.d_model != d) continue;
            if (layers > 0 && cfg.n_layers != layers) continue;
            configs.emplace_back(name, cfg);
        }
        if (configs.empty())
            throw ConfigError("no scaling-table config matches d=" + std::to_string(d) +
                              " layers=" + std::to_string(layers));
    } else {
        if (d <= 0) throw ConfigError("analyze params needs --d (or --paper-table2)");
        ModelConfig cfg;
        cfg.d_model = d;
        cfg.n_layers = static_cast<int>(layers > 0 ? layers : 24);
        cfg.vocab_size = vocab > 0 ? vocab : 50257;
        cfg.norm = norm.empty() ? NormKind::layernorm : norm_from_string(norm);
        configs.emplace_back("custom", cfg);
    }

    json out = json::array();
    for (const auto& [name, cfg] : configs) {
        const ParamBreakdown p = count_params(cfg, AttentionVariant::hadamard);
        if (as_json) {
            json j = params_json(p);
            j["name"] = name;
            out.push_back(std::move(j));
        } else {
            std::printf("[%s]\n", name.c_str());
            print_params_text(p);
        }
    }
    if (!as_json) {
        const ReductionFraction f = attention_reduction_fraction(configs[0].second.d_model);
        std::printf("attention mixing reduction: %" PRId64 "/%" PRId64
                    " = %.6f of attention params (%" PRId64 "/%" PRId64
                    " counting the dense bias)\n",
                    f.headline.num, f.headline.den, f.headline.value(), f.with_bias.num,
                    f.with_bias.den);
    } else {
        std::printf("%s\n", out.dump(2).c_str());
    }
    return 0;
}

int run_analyze_flops(int64_t d, int64_t seq, int64_t batch, bool as_json) {
    if (d <= 0) throw ConfigError("analyze flops needs --d");
    ModelConfig cfg;
    cfg.d_model = d;
    cfg.n_layers = 24;
    cfg.n_heads = d % 64 == 0 ? static_cast<int>(d / 64) : 1;
    cfg.vocab_size = 50257;
    cfg.max_seq_len = seq > 0 ? seq : 1024;
    const int64_t T = seq > 0 ? seq : 1024;
    const FlopsBreakdown f = flops_breakdown(cfg, T, batch > 0 ? batch : 1);
    if (as_json) {
        json j = {{"d", f.d},
                  {"proj_dense_macs", f.proj_dense},
                  {"proj_hadamard_addsubs", f.proj_hadamard},
                  {"proj_hadamard_kernel_ops", f.proj_hadamard_kernel_ops},
                  {"theoretical_speedup", f.speedup},
                  {"attn_score_per_token", f.attn_score_per_token},
                  {"forward_per_token", f.forward_per_token},
                  {"forward_total", f.forward_total},
                  {"seq", T},
                  {"batch", batch > 0 ? batch : 1}};
        std::printf("%s\n", j.dump(2).c_str());
    } else {
        std::printf("d=%" PRId64 "\n", f.d);
        std::printf("  projection dense (d^2 MACs)          %14.0f\n", f.proj_dense);
        std::printf("  projection hadamard (d log2 d)       %14.1f\n", f.proj_hadamard);
        std::printf("  projection kernel add/subs (exact)   %14s\n",
                    with_commas(static_cast<int64_t>(f.proj_hadamard_kernel_ops)).c_str());
        std::printf("  theoretical speedup d/log2 d         %14.3f\n", f.speedup);
        std::printf("  attention scores per token, T=%-6" PRId64 " %14s\n", T,
                    with_commas(static_cast<int64_t>(f.attn_score_per_token)).c_str());
        std::printf("  forward per token                    %14s\n",
                    with_commas(static_cast<int64_t>(f.forward_per_token)).c_str());
        std::printf("  forward total (T x batch)            %14s\n",
                    with_commas(static_cast<int64_t>(f.forward_total)).c_str());
    }
    return 0;
}

// ------------------------------------------------------------- selftest ----

int run_selftest(uint64_t seed) {
    int wht_pass = 0, wht_total = 0;
    Rng rng(seed);
    const int64_t orders[] = {1, 2, 4, 8, 16, 64, 256, 1024, 12, 24, 48, 96, 192, 384, 768};
    for (int64_t order : orders) {
        const HadamardSpec spec = HadamardSpec::for_order(order);
        const Tensor h = build_hadamard_matrix(spec);

        // Transform agrees with the explicit matrix.
        ++wht_total;
        {
            Tensor y = Tensor::zeros({2, order});
            for (int64_t i = 0; i < y.numel(); ++i) y.data()[i] = rng.normal();
            const Tensor fast = fwht_batch(y, spec);
            Tensor ref = Tensor::zeros({2, order});
            for (int64_t r = 0; r < 2; ++r)
                for (int64_t j = 0; j < order; ++j) {
                    double acc = 0.0;
                    for (int64_t k = 0; k < order; ++k)
                        acc += double(y.at(r, k)) * double(h.at(k, j));
                    ref.at(r, j) = static_cast<float>(acc);
                }
            double worst = 0.0;
            for (int64_t i = 0; i < fast.numel(); ++i)
                worst = std::max(worst, std::abs(double(fast.data()[i]) -
                                                 double(ref.data()[i])));
            if (worst < 1e-4) ++wht_pass;
            else std::printf("wht: order %" PRId64 " matrix mismatch %.3g\n", order, worst);
        }

        // Adjoint inverts the normalized transform: Y H H^T = Y.
        ++wht_total;
        {
            Tensor y = Tensor::zeros({1, order});
            for (int64_t i = 0; i < order; ++i) y.data()[i] = rng.normal();
            const Tensor back = fwht_batch(fwht_batch(y, spec), spec, /*adjoint=*/true);
            double worst = 0.0;
            for (int64_t i = 0; i < order; ++i)
                worst = std::max(worst,
                                 std::abs(double(back.data()[i]) - double(y.data()[i])));
            if (worst < 1e-4) ++wht_pass;
            else std::printf("wht: order %" PRId64 " round trip off by %.3g\n", order, worst);
        }

        // The instrumented cost matches the closed form.
        ++wht_total;
        {
            Tensor y = Tensor::zeros({1, order});
            OpCounts counts;
            {
                OpCountScope scope(counts);
                fwht_batch(y, spec);
            }
            if (counts.addsubs == fwht_op_count(spec)) ++wht_pass;
            else
                std::printf("wht: order %" PRId64 " counted %llu add/subs, expected %llu\n",
                            order, static_cast<unsigned long long>(counts.addsubs),
                            static_cast<unsigned long long>(fwht_op_count(spec)));
        }
    }
    std::printf("wht: %d/%d passed\n", wht_pass, wht_total);

    int grad_pass = 0, grad_total = 0;
    auto check = [&](const char* label, const GradCheckResult& r, double tol) {
        ++grad_total;
        if (r.checked > 0 && r.max_rel_err < tol) {
            ++grad_pass;
        } else {
            std::printf("gradients: %s max rel err %.3g over %" PRId64 " entries\n", label,
                        r.max_rel_err, r.checked);
        }
    };
    check("attention dense", check_attention_grads(AttentionVariant::dense, 16, 2, 4, seed),
          2e-3);
    check("attention hadamard",
          check_attention_grads(AttentionVariant::hadamard, 16, 2, 4, seed + 1), 2e-3);
    check("attention hadamard d=24",
          check_attention_grads(AttentionVariant::hadamard, 24, 2, 4, seed + 2), 2e-3);
    {
        ModelConfig cfg;
        cfg.d_model = 16;
        cfg.n_layers = 2;
        cfg.n_heads = 2;
        cfg.vocab_size = 32;
        cfg.max_seq_len = 8;
        cfg.variant = AttentionVariant::hadamard;
        cfg.norm = NormKind::rmsnorm;
        check("model hadamard/rmsnorm", check_model_grads(cfg, 4, seed + 3), 2e-3);
        cfg.variant = AttentionVariant::dense;
        cfg.norm = NormKind::layernorm;
        check("model dense/layernorm", check_model_grads(cfg, 4, seed + 4), 2e-3);
    }
    std::printf("gradients: %d/%d passed\n", grad_pass, grad_total);

    const bool ok = wht_pass == wht_total && grad_pass == grad_total;
    std::printf("selftest: %s\n", ok ? "all suites passed" : "FAILED");
    return ok ? 0 : 6;
}

// --------------------------------------------------------------- export ----

int run_export_flops(const std::string& out, std::vector<int64_t> ds) {
    if (ds.empty()) ds = {64, 256, 768, 1024};
    std::ofstream f(out, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write " + out);
    f << "d,dense_flops,fwht_flops\n";
    for (int64_t d : ds) {
        char line[128];
        std::snprintf(line, sizeof line, "%lld,%.0f,%.3f\n", static_cast<long long>(d),
                      projection_flops(d, AttentionVariant::dense),
                      projection_flops(d, AttentionVariant::hadamard));
        f << line;
    }
    if (!f) throw IoError("short write to " + out);
    json dims = json::array();
    for (int64_t d : ds) dims.push_back(d);
    write_manifest(std::filesystem::path(out).parent_path(), "export flops",
                   {{"d", dims}}, {out});
    std::printf("wrote %s\n", out.c_str());
    return 0;
}

int run_export_loss(const std::string& log, const std::string& out) {
    std::ifstream in(log, std::ios::binary);
    if (!in) throw IoError("cannot open " + log);
    std::ofstream f(out, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write " + out);
    f << "step,train_loss,val_loss\n";
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (first) {
            first = false;
            if (line.rfind("step,", 0) == 0) continue;  // header
        }
        if (line.empty()) continue;
        std::vector<std::string> cols;
        std::stringstream ss(line);
        std::string col;
        while (std::getline(ss, col, ',')) cols.push_back(col);
        while (cols.size() < 6) cols.emplace_back();
        f << cols[0] << ',' << cols[2] << ',' << cols[3] << '\n';
    }
    if (!f) throw IoError("short write to " + out);
    write_manifest(std::filesystem::path(out).parent_path(), "export loss",
                   {{"log", log}}, {out});
    std::printf("wrote %s\n", out.c_str());
    return 0;
}

// --------------------------------------------------------------- corpus ----

int run_corpus(const std::string& out, int64_t bytes, uint64_t seed) {
    write_corpus(out, bytes, seed);
    write_manifest(std::filesystem::path(out).parent_path(), "corpus",
                   {{"bytes", bytes}}, {out}, {{"seed", seed}, {"threads", 1}});
    std::printf("wrote %s (%s bytes)\n", out.c_str(), with_commas(bytes).c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"byte-level transformer with a Walsh-Hadamard attention mixer"};
    app.set_version_flag("--version", std::string("hadamix ") + kVersion);
    app.require_subcommand(1);

    std::function<int()> action;

    // train
    TrainArgs ta;
    auto* train_cmd = app.add_subcommand("train", "train a model on a byte corpus");
    train_cmd->add_option("--data", ta.data, "input corpus (raw bytes)")->required();
    train_cmd->add_option("--out", ta.out,
                          "output directory (default $HADAMIX_OUT or ./runs)");
    train_cmd->add_option("--config", ta.config_file, "key=value config file");
    train_cmd->add_option("--variant", ta.variant, "dense | hadamard");
    train_cmd->add_option("--norm", ta.norm, "layernorm | rmsnorm");
    train_cmd->add_option("--d", ta.d, "model width");
    train_cmd->add_option("--layers", ta.layers, "transformer blocks");
    train_cmd->add_option("--heads", ta.heads, "attention heads");
    train_cmd->add_option("--vocab", ta.vocab, "vocabulary size");
    train_cmd->add_option("--seq-len", ta.seq_len, "context length");
    train_cmd->add_option("--steps", ta.steps, "optimizer steps");
    train_cmd->add_option("--batch-tokens", ta.batch_tokens, "tokens per step");
    train_cmd->add_option("--warmup", ta.warmup, "linear warmup steps");
    train_cmd->add_option("--peak-lr", ta.peak_lr, "peak learning rate");
    train_cmd->add_option("--min-lr", ta.min_lr, "final learning rate");
    train_cmd->add_option("--seed", ta.seed, "rng seed");
    train_cmd->add_option("--eval-interval", ta.eval_interval, "steps between evals");
    train_cmd->add_option("--eval-batches", ta.eval_batches, "validation batches");
    train_cmd->add_option("--ckpt-interval", ta.ckpt_interval, "steps between checkpoints");
    train_cmd->add_option("--threads", ta.threads, "worker threads");
    train_cmd->callback([&] { action = [&] { return run_train(ta, *train_cmd); }; });

    // generate
    std::string g_ckpt, g_prompt, g_out;
    int64_t g_tokens = 128;
    double g_temp = 0.0;
    int64_t g_seed = 0;
    auto* gen_cmd = app.add_subcommand("generate", "sample bytes from a checkpoint");
    gen_cmd->add_option("--ckpt", g_ckpt, "model checkpoint")->required();
    gen_cmd->add_option("--prompt", g_prompt, "prompt text (default: newline)");
    gen_cmd->add_option("--tokens", g_tokens, "bytes to generate");
    gen_cmd->add_option("--temperature", g_temp, "0 = greedy");
    gen_cmd->add_option("--seed", g_seed, "sampling seed");
    gen_cmd->add_option("--out", g_out, "also write the text to this file");
    gen_cmd->callback([&] {
        action = [&] {
            return run_generate(g_ckpt, g_prompt, g_tokens, g_temp,
                                static_cast<uint64_t>(g_seed), g_out);
        };
    });

    // bench
    BenchArgs ba;
    auto* bench_cmd = app.add_subcommand("bench", "wall-clock benchmarks");
    bench_cmd->require_subcommand(1);
    auto add_bench_flags = [&](CLI::App* c) {
        c->add_option("--d", ba.d, "model width");
        c->add_option("--layers", ba.layers, "transformer blocks");
        c->add_option("--heads", ba.heads, "attention heads (default d/64)");
        c->add_option("--batch", ba.batch, "concurrent sequences");
        c->add_option("--len", ba.len, "prompt length / generated tokens");
        c->add_option("--runs", ba.runs, "timed runs (std needs >= 2)");
        c->add_option("--iters", ba.iters, "iterations per run");
        c->add_option("--warmup", ba.warmup, "untimed warmup iterations");
        c->add_option("--variant", ba.variant, "dense | hadamard | both");
        c->add_option("--seed", ba.seed, "input seed");
        c->add_option("--threads", ba.threads, "worker threads");
        c->add_option("--mem-limit-mb", ba.mem_limit_mb, "memory budget");
        c->add_option("--out", ba.out, "write report (.csv or .json)");
    };
    auto* prefill_cmd = bench_cmd->add_subcommand("prefill", "full-prompt forward");
    auto* decode_cmd = bench_cmd->add_subcommand("decode", "cached single-token steps");
    add_bench_flags(prefill_cmd);
    add_bench_flags(decode_cmd);
    prefill_cmd->callback(
        [&] { action = [&] { return run_bench_cmd(BenchPhase::prefill, ba); }; });
    decode_cmd->callback(
        [&] { action = [&] { return run_bench_cmd(BenchPhase::decode, ba); }; });
    int64_t mb_d = 1024, mb_batch = 256;
    int mb_iters = 10;
    auto* micro_cmd = bench_cmd->add_subcommand("micro", "mixing step only: dense vs fwht");
    micro_cmd->add_option("--d", mb_d, "width");
    micro_cmd->add_option("--batch", mb_batch, "rows per call");
    micro_cmd->add_option("--iters", mb_iters, "timed calls");
    micro_cmd->callback([&] { action = [&] { return run_bench_micro(mb_d, mb_batch, mb_iters); }; });

    // analyze
    auto* analyze_cmd = app.add_subcommand("analyze", "closed-form parameter / flop counts");
    analyze_cmd->require_subcommand(1);
    int64_t ap_d = 0, ap_layers = 0, ap_vocab = 0;
    std::string ap_norm;
    bool ap_table = false, ap_json = false;
    auto* params_cmd = analyze_cmd->add_subcommand("params", "parameter census");
    params_cmd->add_option("--d", ap_d, "model width");
    params_cmd->add_option("--layers", ap_layers, "transformer blocks");
    params_cmd->add_option("--vocab", ap_vocab, "vocabulary (default 50257)");
    params_cmd->add_option("--norm", ap_norm, "layernorm | rmsnorm");
    params_cmd->add_flag("--paper-table2", ap_table, "use the published scaling configs");
    params_cmd->add_flag("--json", ap_json, "machine-readable output");
    params_cmd->callback([&] {
        action = [&] {
            return run_analyze_params(ap_d, ap_layers, ap_vocab, ap_norm, ap_table, ap_json);
        };
    });
    int64_t af_d = 0, af_seq = 0, af_batch = 1;
    bool af_json = false;
    auto* flops_cmd = analyze_cmd->add_subcommand("flops", "arithmetic cost breakdown");
    flops_cmd->add_option("--d", af_d, "model width")->required();
    flops_cmd->add_option("--seq", af_seq, "sequence length (default 1024)");
    flops_cmd->add_option("--batch", af_batch, "batch size");
    flops_cmd->add_flag("--json", af_json, "machine-readable output");
    flops_cmd->callback([&] {
        action = [&] { return run_analyze_flops(af_d, af_seq, af_batch, af_json); };
    });

    // selftest
    int64_t st_seed = 7;
    auto* selftest_cmd = app.add_subcommand("selftest", "transform + gradient checks");
    selftest_cmd->add_option("--seed", st_seed, "check seed");
    selftest_cmd->callback(
        [&] { action = [&] { return run_selftest(static_cast<uint64_t>(st_seed)); }; });

    // export
    auto* export_cmd = app.add_subcommand("export", "plot-ready csv files");
    export_cmd->require_subcommand(1);
    std::string ef_out;
    std::vector<int64_t> ef_ds;
    auto* eflops_cmd = export_cmd->add_subcommand("flops", "projection cost vs width");
    eflops_cmd->add_option("--out", ef_out, "output csv")->required();
    eflops_cmd->add_option("--d", ef_ds, "widths (repeatable; default 64 256 768 1024)");
    eflops_cmd->callback([&] { action = [&] { return run_export_flops(ef_out, ef_ds); }; });
    std::string el_log, el_out;
    auto* eloss_cmd = export_cmd->add_subcommand("loss", "loss curve from a training log");
    eloss_cmd->add_option("--log", el_log, "train_log.csv from a run")->required();
    eloss_cmd->add_option("--out", el_out, "output csv")->required();
    eloss_cmd->callback([&] { action = [&] { return run_export_loss(el_log, el_out); }; });

    // corpus
    std::string c_out = "corpus.txt";
    int64_t c_bytes = 1 << 20;
    int64_t c_seed = 42;
    auto* corpus_cmd = app.add_subcommand("corpus", "write a synthetic training corpus");
    corpus_cmd->add_option("--out", c_out, "output file");
    corpus_cmd->add_option("--bytes", c_bytes, "corpus size");
    corpus_cmd->add_option("--seed", c_seed, "generator seed");
    corpus_cmd->callback([&] {
        action = [&] { return run_corpus(c_out, c_bytes, static_cast<uint64_t>(c_seed)); };
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        return action ? action() : 2;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: config: %s\n", e.what());
        return 3;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: config: %s\n", e.what());
        return 3;
    } catch (const IoError& e) {
        std::fprintf(stderr, "error: io: %s\n", e.what());
        return 4;
    } catch (const BudgetError& e) {
        std::fprintf(stderr, "error: budget: %s\n", e.what());
        return 5;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: internal: %s\n", e.what());
        return 1;
    }
}
