#include "hadamix/train.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "hadamix/analysis.hpp"
#include "hadamix/checkpoint.hpp"
#include "hadamix/errors.hpp"

namespace fs = std::filesystem;

namespace hadamix {

void TrainConfig::validate() const {
    model.validate();
    if (total_steps < 0) throw ConfigError("total_steps must be >= 0");
    if (warmup_steps < 0) throw ConfigError("warmup_steps must be >= 0");
    if (total_steps > 0 && warmup_steps >= total_steps) {
        throw ConfigError("warmup_steps must be below total_steps");
    }
    if (!(peak_lr > min_lr) || min_lr < 0) {
        throw ConfigError("learning rates must satisfy peak_lr > min_lr >= 0");
    }
    if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1) {
        throw ConfigError("betas must lie in [0, 1)");
    }
    if (eps <= 0) throw ConfigError("eps must be positive");
    if (weight_decay < 0) throw ConfigError("weight_decay must be >= 0");
    if (clip_norm <= 0) throw ConfigError("clip_norm must be positive");
    if (batch_tokens < 1) throw ConfigError("batch_tokens must be >= 1");
    if (eval_interval < 1) throw ConfigError("eval_interval must be >= 1");
    if (eval_batches < 1) throw ConfigError("eval_batches must be >= 1");
    if (checkpoint_interval < 1) throw ConfigError("checkpoint_interval must be >= 1");
    if (threads < 1) throw ConfigError("threads must be >= 1");
}

double lr_at(const TrainConfig& cfg, int64_t step) {
    if (step < 0 || step > cfg.total_steps) {
        throw std::invalid_argument("lr_at: step outside [0, total_steps]");
    }
    if (step <= cfg.warmup_steps && cfg.warmup_steps > 0) {
        return cfg.peak_lr * double(step) / double(cfg.warmup_steps);
    }
    const double span = double(cfg.total_steps - cfg.warmup_steps);
    const double progress = span > 0 ? double(step - cfg.warmup_steps) / span : 1.0;
    return cfg.min_lr + 0.5 * (cfg.peak_lr - cfg.min_lr) * (1.0 + std::cos(M_PI * progress));
}

double clip_gradients(const std::vector<ParamTensor*>& params, double max_norm) {
    double sq = 0.0;
    for (const ParamTensor* p : params) {
        for (int64_t i = 0; i < p->grad.numel(); ++i) {
            const double g = double(p->grad.at(i));
            sq += g * g;
        }
    }
    const double norm = std::sqrt(sq);
    if (norm > max_norm) {
        const float scale = float(max_norm / norm);
        for (ParamTensor* p : params) {
            for (int64_t i = 0; i < p->grad.numel(); ++i) p->grad.at(i) *= scale;
        }
    }
    return norm;
}

AdamState adam_init(const std::vector<ParamTensor*>& params) {
    AdamState st;
    st.m.reserve(params.size());
    st.v.reserve(params.size());
    for (const ParamTensor* p : params) {
        Tensor zero = p->value;
        zero.zero();
        st.m.push_back(zero);
        st.v.push_back(std::move(zero));
    }
    return st;
}

void adamw_step(const std::vector<ParamTensor*>& params, AdamState& st, double lr,
                const TrainConfig& cfg) {
    if (st.m.size() != params.size() || st.v.size() != params.size()) {
        throw std::invalid_argument("adamw_step: state/parameter list mismatch");
    }
    // Abort before touching anything if any gradient is non-finite.
    for (const ParamTensor* p : params) {
        for (int64_t i = 0; i < p->grad.numel(); ++i) {
            if (!std::isfinite(p->grad.at(i))) {
                throw std::runtime_error("adamw_step: non-finite gradient in " + p->name);
            }
        }
    }
    st.t += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, double(st.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, double(st.t));
    for (size_t pi = 0; pi < params.size(); ++pi) {
        ParamTensor& p = *params[pi];
        Tensor& m = st.m[pi];
        Tensor& v = st.v[pi];
        const bool decay = p.decay && cfg.weight_decay > 0;
        for (int64_t i = 0; i < p.value.numel(); ++i) {
            const double g = double(p.grad.at(i));
            double theta = double(p.value.at(i));
            if (decay) theta -= lr * cfg.weight_decay * theta;
            const double mi = cfg.beta1 * double(m.at(i)) + (1.0 - cfg.beta1) * g;
            const double vi = cfg.beta2 * double(v.at(i)) + (1.0 - cfg.beta2) * g * g;
            m.at(i) = float(mi);
            v.at(i) = float(vi);
            theta -= lr * (mi / bc1) / (std::sqrt(vi / bc2) + cfg.eps);
            p.value.at(i) = float(theta);
        }
    }
}

namespace {

std::vector<uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(is)),
                               std::istreambuf_iterator<char>());
    return bytes;
}

double batch_loss(TransformerModel& model, const std::vector<uint8_t>& bytes, int64_t start,
                  int64_t T, Tensor* dlogits, ModelActs* acts) {
    std::vector<int32_t> input(static_cast<size_t>(T)), target(static_cast<size_t>(T));
    for (int64_t i = 0; i < T; ++i) {
        input[size_t(i)] = bytes[size_t(start + i)];
        target[size_t(i)] = bytes[size_t(start + i + 1)];
    }
    Tensor logits = model_forward(model, input, nullptr, 0, acts);
    return cross_entropy_loss(logits, target, dlogits);
}

struct TrainCkptExtras {
    int64_t step = 0;
    int64_t adam_t = 0;
    double best_val = std::numeric_limits<double>::infinity();
    double initial_val = 0.0;
    uint64_t cumulative_flops = 0;
    std::string rng_state;
};

void save_train_checkpoint(const std::string& path, const TransformerModel& model,
                           const AdamState& st, const TrainCkptExtras& ex) {
    CheckpointData data = snapshot_model(model);
    char buf[64];
    data.config.emplace_back("step", std::to_string(ex.step));
    data.config.emplace_back("adam_t", std::to_string(ex.adam_t));
    std::snprintf(buf, sizeof buf, "%.17g", ex.best_val);
    data.config.emplace_back("best_val", buf);
    std::snprintf(buf, sizeof buf, "%.17g", ex.initial_val);
    data.config.emplace_back("initial_val", buf);
    data.config.emplace_back("cumulative_flops", std::to_string(ex.cumulative_flops));
    data.config.emplace_back("rng", ex.rng_state);
    const auto params = model.params();
    for (size_t i = 0; i < params.size(); ++i) {
        data.tensors.emplace_back("opt.m." + params[i]->name, st.m[i]);
        data.tensors.emplace_back("opt.v." + params[i]->name, st.v[i]);
    }
    write_checkpoint(path, data);
}

void require_same_model_config(const ModelConfig& a, const ModelConfig& b) {
    const bool same = a.d_model == b.d_model && a.n_layers == b.n_layers &&
                      a.n_heads == b.n_heads && a.vocab_size == b.vocab_size &&
                      a.max_seq_len == b.max_seq_len && a.variant == b.variant &&
                      a.norm == b.norm;
    if (!same) throw ConfigError("checkpoint model config does not match the requested run");
}

TrainCkptExtras load_train_checkpoint(const std::string& path, const TrainConfig& cfg,
                                      TransformerModel& model, AdamState& st, Rng& rng) {
    CheckpointData data = read_checkpoint(path);
    model = model_from_checkpoint(data);
    require_same_model_config(model.cfg, cfg.model);
    const auto params = model.params();
    st = adam_init(params);
    for (size_t i = 0; i < params.size(); ++i) {
        const Tensor* m = data.find_tensor("opt.m." + params[i]->name);
        const Tensor* v = data.find_tensor("opt.v." + params[i]->name);
        if (!m || !v) throw IoError("checkpoint missing optimizer state for " + params[i]->name);
        st.m[i] = *m;
        st.v[i] = *v;
    }
    TrainCkptExtras ex;
    auto need = [&](const char* key) -> const std::string& {
        const std::string* v = data.find_key(key);
        if (!v) throw IoError(std::string("checkpoint missing key: ") + key);
        return *v;
    };
    ex.step = std::stoll(need("step"));
    ex.adam_t = std::stoll(need("adam_t"));
    ex.best_val = std::stod(need("best_val"));
    ex.initial_val = std::stod(need("initial_val"));
    ex.cumulative_flops = std::stoull(need("cumulative_flops"));
    ex.rng_state = need("rng");
    st.t = ex.adam_t;
    rng.deserialize(ex.rng_state);
    return ex;
}

}  // namespace

double eval_loss(TransformerModel& model, const std::vector<uint8_t>& val_bytes,
                 const TrainConfig& cfg, int64_t step) {
    const int64_t T = cfg.seq_len();
    Rng rng(mix_seed(cfg.seed) ^ mix_seed(uint64_t(step) * 2 + 1));
    double total = 0.0;
    for (int64_t b = 0; b < cfg.eval_batches; ++b) {
        const int64_t start = rng.uniform_int(0, int64_t(val_bytes.size()) - (T + 1));
        total += batch_loss(model, val_bytes, start, T, nullptr, nullptr);
    }
    return total / double(cfg.eval_batches);
}

TrainResult train_loop(const TrainConfig& cfg, const std::string& data_path,
                       const std::string& out_dir, const TrainHook& on_eval) {
    cfg.validate();
    const std::vector<uint8_t> bytes = read_file_bytes(data_path);
    const int64_t T = cfg.seq_len();
    const int64_t n = int64_t(bytes.size());
    const int64_t train_len = n * 9 / 10;
    if (train_len < T + 1 || n - train_len < T + 1) {
        throw ConfigError("dataset too small: " + std::to_string(n) + " bytes cannot supply " +
                          std::to_string(T + 1) + "-byte windows for both splits");
    }
    const std::vector<uint8_t> train_bytes(bytes.begin(), bytes.begin() + train_len);
    const std::vector<uint8_t> val_bytes(bytes.begin() + train_len, bytes.end());

    fs::create_directories(out_dir);
    const std::string log_path = out_dir + "/train_log.csv";
    const std::string init_path = out_dir + "/init.ckpt";
    const std::string latest_path = out_dir + "/latest.ckpt";
    const std::string final_path = out_dir + "/final.ckpt";

    TransformerModel model;
    AdamState opt;
    Rng data_rng;
    TrainCkptExtras ex;
    std::ofstream log;
    const bool resume = fs::exists(latest_path);
    if (resume) {
        ex = load_train_checkpoint(latest_path, cfg, model, opt, data_rng);
        if (ex.step > cfg.total_steps) {
            throw ConfigError("checkpoint is at step " + std::to_string(ex.step) +
                              ", beyond total_steps " + std::to_string(cfg.total_steps));
        }
        // Log rows past the checkpoint belong to steps the interruption lost;
        // reconcile to the resumed state so the rerun recreates them instead
        // of duplicating.
        std::string kept = "step,lr,train_loss,val_loss,wall_ms,cumulative_flops\n";
        if (std::ifstream old{log_path}) {
            std::string line;
            std::getline(old, line);  // header
            while (std::getline(old, line)) {
                if (line.empty() || !std::isdigit((unsigned char)line[0])) continue;
                if (std::stoll(line) <= ex.step) kept += line + "\n";
            }
        }
        log.open(log_path, std::ios::trunc);
        log << kept;
    } else {
        model = TransformerModel::init(cfg.model, cfg.seed);
        opt = adam_init(model.params());
        data_rng = Rng(mix_seed(cfg.seed));
        ex.initial_val = eval_loss(model, val_bytes, cfg, 0);
        ex.best_val = ex.initial_val;
        if (on_eval)
            on_eval(0, std::numeric_limits<double>::quiet_NaN(),
                    std::numeric_limits<double>::quiet_NaN(), ex.initial_val);
        ex.rng_state = data_rng.serialize();
        save_train_checkpoint(init_path, model, opt, ex);
        save_train_checkpoint(latest_path, model, opt, ex);
        log.open(log_path, std::ios::trunc);
        log << "step,lr,train_loss,val_loss,wall_ms,cumulative_flops\n";
    }
    if (!log) throw IoError("cannot open for writing: " + log_path);

    auto params = model.params();
    const int64_t B = cfg.batch_seqs();
    double last_train = 0.0;
    double last_val = ex.best_val;

    while (ex.step < cfg.total_steps) {
        const auto t0 = std::chrono::steady_clock::now();
        model.zero_grads();
        double loss_sum = 0.0;
        for (int64_t b = 0; b < B; ++b) {
            const int64_t start = data_rng.uniform_int(0, train_len - (T + 1));
            ModelActs acts;
            Tensor dlogits;
            loss_sum += batch_loss(model, train_bytes, start, T, &dlogits, &acts);
            const float inv_b = 1.0f / float(B);
            for (int64_t i = 0; i < dlogits.numel(); ++i) dlogits.at(i) *= inv_b;
            model_backward(model, acts, dlogits);
        }
        clip_gradients(params, cfg.clip_norm);
        const double lr = lr_at(cfg, ex.step + 1);
        adamw_step(params, opt, lr, cfg);
        ex.step += 1;
        ex.adam_t = opt.t;
        ex.cumulative_flops += training_flops(cfg.model, T, uint64_t(B) * uint64_t(T));
        last_train = loss_sum / double(B);

        const bool do_eval = ex.step % cfg.eval_interval == 0 || ex.step == cfg.total_steps;
        std::string val_field;
        if (do_eval) {
            last_val = eval_loss(model, val_bytes, cfg, ex.step);
            ex.best_val = std::min(ex.best_val, last_val);
            char buf[32];
            std::snprintf(buf, sizeof buf, "%.6f", last_val);
            val_field = buf;
            if (on_eval) on_eval(ex.step, lr, last_train, last_val);
        }
        const double wall_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                .count();
        char line[256];
        std::snprintf(line, sizeof line, "%lld,%.10g,%.6f,%s,%.3f,%llu\n",
                      (long long)ex.step, lr, last_train, val_field.c_str(), wall_ms,
                      (unsigned long long)ex.cumulative_flops);
        log << line;
        log.flush();

        if (ex.step % cfg.checkpoint_interval == 0 || ex.step == cfg.total_steps) {
            ex.rng_state = data_rng.serialize();
            save_train_checkpoint(latest_path, model, opt, ex);
        }
    }

    ex.rng_state = data_rng.serialize();
    save_train_checkpoint(final_path, model, opt, ex);

    TrainResult res;
    res.steps_run = ex.step;
    res.initial_val_loss = ex.initial_val;
    res.final_val_loss = cfg.total_steps == 0 ? ex.initial_val : last_val;
    res.final_train_loss = last_train;
    res.best_val_loss = ex.best_val;
    res.cumulative_flops = ex.cumulative_flops;
    res.param_count = model.param_count();
    res.log_path = log_path;
    res.final_checkpoint = final_path;
    return res;
}

void write_corpus(const std::string& path, int64_t n_bytes, uint64_t seed) {
    if (n_bytes < 1) throw ConfigError("corpus size must be positive");
    static const char* kAdjectives[] = {
        "old",    "small",  "bright", "quiet",  "heavy", "simple", "green",  "cold",
        "warm",   "narrow", "wide",   "sharp",  "soft",  "clever", "plain",  "steady",
        "hollow", "smooth", "rough",  "pale",   "deep",  "tall",   "patient", "fine"};
    static const char* kNouns[] = {
        "field",   "river",  "stone",   "garden",  "window", "road",    "forest",  "letter",
        "morning", "harbor", "mountain", "village", "candle", "basket",  "bridge",  "meadow",
        "shadow",  "winter", "market",  "kitchen", "journey", "story",   "teacher", "sailor",
        "farmer",  "child",  "bird",    "horse",   "lantern", "clock",   "orchard", "valley"};
    static const char* kVerbs[] = {
        "crossed",  "watched",  "carried", "opened",   "followed", "reached",
        "gathered", "painted",  "repaired", "counted",  "traded",   "visited",
        "studied",  "climbed",  "planted", "folded",   "lifted",   "cleaned",
        "borrowed", "measured", "greeted", "found",    "remembered", "described"};
    static const char* kAdverbs[] = {"slowly", "quietly", "carefully", "often",
                                     "rarely", "gently",  "early",     "together",
                                     "alone",  "twice",   "again",     "soon"};
    static const char* kPreps[] = {"near",   "beyond", "behind",  "beside",
                                   "under",  "across", "along",   "through"};

    Rng rng(mix_seed(seed));
    auto pick = [&](const char* const* pool, int64_t n) { return pool[rng.uniform_int(0, n - 1)]; };
    auto adj = [&] { return pick(kAdjectives, 24); };
    auto noun = [&] { return pick(kNouns, 32); };
    auto verb = [&] { return pick(kVerbs, 24); };
    auto adv = [&] { return pick(kAdverbs, 12); };
    auto prep = [&] { return pick(kPreps, 8); };

    std::string text;
    text.reserve(size_t(n_bytes) + 256);
    int sentences_in_par = 0;
    while (int64_t(text.size()) < n_bytes) {
        std::string s;
        switch (rng.uniform_int(0, 4)) {
            case 0:
                s = std::string("the ") + adj() + " " + noun() + " " + verb() + " the " +
                    noun() + " " + prep() + " the " + adj() + " " + noun() + ".";
                break;
            case 1:
                s = std::string("the ") + noun() + " and the " + noun() + " " + verb() + " " +
                    adv() + ".";
                break;
            case 2:
                s = std::string("every ") + noun() + " " + prep() + " the " + noun() + " " +
                    verb() + " the " + adj() + " " + noun() + ".";
                break;
            case 3:
                s = std::string("the ") + noun() + " " + verb() + " " + adv() + ", and the " +
                    noun() + " " + verb() + " the " + noun() + ".";
                break;
            default:
                s = std::string(prep()) + " the " + noun() + ", the " + adj() + " " + noun() +
                    " " + verb() + " " + adv() + ".";
                break;
        }
        s[0] = char(std::toupper(s[0]));
        text += s;
        sentences_in_par += 1;
        if (sentences_in_par == 6) {
            text += "\n\n";
            sentences_in_par = 0;
        } else {
            text += ' ';
        }
    }
    text.resize(size_t(n_bytes));

    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open for writing: " + path);
    os.write(text.data(), std::streamsize(text.size()));
    if (!os) throw IoError("write failed: " + path);
}

}  // namespace hadamix
