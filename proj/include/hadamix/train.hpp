#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "hadamix/model.hpp"
#include "hadamix/rng.hpp"
#include "hadamix/tensor.hpp"

namespace hadamix {

struct TrainConfig {
    ModelConfig model;
    double peak_lr = 1e-3;
    double min_lr = 1e-4;
    int64_t warmup_steps = 40;
    int64_t total_steps = 2000;
    double beta1 = 0.9;
    double beta2 = 0.95;
    double eps = 1e-8;
    double weight_decay = 0.1;
    double clip_norm = 1.0;
    int64_t batch_tokens = 256;
    uint64_t seed = 42;
    int64_t eval_interval = 100;
    int64_t eval_batches = 8;
    int64_t checkpoint_interval = 500;
    int threads = 1;

    // Training windows span the model's full context.
    int64_t seq_len() const { return model.max_seq_len; }
    int64_t batch_seqs() const {
        const int64_t t = seq_len();
        return batch_tokens >= t ? batch_tokens / t : 1;
    }
    void validate() const;  // throws ConfigError
};

// Linear ramp 0 -> peak over warmup_steps, then cosine from peak down to min.
// Defined on 0 <= step <= total_steps; the loop evaluates it at the 1-based
// step being taken.
double lr_at(const TrainConfig& cfg, int64_t step);

// If the global l2 norm of all grads exceeds max_norm, scales every grad by
// max_norm / norm. Returns the pre-clip norm. Accumulation runs in double, in
// registration order.
double clip_gradients(const std::vector<ParamTensor*>& params, double max_norm);

// First/second moments mirror the parameter list by index.
struct AdamState {
    std::vector<Tensor> m;
    std::vector<Tensor> v;
    int64_t t = 0;
};

AdamState adam_init(const std::vector<ParamTensor*>& params);

// Decoupled AdamW: decay-eligible parameters shrink by lr * wd * theta before
// the bias-corrected moment update. Internal arithmetic in double, state
// stored float32. Throws on a non-finite gradient, naming the parameter.
void adamw_step(const std::vector<ParamTensor*>& params, AdamState& st, double lr,
                const TrainConfig& cfg);

struct TrainResult {
    int64_t steps_run = 0;
    double initial_val_loss = 0.0;
    double final_val_loss = 0.0;
    double final_train_loss = 0.0;
    double best_val_loss = 0.0;
    uint64_t cumulative_flops = 0;
    int64_t param_count = 0;
    std::string log_path;
    std::string final_checkpoint;
};

// Progress callback, fired at every evaluation point. The initial evaluation
// reports step 0 with lr and train loss NaN.
using TrainHook = std::function<void(int64_t step, double lr, double train_loss,
                                     double val_loss)>;

// Runs (or resumes) the full loop against a byte-level corpus: 90/10
// head/tail split, random contiguous windows, AdamW + clip + cosine schedule,
// periodic validation, CSV log and init/latest/final checkpoints under
// out_dir. Deterministic given the config; resuming from latest.ckpt
// continues the interrupted run exactly.
TrainResult train_loop(const TrainConfig& cfg, const std::string& data_path,
                       const std::string& out_dir, const TrainHook& on_eval = {});

// Mean validation loss over eval_batches seeded windows; leaves the model and
// the training RNG untouched (draws come from a per-step derived stream).
double eval_loss(TransformerModel& model, const std::vector<uint8_t>& val_bytes,
                 const TrainConfig& cfg, int64_t step);

// Deterministic synthetic English-like prose, entropy well below random
// bytes, for self-contained training runs.
void write_corpus(const std::string& path, int64_t n_bytes, uint64_t seed);

}  // namespace hadamix
