#pragma once

#include <cstdint>

#include "hadamix/model.hpp"

namespace hadamix {

// Central-difference verification of the hand-written backward passes.
// Every entry of every parameter (and of the input) is probed at +-h and
// +-2h with Richardson extrapolation to cancel curvature (the step is
// matched to the probed system's feature scale: 1.5e-2 for module-level
// checks, 2e-3 for the full-model loss), then scored as
// |fd - analytic| / max(|fd|, |analytic|, floor); the absolute floor absorbs
// float32 forward noise on near-zero gradients. `checked` counts entries
// scored on their own magnitude, `skipped` those held to the floor.
struct GradCheckResult {
    double max_rel_err = 0.0;
    int64_t checked = 0;
    int64_t skipped = 0;
};

GradCheckResult check_attention_grads(AttentionVariant variant, int64_t d, int n_heads,
                                      int64_t T, uint64_t seed);

// Full model: loss is the training cross entropy on random tokens.
GradCheckResult check_model_grads(const ModelConfig& cfg, int64_t T, uint64_t seed);

}  // namespace hadamix
