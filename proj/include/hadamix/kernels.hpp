#pragma once

#include <vector>

#include "hadamix/tensor.hpp"

namespace hadamix {

inline constexpr float kNormEps = 1e-5f;

// Deterministic dense kernels. Every kernel fixes its reduction order per
// output element, so identical inputs give bit-identical outputs regardless
// of how callers distribute rows across workers.

// C = A (n x k) * B (k x p).
Tensor matmul(const Tensor& a, const Tensor& b);

// C += A * B, C += A * B^T, C += A^T * B. Accumulation order over the
// contracted axis is index order in all three.
void add_matmul(Tensor& c, const Tensor& a, const Tensor& b);
void add_matmul_nt(Tensor& c, const Tensor& a, const Tensor& b);
void add_matmul_tn(Tensor& c, const Tensor& a, const Tensor& b);

// dA = G * B^T, dB = A^T * G for C = A * B with upstream G.
void matmul_backward(const Tensor& a, const Tensor& b, const Tensor& g, Tensor& da,
                     Tensor& db);

// Row-wise softmax with per-row max subtraction; rows sum to 1.
Tensor softmax_rows(const Tensor& x);

// dX given the forward probabilities P and upstream G.
Tensor softmax_rows_backward(const Tensor& probs, const Tensor& g);

// Per-row state needed to run a normalization backward pass.
struct NormStash {
    Tensor xhat;              // normalized pre-affine values
    std::vector<float> rstd;  // reciprocal stddev (or reciprocal RMS) per row
};

// out = gain (.) (x - mean) / sqrt(var + eps) + bias, per row.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  NormStash* stash = nullptr);
void layer_norm_backward(const NormStash& stash, const Tensor& gain, const Tensor& g,
                         Tensor& dx, Tensor& dgain, Tensor& dbias);

// out = gain (.) x / sqrt(mean(x^2) + eps), per row.
Tensor rms_norm(const Tensor& x, const Tensor& gain, NormStash* stash = nullptr);
void rms_norm_backward(const NormStash& stash, const Tensor& gain, const Tensor& g,
                       Tensor& dx, Tensor& dgain);

// Elementwise.
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor silu(const Tensor& x);
Tensor silu_backward(const Tensor& x, const Tensor& g);  // g * silu'(x)

}  // namespace hadamix
