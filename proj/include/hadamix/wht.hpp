#pragma once

#include <cstdint>
#include <span>

#include "hadamix/tensor.hpp"

namespace hadamix {

// Which Hadamard matrix a transform refers to.
//
// Two families are supported:
//   base_factor = 1  : Sylvester order 2^m (symmetric, H == H^T)
//   base_factor = 12 : order 12*2^m as H12 (x) H_{2^m}, where H12 is the fixed
//                      Paley-construction matrix over GF(11). H12 is NOT
//                      symmetric, so adjoint handling matters for this family.
// `normalized` scales by 1/sqrt(order) so that H^T H = I.
struct HadamardSpec {
    int64_t order = 1;
    int64_t base_factor = 1;  // 1 or 12
    int log2_part = 0;        // m in order = base_factor * 2^m
    bool normalized = true;

    static HadamardSpec sylvester(int m, bool normalized = true);
    static HadamardSpec composite12(int m, bool normalized = true);

    // Picks the family for a model width; throws std::invalid_argument naming
    // the supported families when the order fits neither.
    static HadamardSpec for_order(int64_t d, bool normalized = true);
    static bool order_supported(int64_t d);
};

// The fixed order-12 Paley matrix, entries +-1, H * H^T = 12 * I.
const int8_t* paley12_entries();  // row-major 12x12

// Explicit materialization of H. Quadratic; used by tests, oracles and the
// dense-projection equivalence check only — the transform path below never
// builds this matrix. Construction is by Sylvester doubling plus an explicit
// Kronecker product, independent of the butterfly kernels.
Tensor build_hadamard_matrix(const HadamardSpec& spec);

// In-place butterfly transform, v <- H * v for Sylvester order v.size() = 2^m.
// m stages of pairwise add/subtract; exactly v.size() * m add/subs executed.
// When normalized, the 1/sqrt(n) factor is folded into the final stage.
void fwht_in_place(std::span<float> v, bool normalized);

// v <- H * v (or H^T * v when adjoint) for composite order 12*2^m: butterfly
// transform on each of the 12 contiguous blocks, then the Paley factor
// combined across blocks. Column convention: the vector is treated as a
// column and left-multiplied.
void fwht_composite(std::span<float> v, bool normalized, bool adjoint);

// Row convention: out = Y * H (adjoint=false) or Y * H^T (adjoint=true),
// each row transformed independently along the feature axis. Equals
// fwht_in_place per row for Sylvester orders. Rows are independent, so any
// worker count yields bit-identical results.
Tensor fwht_batch(const Tensor& y, const HadamardSpec& spec, bool adjoint = false,
                  int threads = 1);

// Add/subtract count one transformed vector costs: order * m for Sylvester,
// order * (m + 12) for the composite family.
uint64_t fwht_op_count(const HadamardSpec& spec);

}  // namespace hadamix
