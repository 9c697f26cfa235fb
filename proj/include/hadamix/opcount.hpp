#pragma once

#include <cstdint>

namespace hadamix {

// Arithmetic-op tally used by the FLOP cross-checks and the paired benchmark.
// Convention: dense kernels count multiply-accumulates (`macs`); butterfly and
// block-combine stages count additions/subtractions (`addsubs`); elementwise
// scale/shift work counts under `elementwise`. Normalizations, softmax
// exponentials and RoPE rotations are outside the census on both the counted
// and the analytic side.
struct OpCounts {
    uint64_t macs = 0;
    uint64_t addsubs = 0;
    uint64_t elementwise = 0;

    uint64_t total() const { return macs + addsubs + elementwise; }
};

// Counting is single-threaded by contract: counted probes run with one worker.
OpCounts* current_op_counter();

// Installs a counter for the current scope; kernels tally into it with their
// actual loop bounds. Restores the previous counter on destruction.
class OpCountScope {
public:
    explicit OpCountScope(OpCounts& counts);
    ~OpCountScope();
    OpCountScope(const OpCountScope&) = delete;
    OpCountScope& operator=(const OpCountScope&) = delete;

private:
    OpCounts* prev_;
};

inline void tally_macs(uint64_t n) {
    if (OpCounts* c = current_op_counter()) c->macs += n;
}
inline void tally_addsubs(uint64_t n) {
    if (OpCounts* c = current_op_counter()) c->addsubs += n;
}
inline void tally_elementwise(uint64_t n) {
    if (OpCounts* c = current_op_counter()) c->elementwise += n;
}

}  // namespace hadamix
