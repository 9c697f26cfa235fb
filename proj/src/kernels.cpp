#include "hadamix/kernels.hpp"

#include <cmath>
#include <stdexcept>

#include "hadamix/opcount.hpp"

namespace hadamix {

// ---------------------------------------------------------------------------
// Op counter plumbing (see opcount.hpp for the census convention).

namespace {
thread_local OpCounts* g_op_counter = nullptr;
}

OpCounts* current_op_counter() { return g_op_counter; }

OpCountScope::OpCountScope(OpCounts& counts) : prev_(g_op_counter) {
    g_op_counter = &counts;
}

OpCountScope::~OpCountScope() { g_op_counter = prev_; }

// ---------------------------------------------------------------------------
// Matrix products

namespace {

void require_matmul_shapes(const Tensor& a, const Tensor& b, int64_t a_inner,
                           int64_t b_inner, const char* who) {
    if (a.rank() != 2 || b.rank() != 2)
        throw std::invalid_argument(std::string(who) + ": rank-2 operands required, got " +
                                    a.shape_str() + " and " + b.shape_str());
    if (a_inner != b_inner)
        throw std::invalid_argument(std::string(who) + ": inner extents disagree, " +
                                    a.shape_str() + " vs " + b.shape_str());
}

}  // namespace

void add_matmul(Tensor& c, const Tensor& a, const Tensor& b) {
    require_matmul_shapes(a, b, a.cols(), b.rows(), "matmul");
    const int64_t n = a.rows(), k = a.cols(), p = b.cols();
    if (c.rows() != n || c.cols() != p)
        throw std::invalid_argument("matmul: output shape " + c.shape_str() + " wrong for " +
                                    a.shape_str() + " * " + b.shape_str());
    for (int64_t i = 0; i < n; ++i) {
        float* crow = &c.at(i, 0);
        for (int64_t l = 0; l < k; ++l) {
            const float av = a.at(i, l);
            const float* brow = &b.at(l, 0);
            for (int64_t j = 0; j < p; ++j) crow[j] += av * brow[j];
        }
    }
    tally_macs(uint64_t(n) * uint64_t(k) * uint64_t(p));
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_matmul_shapes(a, b, a.cols(), b.rows(), "matmul");
    Tensor c({a.rows(), b.cols()});
    add_matmul(c, a, b);
    return c;
}

void add_matmul_nt(Tensor& c, const Tensor& a, const Tensor& b) {
    // C (n x m) += A (n x p) * B^T with B (m x p)
    require_matmul_shapes(a, b, a.cols(), b.cols(), "matmul_nt");
    const int64_t n = a.rows(), p = a.cols(), m = b.rows();
    if (c.rows() != n || c.cols() != m)
        throw std::invalid_argument("matmul_nt: bad output shape " + c.shape_str());
    for (int64_t i = 0; i < n; ++i) {
        const float* arow = &a.at(i, 0);
        for (int64_t j = 0; j < m; ++j) {
            const float* brow = &b.at(j, 0);
            float acc = 0.0f;
            for (int64_t l = 0; l < p; ++l) acc += arow[l] * brow[l];
            c.at(i, j) += acc;
        }
    }
    tally_macs(uint64_t(n) * uint64_t(p) * uint64_t(m));
}

void add_matmul_tn(Tensor& c, const Tensor& a, const Tensor& b) {
    // C (k x p) += A^T * B with A (n x k), B (n x p)
    require_matmul_shapes(a, b, a.rows(), b.rows(), "matmul_tn");
    const int64_t n = a.rows(), k = a.cols(), p = b.cols();
    if (c.rows() != k || c.cols() != p)
        throw std::invalid_argument("matmul_tn: bad output shape " + c.shape_str());
    for (int64_t l = 0; l < n; ++l) {
        const float* brow = &b.at(l, 0);
        for (int64_t i = 0; i < k; ++i) {
            const float av = a.at(l, i);
            float* crow = &c.at(i, 0);
            for (int64_t j = 0; j < p; ++j) crow[j] += av * brow[j];
        }
    }
    tally_macs(uint64_t(n) * uint64_t(k) * uint64_t(p));
}

void matmul_backward(const Tensor& a, const Tensor& b, const Tensor& g, Tensor& da,
                     Tensor& db) {
    if (g.rank() != 2 || g.rows() != a.rows() || g.cols() != b.cols())
        throw std::invalid_argument("matmul_backward: upstream shape " + g.shape_str() +
                                    " wrong for " + a.shape_str() + " * " + b.shape_str());
    da = Tensor({a.rows(), a.cols()});
    db = Tensor({b.rows(), b.cols()});
    add_matmul_nt(da, g, b);
    add_matmul_tn(db, a, g);
}

// ---------------------------------------------------------------------------
// Softmax

Tensor softmax_rows(const Tensor& x) {
    require_rank(x, 2, "softmax_rows");
    Tensor out({x.rows(), x.cols()});
    const int64_t n = x.rows(), k = x.cols();
    for (int64_t i = 0; i < n; ++i) {
        const float* xi = &x.at(i, 0);
        float* oi = &out.at(i, 0);
        float m = xi[0];
        for (int64_t j = 1; j < k; ++j) m = std::max(m, xi[j]);
        float sum = 0.0f;
        for (int64_t j = 0; j < k; ++j) {
            oi[j] = std::exp(xi[j] - m);
            sum += oi[j];
        }
        const float inv = 1.0f / sum;
        for (int64_t j = 0; j < k; ++j) oi[j] *= inv;
    }
    return out;
}

Tensor softmax_rows_backward(const Tensor& probs, const Tensor& g) {
    require_same_shape(probs, g, "softmax_rows_backward");
    Tensor dx({probs.rows(), probs.cols()});
    const int64_t n = probs.rows(), k = probs.cols();
    for (int64_t i = 0; i < n; ++i) {
        const float* p = &probs.at(i, 0);
        const float* gi = &g.at(i, 0);
        float dot = 0.0f;
        for (int64_t j = 0; j < k; ++j) dot += p[j] * gi[j];
        float* d = &dx.at(i, 0);
        for (int64_t j = 0; j < k; ++j) d[j] = p[j] * (gi[j] - dot);
    }
    return dx;
}

// ---------------------------------------------------------------------------
// Normalizations

namespace {

void require_feature_vec(const Tensor& x, const Tensor& v, const char* who) {
    if (v.rank() != 1 || v.extent(0) != x.cols())
        throw std::invalid_argument(std::string(who) + ": per-feature vector " +
                                    v.shape_str() + " does not match " + x.shape_str());
}

}  // namespace

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  NormStash* stash) {
    require_rank(x, 2, "layer_norm");
    require_feature_vec(x, gain, "layer_norm");
    require_feature_vec(x, bias, "layer_norm");
    const int64_t n = x.rows(), k = x.cols();
    Tensor out({n, k});
    if (stash) {
        stash->xhat = Tensor({n, k});
        stash->rstd.assign(size_t(n), 0.0f);
    }
    for (int64_t i = 0; i < n; ++i) {
        const float* xi = &x.at(i, 0);
        float mean = 0.0f;
        for (int64_t j = 0; j < k; ++j) mean += xi[j];
        mean /= float(k);
        float var = 0.0f;
        for (int64_t j = 0; j < k; ++j) {
            float c = xi[j] - mean;
            var += c * c;
        }
        var /= float(k);
        const float rstd = 1.0f / std::sqrt(var + kNormEps);
        float* oi = &out.at(i, 0);
        for (int64_t j = 0; j < k; ++j) {
            float xh = (xi[j] - mean) * rstd;
            if (stash) stash->xhat.at(i, j) = xh;
            oi[j] = gain.at(j) * xh + bias.at(j);
        }
        if (stash) stash->rstd[size_t(i)] = rstd;
    }
    return out;
}

void layer_norm_backward(const NormStash& stash, const Tensor& gain, const Tensor& g,
                         Tensor& dx, Tensor& dgain, Tensor& dbias) {
    require_same_shape(stash.xhat, g, "layer_norm_backward");
    const int64_t n = g.rows(), k = g.cols();
    dx = Tensor({n, k});
    for (int64_t i = 0; i < n; ++i) {
        const float* gi = &g.at(i, 0);
        const float* xh = &stash.xhat.at(i, 0);
        float mean_dxh = 0.0f, mean_dxh_xh = 0.0f;
        for (int64_t j = 0; j < k; ++j) {
            float dxh = gi[j] * gain.at(j);
            mean_dxh += dxh;
            mean_dxh_xh += dxh * xh[j];
            dgain.at(j) += gi[j] * xh[j];
            dbias.at(j) += gi[j];
        }
        mean_dxh /= float(k);
        mean_dxh_xh /= float(k);
        const float rstd = stash.rstd[size_t(i)];
        float* di = &dx.at(i, 0);
        for (int64_t j = 0; j < k; ++j) {
            float dxh = gi[j] * gain.at(j);
            di[j] = rstd * (dxh - mean_dxh - xh[j] * mean_dxh_xh);
        }
    }
}

Tensor rms_norm(const Tensor& x, const Tensor& gain, NormStash* stash) {
    require_rank(x, 2, "rms_norm");
    require_feature_vec(x, gain, "rms_norm");
    const int64_t n = x.rows(), k = x.cols();
    Tensor out({n, k});
    if (stash) {
        stash->xhat = Tensor({n, k});
        stash->rstd.assign(size_t(n), 0.0f);
    }
    for (int64_t i = 0; i < n; ++i) {
        const float* xi = &x.at(i, 0);
        float ms = 0.0f;
        for (int64_t j = 0; j < k; ++j) ms += xi[j] * xi[j];
        ms /= float(k);
        const float rstd = 1.0f / std::sqrt(ms + kNormEps);
        float* oi = &out.at(i, 0);
        for (int64_t j = 0; j < k; ++j) {
            float xh = xi[j] * rstd;
            if (stash) stash->xhat.at(i, j) = xh;
            oi[j] = gain.at(j) * xh;
        }
        if (stash) stash->rstd[size_t(i)] = rstd;
    }
    return out;
}

void rms_norm_backward(const NormStash& stash, const Tensor& gain, const Tensor& g,
                       Tensor& dx, Tensor& dgain) {
    require_same_shape(stash.xhat, g, "rms_norm_backward");
    const int64_t n = g.rows(), k = g.cols();
    dx = Tensor({n, k});
    for (int64_t i = 0; i < n; ++i) {
        const float* gi = &g.at(i, 0);
        const float* xh = &stash.xhat.at(i, 0);
        float mean_u_xh = 0.0f;
        for (int64_t j = 0; j < k; ++j) {
            float u = gi[j] * gain.at(j);
            mean_u_xh += u * xh[j];
            dgain.at(j) += gi[j] * xh[j];
        }
        mean_u_xh /= float(k);
        const float rstd = stash.rstd[size_t(i)];
        float* di = &dx.at(i, 0);
        for (int64_t j = 0; j < k; ++j) {
            float u = gi[j] * gain.at(j);
            di[j] = rstd * (u - xh[j] * mean_u_xh);
        }
    }
}

// ---------------------------------------------------------------------------
// Elementwise

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    Tensor out = a;
    const int64_t n = out.numel();
    for (int64_t i = 0; i < n; ++i) out.at(i) += b.at(i);
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    Tensor out = a;
    const int64_t n = out.numel();
    for (int64_t i = 0; i < n; ++i) out.at(i) *= b.at(i);
    return out;
}

Tensor silu(const Tensor& x) {
    Tensor out = x;
    const int64_t n = out.numel();
    for (int64_t i = 0; i < n; ++i) {
        float v = out.at(i);
        out.at(i) = v / (1.0f + std::exp(-v));
    }
    return out;
}

Tensor silu_backward(const Tensor& x, const Tensor& g) {
    require_same_shape(x, g, "silu_backward");
    Tensor dx = x;
    const int64_t n = dx.numel();
    for (int64_t i = 0; i < n; ++i) {
        float v = x.at(i);
        float s = 1.0f / (1.0f + std::exp(-v));
        dx.at(i) = g.at(i) * (s + v * s * (1.0f - s));
    }
    return dx;
}

}  // namespace hadamix
