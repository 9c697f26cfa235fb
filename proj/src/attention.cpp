#include "hadamix/attention.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "hadamix/kernels.hpp"
#include "hadamix/opcount.hpp"

namespace hadamix {

namespace {

void validate_head_layout(int64_t d, int n_heads) {
    if (d <= 0 || n_heads <= 0) {
        throw std::invalid_argument("attention: width and head count must be positive");
    }
    if (d % n_heads != 0) {
        throw std::invalid_argument("attention: head count must divide width");
    }
    if ((d / n_heads) % 2 != 0) {
        throw std::invalid_argument("attention: head width must be even for rotary pairs");
    }
}

Tensor gaussian_matrix(int64_t rows, int64_t cols, float stddev, Rng& rng) {
    Tensor t({rows, cols});
    for (int64_t i = 0; i < t.numel(); ++i) t.at(i) = stddev * float(rng.normal());
    return t;
}

}  // namespace

std::vector<ParamTensor*> AttentionWeights::params() {
    std::vector<ParamTensor*> out{&w_q, &w_k, &w_v};
    if (auto* dense = std::get_if<DenseMix>(&mix)) {
        out.push_back(&dense->w_o);
        out.push_back(&dense->b_o);
    } else {
        auto& had = std::get<HadamardMix>(mix);
        out.push_back(&had.alpha);
        out.push_back(&had.beta);
    }
    return out;
}

std::vector<const ParamTensor*> AttentionWeights::params() const {
    auto mut = const_cast<AttentionWeights*>(this)->params();
    return {mut.begin(), mut.end()};
}

AttentionWeights AttentionWeights::make_dense(int64_t d, int n_heads, Rng& rng,
                                              const std::string& prefix) {
    validate_head_layout(d, n_heads);
    AttentionWeights w;
    w.d = d;
    w.n_heads = n_heads;
    w.w_q = ParamTensor(prefix + "w_q", gaussian_matrix(d, d, 0.02f, rng), true);
    w.w_k = ParamTensor(prefix + "w_k", gaussian_matrix(d, d, 0.02f, rng), true);
    w.w_v = ParamTensor(prefix + "w_v", gaussian_matrix(d, d, 0.02f, rng), true);
    DenseMix dense;
    dense.w_o = ParamTensor(prefix + "w_o", gaussian_matrix(d, d, 0.02f, rng), true);
    dense.b_o = ParamTensor(prefix + "b_o", Tensor::zeros({d}), false);
    w.mix = std::move(dense);
    return w;
}

AttentionWeights AttentionWeights::make_hadamard(int64_t d, int n_heads, Rng& rng,
                                                 const std::string& prefix) {
    validate_head_layout(d, n_heads);
    AttentionWeights w;
    w.d = d;
    w.n_heads = n_heads;
    w.w_q = ParamTensor(prefix + "w_q", gaussian_matrix(d, d, 0.02f, rng), true);
    w.w_k = ParamTensor(prefix + "w_k", gaussian_matrix(d, d, 0.02f, rng), true);
    w.w_v = ParamTensor(prefix + "w_v", gaussian_matrix(d, d, 0.02f, rng), true);
    HadamardMix had;
    had.spec = HadamardSpec::for_order(d);  // rejects unsupported widths
    had.alpha = ParamTensor(prefix + "alpha", Tensor::full({d}, 1.0f), false);
    had.beta = ParamTensor(prefix + "beta", Tensor::zeros({d}), false);
    w.mix = std::move(had);
    return w;
}

void rope_apply_inplace(Tensor& x, int64_t start_pos, int n_heads, bool inverse) {
    require_rank(x, 2, "rope_apply");
    const int64_t T = x.rows(), d = x.cols();
    validate_head_layout(d, n_heads);
    const int64_t hd = d / n_heads;
    const int64_t n_pairs = hd / 2;
    std::vector<double> inv_freq(static_cast<size_t>(n_pairs));
    for (int64_t i = 0; i < n_pairs; ++i) {
        inv_freq[size_t(i)] = std::pow(10000.0, -2.0 * double(i) / double(hd));
    }
    for (int64_t t = 0; t < T; ++t) {
        const double pos = double(start_pos + t);
        float* xr = x.row(t).data();
        for (int h = 0; h < n_heads; ++h) {
            float* hr = xr + int64_t(h) * hd;
            for (int64_t i = 0; i < n_pairs; ++i) {
                double angle = pos * inv_freq[size_t(i)];
                if (inverse) angle = -angle;
                const float c = float(std::cos(angle));
                const float s = float(std::sin(angle));
                const float a = hr[2 * i];
                const float b = hr[2 * i + 1];
                hr[2 * i] = a * c - b * s;
                hr[2 * i + 1] = a * s + b * c;
            }
        }
    }
}

Tensor rope_apply(const Tensor& x, int64_t start_pos, int n_heads) {
    Tensor out = x;
    rope_apply_inplace(out, start_pos, n_heads);
    return out;
}

void rope_apply_at(Tensor& x, int64_t pos, int n_heads) {
    require_rank(x, 2, "rope_apply_at");
    const int64_t B = x.rows(), d = x.cols();
    validate_head_layout(d, n_heads);
    const int64_t hd = d / n_heads;
    const int64_t n_pairs = hd / 2;
    std::vector<float> cs(static_cast<size_t>(n_pairs)), sn(static_cast<size_t>(n_pairs));
    for (int64_t i = 0; i < n_pairs; ++i) {
        const double angle = double(pos) * std::pow(10000.0, -2.0 * double(i) / double(hd));
        cs[size_t(i)] = float(std::cos(angle));
        sn[size_t(i)] = float(std::sin(angle));
    }
    for (int64_t r = 0; r < B; ++r) {
        float* xr = x.row(r).data();
        for (int h = 0; h < n_heads; ++h) {
            float* hr = xr + int64_t(h) * hd;
            for (int64_t i = 0; i < n_pairs; ++i) {
                const float a = hr[2 * i];
                const float b = hr[2 * i + 1];
                hr[2 * i] = a * cs[size_t(i)] - b * sn[size_t(i)];
                hr[2 * i + 1] = a * sn[size_t(i)] + b * cs[size_t(i)];
            }
        }
    }
}

Tensor hadamard_mix_forward(const Tensor& y, const Tensor& alpha, const Tensor& beta,
                            const HadamardSpec& spec) {
    require_rank(y, 2, "hadamard_mix: y");
    if (y.cols() != spec.order || alpha.numel() != y.cols() || beta.numel() != y.cols()) {
        throw std::invalid_argument("hadamard_mix: width does not match transform order");
    }
    Tensor out = fwht_batch(y, spec);
    const int64_t T = out.rows(), d = out.cols();
    for (int64_t t = 0; t < T; ++t) {
        float* r = out.row(t).data();
        for (int64_t j = 0; j < d; ++j) r[j] = alpha.at(j) * r[j] + beta.at(j);
    }
    tally_elementwise(uint64_t(2 * T * d));  // scale + shift
    return out;
}

void hadamard_mix_backward(const Tensor& y, const Tensor& alpha, const HadamardSpec& spec,
                           const Tensor& g, Tensor& dy, Tensor& dalpha, Tensor& dbeta) {
    require_same_shape(y, g, "hadamard_mix_backward");
    require_same_shape(y, dy, "hadamard_mix_backward: dy");
    const int64_t T = y.rows(), d = y.cols();
    const Tensor yh = fwht_batch(y, spec);
    Tensor ga({T, d});
    for (int64_t t = 0; t < T; ++t) {
        const float* gr = g.row(t).data();
        const float* yhr = yh.row(t).data();
        float* gar = ga.row(t).data();
        for (int64_t j = 0; j < d; ++j) {
            dbeta.at(j) += gr[j];
            dalpha.at(j) += gr[j] * yhr[j];
            gar[j] = gr[j] * alpha.at(j);
        }
    }
    const Tensor dyh = fwht_batch(ga, spec, /*adjoint=*/true);
    for (int64_t i = 0; i < dy.numel(); ++i) dy.at(i) += dyh.at(i);
}

void attend_rows(const float* q_row, const float* keys, const float* vals, int64_t span,
                 int64_t d, int n_heads, float* out_row) {
    const int64_t hd = d / n_heads;
    const float scale = 1.0f / std::sqrt(float(hd));
    std::vector<float> sc(static_cast<size_t>(span));
    for (int h = 0; h < n_heads; ++h) {
        const int64_t off = int64_t(h) * hd;
        const float* qh = q_row + off;
        for (int64_t j = 0; j < span; ++j) {
            const float* kh = keys + j * d + off;
            float dot = 0.0f;
            for (int64_t l = 0; l < hd; ++l) dot += qh[l] * kh[l];
            sc[size_t(j)] = dot * scale;
        }
        float mx = sc[0];
        for (int64_t j = 1; j < span; ++j) mx = std::max(mx, sc[size_t(j)]);
        double sum = 0.0;
        for (int64_t j = 0; j < span; ++j) {
            sc[size_t(j)] = std::exp(sc[size_t(j)] - mx);
            sum += double(sc[size_t(j)]);
        }
        const float inv = float(1.0 / sum);
        float* oh = out_row + off;
        std::fill(oh, oh + hd, 0.0f);
        for (int64_t j = 0; j < span; ++j) {
            const float p = sc[size_t(j)] * inv;
            const float* vh = vals + j * d + off;
            for (int64_t l = 0; l < hd; ++l) oh[l] += p * vh[l];
        }
        tally_macs(uint64_t(2 * span * hd));  // scores + value gather
    }
}

Tensor attention_forward(const Tensor& x, AttentionWeights& w, KVCache* cache,
                         int64_t start_pos, AttentionActs* acts) {
    require_rank(x, 2, "attention_forward: x");
    const int64_t T = x.rows(), d = x.cols();
    if (d != w.d) throw std::invalid_argument("attention_forward: width mismatch");
    if (cache) {
        if (cache->keys.cols() != d) {
            throw std::invalid_argument("attention_forward: cache width mismatch");
        }
        if (start_pos != cache->len) {
            throw std::invalid_argument("attention_forward: start_pos must equal cached length");
        }
        if (cache->len + T > cache->capacity) {
            throw std::invalid_argument("attention_forward: sequence exceeds cache capacity");
        }
    } else if (start_pos != 0) {
        throw std::invalid_argument("attention_forward: nonzero start_pos requires a cache");
    }
    if (acts && cache) {
        throw std::invalid_argument("attention_forward: activation recording is cache-free");
    }

    Tensor q = matmul(x, w.w_q.value);
    Tensor k = matmul(x, w.w_k.value);
    Tensor v = matmul(x, w.w_v.value);
    rope_apply_inplace(q, start_pos, w.n_heads);
    rope_apply_inplace(k, start_pos, w.n_heads);

    const float* key_base = nullptr;
    const float* val_base = nullptr;
    if (cache) {
        for (int64_t t = 0; t < T; ++t) {
            auto ks = k.row(t);
            auto vs = v.row(t);
            std::copy(ks.begin(), ks.end(), cache->keys.row(cache->len + t).begin());
            std::copy(vs.begin(), vs.end(), cache->values.row(cache->len + t).begin());
        }
        cache->len += T;
        key_base = cache->keys.data();
        val_base = cache->values.data();
    } else {
        key_base = k.data();
        val_base = v.data();
    }

    const int n_heads = w.n_heads;
    const int64_t hd = w.head_dim();
    const float scale = 1.0f / std::sqrt(float(hd));
    Tensor y({T, d});
    if (acts) acts->probs.assign(size_t(n_heads), Tensor::zeros({T, T}));

    std::vector<float> sc;
    for (int h = 0; h < n_heads; ++h) {
        const int64_t off = int64_t(h) * hd;
        for (int64_t t = 0; t < T; ++t) {
            const int64_t span = start_pos + t + 1;
            sc.resize(size_t(span));
            const float* qh = q.row(t).data() + off;
            for (int64_t j = 0; j < span; ++j) {
                const float* kh = key_base + j * d + off;
                float dot = 0.0f;
                for (int64_t l = 0; l < hd; ++l) dot += qh[l] * kh[l];
                sc[size_t(j)] = dot * scale;
            }
            float mx = sc[0];
            for (int64_t j = 1; j < span; ++j) mx = std::max(mx, sc[size_t(j)]);
            double sum = 0.0;
            for (int64_t j = 0; j < span; ++j) {
                sc[size_t(j)] = std::exp(sc[size_t(j)] - mx);
                sum += double(sc[size_t(j)]);
            }
            const float inv = float(1.0 / sum);
            float* yh = y.row(t).data() + off;
            std::fill(yh, yh + hd, 0.0f);
            for (int64_t j = 0; j < span; ++j) {
                const float p = sc[size_t(j)] * inv;
                if (acts) acts->probs[size_t(h)].at(t, j) = p;
                const float* vh = val_base + j * d + off;
                for (int64_t l = 0; l < hd; ++l) yh[l] += p * vh[l];
            }
            tally_macs(uint64_t(2 * span * hd));
        }
    }

    Tensor out;
    if (auto* dense = std::get_if<DenseMix>(&w.mix)) {
        out = matmul(y, dense->w_o.value);
        for (int64_t t = 0; t < T; ++t) {
            float* r = out.row(t).data();
            for (int64_t j = 0; j < d; ++j) r[j] += dense->b_o.value.at(j);
        }
        tally_elementwise(uint64_t(T * d));
    } else {
        auto& had = std::get<HadamardMix>(w.mix);
        out = hadamard_mix_forward(y, had.alpha.value, had.beta.value, had.spec);
    }

    if (acts) {
        acts->x = x;
        acts->q = std::move(q);
        acts->k = std::move(k);
        acts->v = std::move(v);
        acts->y = std::move(y);
    }
    return out;
}

Tensor attention_backward(AttentionWeights& w, const AttentionActs& acts, const Tensor& g) {
    const int64_t T = acts.x.rows(), d = acts.x.cols();
    require_same_shape(acts.x, g, "attention_backward");

    Tensor dy = Tensor::zeros({T, d});
    if (auto* dense = std::get_if<DenseMix>(&w.mix)) {
        add_matmul_nt(dy, g, dense->w_o.value);            // G * W_o^T
        add_matmul_tn(dense->w_o.grad, acts.y, g);         // Y^T * G
        for (int64_t t = 0; t < T; ++t) {
            const float* gr = g.row(t).data();
            for (int64_t j = 0; j < d; ++j) dense->b_o.grad.at(j) += gr[j];
        }
    } else {
        auto& had = std::get<HadamardMix>(w.mix);
        hadamard_mix_backward(acts.y, had.alpha.value, had.spec, g, dy, had.alpha.grad,
                              had.beta.grad);
    }

    const int n_heads = w.n_heads;
    const int64_t hd = w.head_dim();
    const float scale = 1.0f / std::sqrt(float(hd));
    Tensor dq = Tensor::zeros({T, d});
    Tensor dk = Tensor::zeros({T, d});
    Tensor dv = Tensor::zeros({T, d});

    std::vector<float> dp, ds;
    for (int h = 0; h < n_heads; ++h) {
        const int64_t off = int64_t(h) * hd;
        const Tensor& probs = acts.probs[size_t(h)];
        for (int64_t t = 0; t < T; ++t) {
            const int64_t span = t + 1;
            dp.resize(size_t(span));
            ds.resize(size_t(span));
            const float* gy = dy.row(t).data() + off;
            for (int64_t j = 0; j < span; ++j) {
                const float* vh = acts.v.row(j).data() + off;
                float dot = 0.0f;
                for (int64_t l = 0; l < hd; ++l) dot += gy[l] * vh[l];
                dp[size_t(j)] = dot;
            }
            double inner = 0.0;
            for (int64_t j = 0; j < span; ++j) {
                inner += double(probs.at(t, j)) * double(dp[size_t(j)]);
            }
            for (int64_t j = 0; j < span; ++j) {
                ds[size_t(j)] = probs.at(t, j) * (dp[size_t(j)] - float(inner));
            }
            const float* qh = acts.q.row(t).data() + off;
            float* dqh = dq.row(t).data() + off;
            for (int64_t j = 0; j < span; ++j) {
                const float sds = scale * ds[size_t(j)];
                const float* kh = acts.k.row(j).data() + off;
                float* dkh = dk.row(j).data() + off;
                float* dvh = dv.row(j).data() + off;
                const float p = probs.at(t, j);
                for (int64_t l = 0; l < hd; ++l) {
                    dqh[l] += sds * kh[l];
                    dkh[l] += sds * qh[l];
                    dvh[l] += p * gy[l];
                }
            }
        }
    }

    // RoPE is an orthogonal per-pair rotation, so its backward is the inverse
    // rotation at the same position.
    rope_apply_inplace(dq, 0, n_heads, /*inverse=*/true);
    rope_apply_inplace(dk, 0, n_heads, /*inverse=*/true);

    add_matmul_tn(w.w_q.grad, acts.x, dq);
    add_matmul_tn(w.w_k.grad, acts.x, dk);
    add_matmul_tn(w.w_v.grad, acts.x, dv);

    Tensor dx = Tensor::zeros({T, d});
    add_matmul_nt(dx, dq, w.w_q.value);
    add_matmul_nt(dx, dk, w.w_k.value);
    add_matmul_nt(dx, dv, w.w_v.value);
    return dx;
}

}  // namespace hadamix
