#include "hadamix/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "hadamix/errors.hpp"
#include "hadamix/opcount.hpp"
#include "hadamix/wht.hpp"

namespace hadamix {

const char* to_string(AttentionVariant v) {
    return v == AttentionVariant::dense ? "dense" : "hadamard";
}

const char* to_string(NormKind k) {
    return k == NormKind::layernorm ? "layernorm" : "rmsnorm";
}

AttentionVariant variant_from_string(const std::string& s) {
    if (s == "dense") return AttentionVariant::dense;
    if (s == "hadamard") return AttentionVariant::hadamard;
    throw ConfigError("unknown attention variant '" + s + "' (expected dense or hadamard)");
}

NormKind norm_from_string(const std::string& s) {
    if (s == "layernorm") return NormKind::layernorm;
    if (s == "rmsnorm") return NormKind::rmsnorm;
    throw ConfigError("unknown norm '" + s + "' (expected layernorm or rmsnorm)");
}

int64_t ModelConfig::mlp_hidden() const {
    const int64_t raw = (8 * d_model + 2) / 3;  // ceil(8d/3)
    return (raw + 63) / 64 * 64;
}

void ModelConfig::validate() const {
    if (d_model <= 0 || n_layers <= 0 || n_heads <= 0) {
        throw ConfigError("model dimensions must be positive");
    }
    if (vocab_size < 2) throw ConfigError("vocab_size must be at least 2");
    if (max_seq_len <= 0) throw ConfigError("max_seq_len must be positive");
    if (d_model % n_heads != 0) throw ConfigError("n_heads must divide d_model");
    if ((d_model / n_heads) % 2 != 0) {
        throw ConfigError("head width must be even for rotary pairs");
    }
    if (variant == AttentionVariant::hadamard && !HadamardSpec::order_supported(d_model)) {
        throw ConfigError("d_model " + std::to_string(d_model) +
                          " has no Hadamard transform: supported widths are 2^m and 12*2^m");
    }
}

std::vector<ParamTensor*> NormWeights::params() {
    std::vector<ParamTensor*> out{&gain};
    if (kind == NormKind::layernorm) out.push_back(&bias);
    return out;
}

namespace {

Tensor gaussian_matrix(int64_t rows, int64_t cols, float stddev, Rng& rng) {
    Tensor t({rows, cols});
    for (int64_t i = 0; i < t.numel(); ++i) t.at(i) = stddev * float(rng.normal());
    return t;
}

NormWeights make_norm(NormKind kind, int64_t d, const std::string& prefix) {
    NormWeights nw;
    nw.kind = kind;
    nw.gain = ParamTensor(prefix + "gain", Tensor::full({d}, 1.0f), false);
    if (kind == NormKind::layernorm) {
        nw.bias = ParamTensor(prefix + "bias", Tensor::zeros({d}), false);
    }
    return nw;
}

Tensor norm_forward(NormWeights& nw, const Tensor& x, NormStash* stash) {
    if (nw.kind == NormKind::layernorm) {
        return layer_norm(x, nw.gain.value, nw.bias.value, stash);
    }
    return rms_norm(x, nw.gain.value, stash);
}

Tensor norm_backward(NormWeights& nw, const NormStash& stash, const Tensor& g) {
    Tensor dx;
    if (nw.kind == NormKind::layernorm) {
        layer_norm_backward(stash, nw.gain.value, g, dx, nw.gain.grad, nw.bias.grad);
    } else {
        rms_norm_backward(stash, nw.gain.value, g, dx, nw.gain.grad);
    }
    return dx;
}

void add_into(Tensor& acc, const Tensor& inc) {
    for (int64_t i = 0; i < acc.numel(); ++i) acc.at(i) += inc.at(i);
}

}  // namespace

TransformerModel TransformerModel::init(const ModelConfig& cfg, uint64_t seed) {
    cfg.validate();
    TransformerModel m;
    m.cfg = cfg;
    Rng rng(seed);
    const int64_t d = cfg.d_model;
    const int64_t h = cfg.mlp_hidden();
    m.embed = ParamTensor("embed", gaussian_matrix(cfg.vocab_size, d, 0.02f, rng), true);
    m.blocks.reserve(size_t(cfg.n_layers));
    for (int l = 0; l < cfg.n_layers; ++l) {
        const std::string pre = "blocks." + std::to_string(l) + ".";
        Block blk;
        blk.norm1 = make_norm(cfg.norm, d, pre + "norm1.");
        blk.attn = cfg.variant == AttentionVariant::dense
                       ? AttentionWeights::make_dense(d, cfg.n_heads, rng, pre + "attn.")
                       : AttentionWeights::make_hadamard(d, cfg.n_heads, rng, pre + "attn.");
        blk.norm2 = make_norm(cfg.norm, d, pre + "norm2.");
        blk.mlp.w_gate = ParamTensor(pre + "mlp.w_gate", gaussian_matrix(d, h, 0.02f, rng), true);
        blk.mlp.w_up = ParamTensor(pre + "mlp.w_up", gaussian_matrix(d, h, 0.02f, rng), true);
        blk.mlp.w_down = ParamTensor(pre + "mlp.w_down", gaussian_matrix(h, d, 0.02f, rng), true);
        m.blocks.push_back(std::move(blk));
    }
    m.final_norm = make_norm(cfg.norm, d, "final_norm.");
    return m;
}

std::vector<ParamTensor*> TransformerModel::params() {
    std::vector<ParamTensor*> out;
    out.push_back(&embed);
    for (Block& blk : blocks) {
        for (auto* p : blk.norm1.params()) out.push_back(p);
        for (auto* p : blk.attn.params()) out.push_back(p);
        for (auto* p : blk.norm2.params()) out.push_back(p);
        out.push_back(&blk.mlp.w_gate);
        out.push_back(&blk.mlp.w_up);
        out.push_back(&blk.mlp.w_down);
    }
    for (auto* p : final_norm.params()) out.push_back(p);
    return out;
}

std::vector<const ParamTensor*> TransformerModel::params() const {
    auto mut = const_cast<TransformerModel*>(this)->params();
    return {mut.begin(), mut.end()};
}

int64_t TransformerModel::param_count() const {
    int64_t n = 0;
    for (const auto* p : params()) n += p->numel();
    return n;
}

void TransformerModel::zero_grads() {
    for (auto* p : params()) p->zero_grad();
}

std::vector<KVCache> TransformerModel::make_caches(int64_t capacity) const {
    std::vector<KVCache> caches;
    caches.reserve(size_t(cfg.n_layers));
    for (int l = 0; l < cfg.n_layers; ++l) caches.emplace_back(capacity, cfg.d_model);
    return caches;
}

Tensor model_forward(TransformerModel& m, std::span<const int32_t> tokens,
                     std::vector<KVCache>* caches, int64_t start_pos, ModelActs* acts) {
    const ModelConfig& cfg = m.cfg;
    const int64_t T = int64_t(tokens.size());
    if (T == 0) throw std::invalid_argument("model_forward: empty token sequence");
    if (start_pos + T > cfg.max_seq_len) {
        throw std::invalid_argument("model_forward: sequence exceeds max_seq_len");
    }
    if (caches && int64_t(caches->size()) != cfg.n_layers) {
        throw std::invalid_argument("model_forward: cache count != layer count");
    }
    if (!caches && start_pos != 0) {
        throw std::invalid_argument("model_forward: nonzero start_pos requires caches");
    }
    for (int64_t t = 0; t < T; ++t) {
        if (tokens[size_t(t)] < 0 || tokens[size_t(t)] >= cfg.vocab_size) {
            throw std::invalid_argument("model_forward: token id out of range");
        }
    }

    const int64_t d = cfg.d_model;
    const int64_t h = cfg.mlp_hidden();
    Tensor x({T, d});
    for (int64_t t = 0; t < T; ++t) {
        auto src = m.embed.value.row(tokens[size_t(t)]);
        std::copy(src.begin(), src.end(), x.row(t).begin());
    }
    if (acts) {
        acts->tokens.assign(tokens.begin(), tokens.end());
        acts->blocks.assign(size_t(cfg.n_layers), BlockActs{});
    }

    for (int l = 0; l < cfg.n_layers; ++l) {
        Block& blk = m.blocks[size_t(l)];
        BlockActs* ba = acts ? &acts->blocks[size_t(l)] : nullptr;
        Tensor normed1 = norm_forward(blk.norm1, x, ba ? &ba->n1 : nullptr);
        KVCache* cache = caches ? &(*caches)[size_t(l)] : nullptr;
        Tensor a = attention_forward(normed1, blk.attn, cache, start_pos,
                                     ba ? &ba->attn : nullptr);
        add_into(x, a);
        Tensor normed2 = norm_forward(blk.norm2, x, ba ? &ba->n2 : nullptr);
        Tensor gate_pre = matmul(normed2, blk.mlp.w_gate.value);
        Tensor up = matmul(normed2, blk.mlp.w_up.value);
        Tensor silu_out = silu(gate_pre);
        Tensor gated = mul(silu_out, up);
        tally_elementwise(uint64_t(2 * T * h));  // gate activation + product
        Tensor mlp_out = matmul(gated, blk.mlp.w_down.value);
        add_into(x, mlp_out);
        if (ba) {
            ba->normed2 = std::move(normed2);
            ba->gate_pre = std::move(gate_pre);
            ba->silu_out = std::move(silu_out);
            ba->up = std::move(up);
            ba->gated = std::move(gated);
        }
    }

    Tensor fin = norm_forward(m.final_norm, x, acts ? &acts->fin : nullptr);
    Tensor logits = Tensor::zeros({T, cfg.vocab_size});
    add_matmul_nt(logits, fin, m.embed.value);  // tied output projection
    if (acts) acts->final_out = std::move(fin);
    return logits;
}

double cross_entropy_loss(const Tensor& logits, std::span<const int32_t> targets,
                          Tensor* dlogits) {
    require_rank(logits, 2, "cross_entropy_loss");
    const int64_t T = logits.rows(), V = logits.cols();
    if (int64_t(targets.size()) != T) {
        throw std::invalid_argument("cross_entropy_loss: target count mismatch");
    }
    if (dlogits) *dlogits = Tensor({T, V});
    double total = 0.0;
    const double inv_t = 1.0 / double(T);
    for (int64_t t = 0; t < T; ++t) {
        const int32_t y = targets[size_t(t)];
        if (y < 0 || y >= V) {
            throw std::invalid_argument("cross_entropy_loss: target id out of range");
        }
        const float* zr = logits.row(t).data();
        float mx = zr[0];
        for (int64_t j = 1; j < V; ++j) mx = std::max(mx, zr[j]);
        double sum = 0.0;
        for (int64_t j = 0; j < V; ++j) sum += std::exp(double(zr[j]) - double(mx));
        const double lse = std::log(sum) + double(mx);
        total += lse - double(zr[y]);
        if (dlogits) {
            float* dr = dlogits->row(t).data();
            for (int64_t j = 0; j < V; ++j) {
                dr[j] = float(std::exp(double(zr[j]) - lse) * inv_t);
            }
            dr[y] -= float(inv_t);
        }
    }
    return total * inv_t;
}

void model_backward(TransformerModel& m, const ModelActs& acts, const Tensor& dlogits) {
    const ModelConfig& cfg = m.cfg;
    const int64_t T = dlogits.rows();
    const int64_t d = cfg.d_model;
    const int64_t h = cfg.mlp_hidden();
    if (dlogits.cols() != cfg.vocab_size || int64_t(acts.tokens.size()) != T) {
        throw std::invalid_argument("model_backward: activation/gradient shape mismatch");
    }

    Tensor dfin = Tensor::zeros({T, d});
    add_matmul(dfin, dlogits, m.embed.value);              // through the tied head
    add_matmul_tn(m.embed.grad, dlogits, acts.final_out);
    Tensor dx = norm_backward(m.final_norm, acts.fin, dfin);

    for (int l = cfg.n_layers - 1; l >= 0; --l) {
        Block& blk = m.blocks[size_t(l)];
        const BlockActs& ba = acts.blocks[size_t(l)];

        Tensor dgated = Tensor::zeros({T, h});
        add_matmul_nt(dgated, dx, blk.mlp.w_down.value);
        add_matmul_tn(blk.mlp.w_down.grad, ba.gated, dx);
        Tensor dsilu = mul(dgated, ba.up);
        Tensor dup = mul(dgated, ba.silu_out);
        Tensor dgate_pre = silu_backward(ba.gate_pre, dsilu);
        Tensor dnormed2 = Tensor::zeros({T, d});
        add_matmul_nt(dnormed2, dgate_pre, blk.mlp.w_gate.value);
        add_matmul_nt(dnormed2, dup, blk.mlp.w_up.value);
        add_matmul_tn(blk.mlp.w_gate.grad, ba.normed2, dgate_pre);
        add_matmul_tn(blk.mlp.w_up.grad, ba.normed2, dup);
        add_into(dx, norm_backward(blk.norm2, ba.n2, dnormed2));

        Tensor dnormed1 = attention_backward(blk.attn, ba.attn, dx);
        add_into(dx, norm_backward(blk.norm1, ba.n1, dnormed1));
    }

    for (int64_t t = 0; t < T; ++t) {
        float* er = m.embed.grad.row(acts.tokens[size_t(t)]).data();
        const float* dr = dx.row(t).data();
        for (int64_t j = 0; j < d; ++j) er[j] += dr[j];
    }
}

std::vector<int32_t> generate(TransformerModel& m, std::span<const int32_t> prompt,
                              int64_t n_new, float temperature, uint64_t seed) {
    if (prompt.empty()) throw std::invalid_argument("generate: prompt must be non-empty");
    if (n_new < 0) throw std::invalid_argument("generate: negative token count");
    if (temperature < 0.0f) throw std::invalid_argument("generate: temperature must be >= 0");
    const int64_t total = int64_t(prompt.size()) + n_new;
    if (total > m.cfg.max_seq_len) {
        throw std::invalid_argument("generate: prompt + new tokens exceed max_seq_len");
    }
    std::vector<int32_t> out(prompt.begin(), prompt.end());
    if (n_new == 0) return out;

    auto caches = m.make_caches(total);
    Rng rng(seed);
    Tensor logits = model_forward(m, prompt, &caches, 0);
    const int64_t V = m.cfg.vocab_size;
    std::vector<double> p(static_cast<size_t>(V));
    for (int64_t i = 0; i < n_new; ++i) {
        const float* z = logits.row(logits.rows() - 1).data();
        int32_t next = 0;
        if (temperature == 0.0f) {
            float best = z[0];
            for (int64_t j = 1; j < V; ++j) {
                if (z[j] > best) {  // ties keep the lowest id
                    best = z[j];
                    next = int32_t(j);
                }
            }
        } else {
            const double inv_temp = 1.0 / double(temperature);
            double mx = double(z[0]) * inv_temp;
            for (int64_t j = 1; j < V; ++j) mx = std::max(mx, double(z[j]) * inv_temp);
            double sum = 0.0;
            for (int64_t j = 0; j < V; ++j) {
                p[size_t(j)] = std::exp(double(z[j]) * inv_temp - mx);
                sum += p[size_t(j)];
            }
            const double u = rng.uniform() * sum;
            double cum = 0.0;
            next = int32_t(V - 1);  // numerical tail fallback
            for (int64_t j = 0; j < V; ++j) {
                cum += p[size_t(j)];
                if (u < cum) {
                    next = int32_t(j);
                    break;
                }
            }
        }
        out.push_back(next);
        if (int64_t(out.size()) == total) break;
        const int32_t tok[1] = {next};
        logits = model_forward(m, std::span<const int32_t>(tok, 1), &caches,
                               int64_t(out.size()) - 1);
    }
    return out;
}

}  // namespace hadamix
